#include <CLI11.hpp>
#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "vistree/bandit.hpp"
#include "vistree/data.hpp"
#include "vistree/errors.hpp"
#include "vistree/ood.hpp"
#include "vistree/predictive.hpp"
#include "vistree/random.hpp"
#include "vistree/serialize.hpp"
#include "vistree/vsgbm.hpp"
#include "vistree/vst_training.hpp"

namespace {

using namespace vistree;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  return out;
}

struct CommonTrainFlags {
  int depth = 3;
  std::string leaf = "linear";
  double beta = 10.0;
  int rank = 5;
  double prior_scale = 1.0;
  double learning_rate = 1e-3;
  int steps = 5000;
  int batch = 256;
  int mc_samples = 2;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--depth", depth, "Tree depth");
    cmd->add_option("--leaf", leaf, "Leaf kind")
        ->check(CLI::IsMember({"constant", "linear"}));
    cmd->add_option("--beta", beta, "Gating inverse temperature");
    cmd->add_option("--rank", rank, "Posterior low-rank factor columns");
    cmd->add_option("--prior-scale", prior_scale, "Isotropic prior variance");
    cmd->add_option("--lr", learning_rate, "Adam learning rate");
    cmd->add_option("--steps", steps, "Optimization steps");
    cmd->add_option("--batch", batch, "Minibatch size");
    cmd->add_option("--mc-samples", mc_samples, "Monte Carlo samples per step");
  }

  TrainConfig to_config(unsigned long long seed) const {
    TrainConfig config;
    config.depth = depth;
    config.leaf_kind = leaf == "constant" ? LeafKind::Constant : LeafKind::Linear;
    config.beta = beta;
    config.rank = rank;
    config.prior_scale = prior_scale;
    config.learning_rate = learning_rate;
    config.steps = steps;
    config.batch_size = batch;
    config.mc_samples_train = mc_samples;
    config.seed = seed;
    return config;
  }
};

Dataset load_dataset(const std::string& path, const std::string& target,
                     const std::string& schema_path) {
  std::vector<std::string> categorical;
  if (!schema_path.empty()) {
    categorical = read_schema_hints(schema_path);
  }
  return load_table(path, target, categorical);
}

void check_feature_dim(Eigen::Index model_dim, Eigen::Index data_dim) {
  if (model_dim != data_dim) {
    throw DataError("model expects " + std::to_string(model_dim) + " features, data has " +
                    std::to_string(data_dim));
  }
}

Eigen::Index model_feature_dim(const AnyModel& model) {
  if (const auto* vst = std::get_if<VstModel>(&model)) {
    return vst->spec.feature_dim;
  }
  return std::get<VsgbmModel>(model).feature_stats.mean.size();
}

void write_trace_log(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out = open_output(path);
  out << "step,elbo,data_fit,kl\n";
  for (const TraceRow& row : trace) {
    out << row.step << ',' << format_double(row.elbo) << ',' << format_double(row.data_fit)
        << ',' << format_double(row.kl) << '\n';
  }
}

// ---- train ----

struct TrainArgs {
  std::string data_path;
  std::string target = "y";
  std::string schema_path;
  std::string out_path;
  std::string log_path;
  CommonTrainFlags train;
  unsigned long long seed = 0;
  int trees = 1;
  double a_sigma = 3.0;
  double b_sigma = 1.0;
  double weak_noise = 1.0;
  double shrinkage = 1.0;
};

int run_train(const TrainArgs& args) {
  const Dataset data = load_dataset(args.data_path, args.target, args.schema_path);
  if (args.trees < 1) {
    throw std::invalid_argument("--trees must be at least 1");
  }
  if (args.trees == 1) {
    TrainConfig config = args.train.to_config(args.seed);
    config.output_mode = OutputMode::Density;
    const FitOutput fit = fit_vst(data.features, data.target, config);
    save_model(args.out_path, fit.model);
    if (!args.log_path.empty()) {
      write_trace_log(args.log_path, fit.trace);
    }
    std::cout << "model_kind=vst\n";
    std::cout << "initial_elbo=" << format_double(fit.initial_elbo) << '\n';
    std::cout << "final_elbo=" << format_double(fit.final_elbo) << '\n';
  } else {
    VsgbmConfig config;
    config.num_trees = args.trees;
    config.a_sigma = args.a_sigma;
    config.b_sigma = args.b_sigma;
    config.weak_learner_noise_scale = args.weak_noise;
    config.shrinkage = args.shrinkage;
    config.tree = args.train.to_config(args.seed);
    const VsgbmFitOutput fit = fit_vsgbm(data.features, data.target, config);
    save_model(args.out_path, fit.model);
    if (!args.log_path.empty()) {
      write_trace_log(args.log_path, fit.trace);
    }
    std::cout << "model_kind=vsgbm\n";
    std::cout << "noise_posterior_shape=" << format_double(fit.model.noise_posterior.shape)
              << '\n';
    std::cout << "noise_posterior_scale=" << format_double(fit.model.noise_posterior.scale)
              << '\n';
  }
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string model_path;
  std::string data_path;
  std::string target = "y";
  std::string schema_path;
  Eigen::Index samples = 256;
  unsigned long long seed = 0;
  bool original_units = false;
  std::string per_row_path;
};

int run_eval(const EvalArgs& args) {
  const AnyModel model = load_model(args.model_path);
  const Dataset data = load_dataset(args.data_path, args.target, args.schema_path);
  check_feature_dim(model_feature_dim(model), data.cols());

  const Metrics metrics = std::visit(
      [&](const auto& m) {
        return regression_metrics(m, data.features, data.target, args.samples, args.seed,
                                  args.original_units);
      },
      model);
  std::cout << "mean_loglik=" << format_double(metrics.mean_loglik) << '\n';
  std::cout << "rmse=" << format_double(metrics.rmse) << '\n';
  std::cout << "mean_epistemic_std=" << format_double(metrics.mean_epistemic_std) << '\n';

  if (!args.per_row_path.empty()) {
    const PredictiveSummary summary = std::visit(
        [&](const auto& m) {
          return predictive_summary(m, data.features, data.target, args.samples, args.seed,
                                    args.original_units);
        },
        model);
    std::ofstream out = open_output(args.per_row_path);
    out << "predictive_mean,predictive_std,epistemic_std,target\n";
    const double shift = args.original_units ? 0.0 : std::visit(
        [](const auto& m) { return m.target_stats.mean; }, model);
    const double scale = args.original_units ? 1.0 : std::visit(
        [](const auto& m) { return m.target_stats.std; }, model);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      out << format_double(summary.predictive_mean[i]) << ','
          << format_double(summary.predictive_std[i]) << ','
          << format_double(summary.epistemic_std[i]) << ','
          << format_double((data.target[i] - shift) / scale) << '\n';
    }
  }
  return kExitOk;
}

// ---- ood ----

struct OodArgs {
  std::string model_path;
  std::string id_path;
  std::string ood_path;
  std::string target = "y";
  std::string schema_path;
  Eigen::Index samples = 256;
  unsigned long long seed = 0;
  std::string scores_path;
};

int run_ood(const OodArgs& args) {
  const AnyModel model = load_model(args.model_path);
  const Dataset id_data = load_dataset(args.id_path, args.target, args.schema_path);
  const Dataset ood_data = load_dataset(args.ood_path, args.target, args.schema_path);
  check_feature_dim(model_feature_dim(model), id_data.cols());
  check_feature_dim(model_feature_dim(model), ood_data.cols());

  const OodReport report = std::visit(
      [&](const auto& m) {
        return ood_report(m, id_data.features, ood_data.features, args.samples, args.seed);
      },
      model);
  std::cout << "auroc=" << format_double(report.auroc) << '\n';
  std::cout << "threshold=" << format_double(report.best_threshold) << '\n';
  std::cout << "accuracy=" << format_double(report.threshold_accuracy) << '\n';

  if (!args.scores_path.empty()) {
    std::ofstream out = open_output(args.scores_path);
    out << "score,label\n";
    for (double s : report.id_scores) {
      out << format_double(s) << ",id\n";
    }
    for (double s : report.ood_scores) {
      out << format_double(s) << ",ood\n";
    }
  }
  return kExitOk;
}

// ---- bandit ----

struct BanditArgs {
  std::string env = "exploration";
  std::string agent = "vst";
  long horizon = 5000;
  unsigned long long seed = 0;
  std::string trace_path;
  int arms = 8;
  double alpha = 0.2;
  double beta_env = 50.0;
  double delta = 0.01;
  Eigen::Index dim = 4;
  std::string replay_path;
  int retrain_every = 50;
  bool no_warm_start = false;
  CommonTrainFlags train;
};

int run_bandit_cmd(const BanditArgs& args) {
  std::unique_ptr<BanditEnv> env;
  if (args.env == "exploration") {
    auto e = std::make_unique<ExplorationEnv>(ExplorationEnv::standard());
    e->alpha = args.alpha;
    e->beta_env = args.beta_env;
    e->noise_std = args.delta;
    e->offsets = Eigen::VectorXd::LinSpaced(args.arms, -0.9, 0.9);
    env = std::move(e);
  } else if (args.env == "portfolio") {
    auto e = std::make_unique<LinearPortfolioEnv>(
        LinearPortfolioEnv::make(args.arms, args.dim, args.seed));
    e->noise_std = args.delta;
    env = std::move(e);
  } else {
    if (args.replay_path.empty()) {
      throw std::invalid_argument("--env replay requires --replay-file");
    }
    std::vector<std::string> header;
    const Eigen::MatrixXd table = load_numeric_table(args.replay_path, &header);
    std::vector<Eigen::Index> reward_cols;
    std::vector<Eigen::Index> context_cols;
    for (size_t j = 0; j < header.size(); ++j) {
      if (header[j].rfind("reward", 0) == 0) {
        reward_cols.push_back(static_cast<Eigen::Index>(j));
      } else {
        context_cols.push_back(static_cast<Eigen::Index>(j));
      }
    }
    if (reward_cols.empty() || context_cols.empty()) {
      throw DataError("replay table needs context columns plus reward-prefixed columns");
    }
    Eigen::MatrixXd contexts(table.rows(), static_cast<Eigen::Index>(context_cols.size()));
    Eigen::MatrixXd rewards(table.rows(), static_cast<Eigen::Index>(reward_cols.size()));
    for (size_t j = 0; j < context_cols.size(); ++j) {
      contexts.col(static_cast<Eigen::Index>(j)) = table.col(context_cols[j]);
    }
    for (size_t j = 0; j < reward_cols.size(); ++j) {
      rewards.col(static_cast<Eigen::Index>(j)) = table.col(reward_cols[j]);
    }
    env = std::make_unique<ReplayEnv>(std::move(contexts), std::move(rewards));
  }

  AgentConfig agent;
  agent.policy = args.agent == "random"  ? PolicyKind::Random
                 : args.agent == "oracle" ? PolicyKind::Oracle
                                          : PolicyKind::Vst;
  agent.retrain_every = args.retrain_every;
  agent.warm_start = !args.no_warm_start;
  agent.train = args.train.to_config(args.seed);
  agent.train.output_mode = OutputMode::Density;

  const BanditTrace trace = run_bandit(*env, agent, args.horizon, args.seed);
  std::cout << "horizon=" << trace.horizon() << '\n';
  std::cout << "cumulative_regret=" << format_double(trace.final_regret()) << '\n';

  if (!args.trace_path.empty()) {
    std::ofstream out = open_output(args.trace_path);
    out << "step,arm,reward,instant_regret,cumulative_regret\n";
    for (long t = 0; t < trace.horizon(); ++t) {
      out << t << ',' << trace.arm[static_cast<size_t>(t)] << ','
          << format_double(trace.reward[t]) << ',' << format_double(trace.instant_regret[t])
          << ',' << format_double(trace.cumulative_regret[t]) << '\n';
    }
  }
  return kExitOk;
}

// ---- sample ----

struct SampleArgs {
  std::string model_path;
  std::string out_path;
  double grid_min = -3.0;
  double grid_max = 3.0;
  Eigen::Index grid_points = 200;
  Eigen::Index samples = 10;
  unsigned long long seed = 0;
  int feature = -1;
};

int run_sample(const SampleArgs& args) {
  const AnyModel model = load_model(args.model_path);
  const Eigen::Index p = model_feature_dim(model);
  Eigen::Index feature = args.feature;
  if (p == 1 && feature < 0) {
    feature = 0;
  }
  if (feature < 0) {
    throw std::invalid_argument("model has " + std::to_string(p) +
                                " features; choose one with --feature");
  }
  if (feature >= p) {
    throw std::invalid_argument("--feature index out of range");
  }
  if (args.grid_points < 2 || args.samples < 1) {
    throw std::invalid_argument("need --grid-points >= 2 and --samples >= 1");
  }

  const Eigen::VectorXd grid =
      Eigen::VectorXd::LinSpaced(args.grid_points, args.grid_min, args.grid_max);
  const Eigen::VectorXd base = std::visit(
      [](const auto& m) { return Eigen::VectorXd(m.feature_stats.mean); }, model);
  Eigen::MatrixXd X(args.grid_points, p);
  X.rowwise() = base.transpose();
  X.col(feature) = grid;

  Eigen::MatrixXd draws(args.grid_points, args.samples);
  if (const auto* vst = std::get_if<VstModel>(&model)) {
    const Eigen::MatrixXd Xs = apply_scaler(vst->feature_stats, X);
    RandomStream rng(args.seed, "sample");
    for (Eigen::Index s = 0; s < args.samples; ++s) {
      const Eigen::VectorXd eps_diag = rng.normal_vector(vst->posterior.dim());
      const Eigen::VectorXd eps_lowrank = rng.normal_vector(vst->posterior.rank());
      const Eigen::VectorXd theta = sample(vst->posterior, eps_diag, eps_lowrank);
      for (Eigen::Index i = 0; i < args.grid_points; ++i) {
        draws(i, s) = predict_mean(vst->spec, theta, Xs.row(i).transpose()) *
                          vst->target_stats.std +
                      vst->target_stats.mean;
      }
    }
  } else {
    const auto& gbm = std::get<VsgbmModel>(model);
    for (Eigen::Index s = 0; s < args.samples; ++s) {
      draws.col(s) =
          vsgbm_function_sample(gbm, X, stream_key(args.seed, "sample", static_cast<uint64_t>(s)))
              .mean;
    }
  }

  std::ofstream out = open_output(args.out_path);
  out << "x";
  for (Eigen::Index s = 0; s < args.samples; ++s) {
    out << ",f" << (s + 1);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < args.grid_points; ++i) {
    out << format_double(grid[i]);
    for (Eigen::Index s = 0; s < args.samples; ++s) {
      out << ',' << format_double(draws(i, s));
    }
    out << '\n';
  }
  return kExitOk;
}

// ---- synth ----

struct SynthArgs {
  std::string name = "step";
  Eigen::Index n = 500;
  double noise = 0.1;
  unsigned long long seed = 0;
  std::string out_path;
};

int run_synth(const SynthArgs& args) {
  const Dataset data = synth(parse_synth_name(args.name), args.n, args.noise, args.seed);
  write_table(args.out_path, data);
  std::cout << "rows=" << data.rows() << '\n';
  std::cout << "cols=" << data.cols() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational soft trees and boosted soft-tree ensembles for probabilistic "
               "regression"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Fit a model and write it to disk");
  train_cmd->add_option("--data", train_args.data_path, "Training table")->required();
  train_cmd->add_option("--target", train_args.target, "Target column name");
  train_cmd->add_option("--schema", train_args.schema_path, "Categorical-column sidecar");
  train_cmd->add_option("--out", train_args.out_path, "Model file to write")->required();
  train_cmd->add_option("--log", train_args.log_path, "Training log table");
  train_args.train.add_to(train_cmd);
  train_cmd->add_option("--seed", train_args.seed, "Random seed");
  train_cmd->add_option("--trees", train_args.trees, "Ensemble size; above 1 trains a vsgbm");
  train_cmd->add_option("--a-sigma", train_args.a_sigma, "Noise prior shape");
  train_cmd->add_option("--b-sigma", train_args.b_sigma, "Noise prior scale");
  train_cmd->add_option("--weak-noise", train_args.weak_noise, "Weak-learner likelihood std");
  train_cmd->add_option("--shrinkage", train_args.shrinkage, "Scale on trees after the first");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Report metrics of a model on a dataset");
  eval_cmd->add_option("--model", eval_args.model_path, "Model file")->required();
  eval_cmd->add_option("--data", eval_args.data_path, "Evaluation table")->required();
  eval_cmd->add_option("--target", eval_args.target, "Target column name");
  eval_cmd->add_option("--schema", eval_args.schema_path, "Categorical-column sidecar");
  eval_cmd->add_option("--samples", eval_args.samples, "Posterior samples");
  eval_cmd->add_option("--seed", eval_args.seed, "Random seed");
  eval_cmd->add_flag("--original-units", eval_args.original_units,
                     "Report in original target units");
  eval_cmd->add_option("--per-row", eval_args.per_row_path, "Per-row prediction table");

  OodArgs ood_args;
  CLI::App* ood_cmd = app.add_subcommand("ood", "Score OOD separation by epistemic uncertainty");
  ood_cmd->add_option("--model", ood_args.model_path, "Model file")->required();
  ood_cmd->add_option("--id", ood_args.id_path, "In-distribution table")->required();
  ood_cmd->add_option("--ood", ood_args.ood_path, "Out-of-distribution table")->required();
  ood_cmd->add_option("--target", ood_args.target, "Target column name");
  ood_cmd->add_option("--schema", ood_args.schema_path, "Categorical-column sidecar");
  ood_cmd->add_option("--samples", ood_args.samples, "Posterior samples");
  ood_cmd->add_option("--seed", ood_args.seed, "Random seed");
  ood_cmd->add_option("--scores", ood_args.scores_path, "Score dump table");

  BanditArgs bandit_args;
  CLI::App* bandit_cmd = app.add_subcommand("bandit", "Run a Thompson-sampling bandit loop");
  bandit_cmd->add_option("--env", bandit_args.env, "Environment")
      ->check(CLI::IsMember({"exploration", "portfolio", "replay"}));
  bandit_cmd->add_option("--agent", bandit_args.agent, "Policy")
      ->check(CLI::IsMember({"vst", "random", "oracle"}));
  bandit_cmd->add_option("--horizon", bandit_args.horizon, "Steps to play");
  bandit_cmd->add_option("--seed", bandit_args.seed, "Random seed");
  bandit_cmd->add_option("--trace", bandit_args.trace_path, "Trace table to write");
  bandit_cmd->add_option("--arms", bandit_args.arms, "Number of arms");
  bandit_cmd->add_option("--alpha", bandit_args.alpha, "Bump half-width");
  bandit_cmd->add_option("--beta-env", bandit_args.beta_env, "Bump sharpness");
  bandit_cmd->add_option("--delta", bandit_args.delta, "Reward noise std");
  bandit_cmd->add_option("--dim", bandit_args.dim, "Portfolio context dimension");
  bandit_cmd->add_option("--replay-file", bandit_args.replay_path, "Replay table");
  bandit_cmd->add_option("--retrain-every", bandit_args.retrain_every, "Steps between retrains");
  bandit_cmd->add_flag("--no-warm-start", bandit_args.no_warm_start,
                       "Reinitialize posteriors on retrain");
  bandit_args.train.add_to(bandit_cmd);
  bandit_args.train.steps = 300;
  bandit_args.train.batch = 64;

  SampleArgs sample_args;
  CLI::App* sample_cmd =
      app.add_subcommand("sample", "Emit posterior function draws on a 1-D grid");
  sample_cmd->add_option("--model", sample_args.model_path, "Model file")->required();
  sample_cmd->add_option("--out", sample_args.out_path, "Output table")->required();
  sample_cmd->add_option("--grid-min", sample_args.grid_min, "Grid start");
  sample_cmd->add_option("--grid-max", sample_args.grid_max, "Grid end");
  sample_cmd->add_option("--grid-points", sample_args.grid_points, "Grid size");
  sample_cmd->add_option("--samples", sample_args.samples, "Function draws");
  sample_cmd->add_option("--seed", sample_args.seed, "Random seed");
  sample_cmd->add_option("--feature", sample_args.feature, "Feature index to sweep");

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  synth_cmd->add_option("--name", synth_args.name, "Generator")
      ->check(CLI::IsMember({"step", "gap_blobs", "tail_line", "friedman", "linear"}));
  synth_cmd->add_option("--n", synth_args.n, "Rows");
  synth_cmd->add_option("--noise", synth_args.noise, "Noise std");
  synth_cmd->add_option("--seed", synth_args.seed, "Random seed");
  synth_cmd->add_option("--out", synth_args.out_path, "Output table")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) {
      return run_train(train_args);
    }
    if (*eval_cmd) {
      return run_eval(eval_args);
    }
    if (*ood_cmd) {
      return run_ood(ood_args);
    }
    if (*bandit_cmd) {
      return run_bandit_cmd(bandit_args);
    }
    if (*sample_cmd) {
      return run_sample(sample_args);
    }
    if (*synth_cmd) {
      return run_synth(synth_args);
    }
    std::cerr << "no subcommand selected\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
