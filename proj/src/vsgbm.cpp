#include "vistree/vsgbm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "vistree/errors.hpp"
#include "vistree/random.hpp"

namespace vistree {

void VsgbmConfig::validate() const {
  if (num_trees < 1) {
    throw std::invalid_argument("num_trees must be at least 1");
  }
  if (a_sigma <= 1.0 || b_sigma <= 0.0) {
    throw std::invalid_argument("noise prior needs a_sigma > 1 and b_sigma > 0");
  }
  if (weak_learner_noise_scale <= 0.0 || shrinkage <= 0.0) {
    throw std::invalid_argument("weak_learner_noise_scale and shrinkage must be positive");
  }
  tree.validate();
}

namespace {

ScalerStats identity_scaler(Eigen::Index p) {
  ScalerStats stats;
  stats.mean = Eigen::VectorXd::Zero(p);
  stats.std = Eigen::VectorXd::Ones(p);
  stats.constant.assign(static_cast<size_t>(p), 0);
  return stats;
}

// Adds one sampled tree mean to `total`, scaled by `weight`.
void add_sampled_tree(const VstModel& tree, const Eigen::Ref<const Eigen::MatrixXd>& X_std,
                      RandomStream& rng, double weight, Eigen::VectorXd& total) {
  const Eigen::VectorXd eps_diag = rng.normal_vector(tree.posterior.dim());
  const Eigen::VectorXd eps_lowrank = rng.normal_vector(tree.posterior.rank());
  const Eigen::VectorXd theta = sample(tree.posterior, eps_diag, eps_lowrank);
  for (Eigen::Index i = 0; i < X_std.rows(); ++i) {
    total[i] += weight * predict_mean(tree.spec, theta, X_std.row(i).transpose());
  }
}

}  // namespace

VsgbmFitOutput fit_vsgbm(const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::VectorXd>& y, const VsgbmConfig& config) {
  config.validate();
  if (X.rows() < 2 || X.rows() != y.size()) {
    throw std::invalid_argument("fit_vsgbm needs at least 2 rows with matching target length");
  }
  if (!X.allFinite() || !y.allFinite()) {
    throw std::invalid_argument("training data contains non-finite values");
  }
  const ScalerStats feature_stats = fit_scaler(X);
  const ScalarStats target_stats = fit_scalar(y);
  if (target_stats.constant) {
    throw std::invalid_argument("target column has zero variance");
  }
  const Eigen::MatrixXd Xs = apply_scaler(feature_stats, X);
  const Eigen::VectorXd ys = apply_scalar(target_stats, y);
  const Eigen::Index n = Xs.rows();

  VsgbmFitOutput out;
  VsgbmModel& model = out.model;
  model.a_sigma = config.a_sigma;
  model.b_sigma = config.b_sigma;
  model.shrinkage = config.shrinkage;
  model.feature_stats = feature_stats;
  model.target_stats = target_stats;
  model.trees.reserve(static_cast<size_t>(config.num_trees));

  Eigen::VectorXd residual = ys;
  for (int t = 1; t <= config.num_trees; ++t) {
    TrainConfig tree_config = config.tree;
    tree_config.output_mode = OutputMode::MeanOnly;
    if (t > 1) {
      tree_config.seed = stream_key(config.tree.seed, "boost-round", static_cast<uint64_t>(t));
    }
    FitOutput fit;
    try {
      fit = fit_core(Xs, residual, tree_config, config.weak_learner_noise_scale);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " while fitting tree " + std::to_string(t));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string(e.what()) + " while fitting tree " +
                                  std::to_string(t));
    }
    fit.model.feature_stats = feature_stats;
    fit.model.target_stats = ScalarStats{};
    const long step_offset = static_cast<long>(out.trace.size());
    for (TraceRow row : fit.trace) {
      row.step += step_offset;
      out.trace.push_back(row);
    }
    model.trees.push_back(std::move(fit.model));

    // Residual for the next round (and the final noise update) under one
    // fresh joint draw of every tree fitted so far.
    RandomStream draw_rng(stream_key(config.tree.seed, "residual", static_cast<uint64_t>(t + 1)));
    Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
    for (size_t j = 0; j < model.trees.size(); ++j) {
      const double weight = j == 0 ? 1.0 : config.shrinkage;
      add_sampled_tree(model.trees[j], Xs, draw_rng, weight, total);
    }
    residual = ys - total;
  }

  model.final_residuals = residual;
  model.noise_posterior.shape = config.a_sigma + static_cast<double>(n);
  model.noise_posterior.scale = config.b_sigma + residual.squaredNorm();
  return out;
}

double sample_noise_variance(const InverseGammaPosterior& posterior, RandomStream& rng) {
  if (posterior.shape <= 0.0 || posterior.scale <= 0.0) {
    throw std::invalid_argument("inverse-Gamma posterior needs positive shape and scale");
  }
  return posterior.scale / rng.gamma(posterior.shape);
}

Eigen::VectorXd vsgbm_sampled_mean_std_units(const VsgbmModel& model,
                                             const Eigen::Ref<const Eigen::MatrixXd>& X_std,
                                             RandomStream& rng) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(X_std.rows());
  for (size_t j = 0; j < model.trees.size(); ++j) {
    const double weight = j == 0 ? 1.0 : model.shrinkage;
    add_sampled_tree(model.trees[j], X_std, rng, weight, total);
  }
  return total;
}

FunctionSample vsgbm_function_sample(const VsgbmModel& model,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     unsigned long long seed) {
  if (model.trees.empty()) {
    throw std::invalid_argument("model has no trees");
  }
  if (X.cols() != model.feature_stats.mean.size()) {
    throw std::invalid_argument("feature dimension mismatch");
  }
  const Eigen::MatrixXd Xs = apply_scaler(model.feature_stats, X);
  RandomStream rng(seed, "function-sample");
  FunctionSample out;
  out.mean = invert_scalar(model.target_stats, vsgbm_sampled_mean_std_units(model, Xs, rng));
  out.noise_std =
      std::sqrt(sample_noise_variance(model.noise_posterior, rng)) * model.target_stats.std;
  return out;
}

}  // namespace vistree
