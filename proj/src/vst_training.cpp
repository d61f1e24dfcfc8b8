#include "vistree/vst_training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "vistree/activations.hpp"
#include "vistree/errors.hpp"
#include "vistree/random.hpp"

namespace vistree {

void TrainConfig::validate() const {
  if (steps < 1 || batch_size < 1 || mc_samples_train < 1) {
    throw std::invalid_argument("steps, batch_size and mc_samples_train must be positive");
  }
  if (learning_rate <= 0.0 || prior_scale <= 0.0 || beta <= 0.0) {
    throw std::invalid_argument("learning_rate, prior_scale and beta must be positive");
  }
  if (depth < 1) {
    throw std::invalid_argument("depth must be at least 1");
  }
  if (rank < 0) {
    throw std::invalid_argument("rank must be nonnegative");
  }
}

SoftTreeSpec spec_from_config(const TrainConfig& config, Eigen::Index feature_dim) {
  SoftTreeSpec spec;
  spec.depth = config.depth;
  spec.feature_dim = feature_dim;
  spec.leaf_kind = config.leaf_kind;
  spec.beta = config.beta;
  spec.output_mode = config.output_mode;
  return spec;
}

LowRankGaussian init_posterior(const SoftTreeSpec& spec, const TrainConfig& config,
                               unsigned long long seed) {
  spec.validate();
  config.validate();
  const Eigen::Index dim = param_count(spec);
  const Eigen::Index p = spec.feature_dim;
  RandomStream rng(seed, "init");
  LowRankGaussian q;
  q.mean = 0.1 * rng.normal_vector(dim);
  const double damp = 1.0 / std::sqrt(static_cast<double>(p));
  for (Eigen::Index n = 0; n < spec.num_internal(); ++n) {
    q.mean.segment(node_offset(spec, n), p) *= damp;
  }
  q.diag_raw = Eigen::VectorXd::Constant(dim, inverse_softplus(1e-3));
  q.factor = Eigen::MatrixXd::Zero(dim, config.rank);
  return q;
}

namespace {

ScalerStats identity_scaler(Eigen::Index p) {
  ScalerStats stats;
  stats.mean = Eigen::VectorXd::Zero(p);
  stats.std = Eigen::VectorXd::Ones(p);
  stats.constant.assign(static_cast<size_t>(p), 0);
  return stats;
}

}  // namespace

FitOutput fit_core(const Eigen::Ref<const Eigen::MatrixXd>& X,
                   const Eigen::Ref<const Eigen::VectorXd>& y, const TrainConfig& config,
                   double weak_learner_noise_scale, const LowRankGaussian* warm_from) {
  config.validate();
  if (X.rows() < 1 || X.rows() != y.size()) {
    throw std::invalid_argument("training data must be non-empty with matching target length");
  }
  const SoftTreeSpec spec = spec_from_config(config, X.cols());
  spec.validate();
  const Eigen::Index dim = param_count(spec);
  const Eigen::Index n = X.rows();
  const Eigen::Index batch = std::min<Eigen::Index>(config.batch_size, n);
  const Eigen::Index num_batches = (n + batch - 1) / batch;

  LowRankGaussian posterior;
  if (warm_from != nullptr) {
    if (warm_from->dim() != dim || warm_from->rank() != config.rank) {
      throw std::invalid_argument("warm-start posterior shape mismatch");
    }
    posterior = *warm_from;
  } else {
    posterior = init_posterior(spec, config, config.seed);
  }
  IsotropicPrior prior{config.prior_scale};

  ObjectiveOptions opts;
  opts.kind =
      spec.output_mode == OutputMode::MeanOnly ? ObjectiveKind::BoostedResidual : ObjectiveKind::Elbo;
  opts.kl_scale = 1.0 / static_cast<double>(num_batches);
  opts.residual_noise_scale = weak_learner_noise_scale;

  ObjectiveOptions eval_opts = opts;
  eval_opts.kl_scale = 1.0;
  RandomStream eval_rng(config.seed, "eval-noise");
  const Eigen::Index eval_samples = std::max(config.mc_samples_train, 16);
  const NoiseDraws eval_noise = draw_noise(eval_rng, dim, config.rank, eval_samples);

  FitOutput out;
  out.initial_elbo = objective_gradient(posterior, spec, X, y, prior, eval_noise, eval_opts).value;
  out.trace.reserve(static_cast<size_t>(config.steps));

  Eigen::VectorXd flat = flatten(posterior);
  AdamState adam = make_adam_state(flat.size(), config.learning_rate);
  RandomStream train_rng(config.seed, "train-noise");
  RandomStream shuffle_rng(config.seed, "shuffle");

  std::vector<Eigen::Index> perm;
  Eigen::MatrixXd Xb(batch, X.cols());
  Eigen::VectorXd yb(batch);
  for (long step = 1; step <= config.steps; ++step) {
    const Eigen::Index batch_index = (step - 1) % num_batches;
    if (batch_index == 0) {
      perm = shuffle_rng.permutation(n);
    }
    const Eigen::Index start = batch_index * batch;
    const Eigen::Index count = std::min(batch, n - start);
    Xb.resize(count, X.cols());
    yb.resize(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      Xb.row(i) = X.row(perm[static_cast<size_t>(start + i)]);
      yb[i] = y[perm[static_cast<size_t>(start + i)]];
    }
    const NoiseDraws noise = draw_noise(train_rng, dim, config.rank, config.mc_samples_train);
    ObjectiveValueGrad result;
    try {
      result = objective_gradient(posterior, spec, Xb, yb, prior, noise, opts);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at training step " + std::to_string(step));
    }
    const Eigen::VectorXd descent = -flatten(result.grad);
    adam_step(adam, flat, descent);
    unflatten_into(flat, posterior);
    out.trace.push_back({step, result.value, result.data_fit, result.kl});
  }

  out.final_elbo = objective_gradient(posterior, spec, X, y, prior, eval_noise, eval_opts).value;
  out.model.spec = spec;
  out.model.posterior = std::move(posterior);
  out.model.prior = prior;
  out.model.feature_stats = identity_scaler(X.cols());
  out.model.target_stats = ScalarStats{};
  return out;
}

FitOutput fit_vst(const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::VectorXd>& y, const TrainConfig& config) {
  if (X.rows() < 2 || X.rows() != y.size()) {
    throw std::invalid_argument("fit_vst needs at least 2 rows with matching target length");
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
  FitOutput out = fit_core(Xs, ys, config);
  out.model.feature_stats = feature_stats;
  out.model.target_stats = target_stats;
  return out;
}

}  // namespace vistree
