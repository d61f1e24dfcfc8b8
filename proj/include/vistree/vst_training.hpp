#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vistree/data.hpp"
#include "vistree/gradient_engine.hpp"
#include "vistree/low_rank_gaussian.hpp"
#include "vistree/soft_tree.hpp"

namespace vistree {

struct TrainConfig {
  int steps = 5000;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double prior_scale = 1.0;  // variance of the isotropic parameter prior
  double beta = 10.0;
  int depth = 3;
  int rank = 5;
  int mc_samples_train = 2;
  unsigned long long seed = 0;
  LeafKind leaf_kind = LeafKind::Linear;
  OutputMode output_mode = OutputMode::Density;

  void validate() const;
};

// Fitted tree plus the training-time standardization it expects at inference.
struct VstModel {
  SoftTreeSpec spec;
  LowRankGaussian posterior;
  IsotropicPrior prior;
  ScalerStats feature_stats;
  ScalarStats target_stats;
};

struct TraceRow {
  long step = 0;
  double elbo = 0.0;
  double data_fit = 0.0;
  double kl = 0.0;
};

struct FitOutput {
  VstModel model;
  std::vector<TraceRow> trace;
  // Full-data objective under one fixed set of evaluation noise draws,
  // before and after optimization.
  double initial_elbo = 0.0;
  double final_elbo = 0.0;
};

// Posterior over tree parameters at the start of training: small random
// means (gating weights damped by 1/sqrt(feature_dim)), effective std 1e-3,
// zero factor.
LowRankGaussian init_posterior(const SoftTreeSpec& spec, const TrainConfig& config,
                               unsigned long long seed);

// Optimizes the variational objective on data already in training units.
// When `warm_from` is non-null its parameters seed the optimization instead
// of init_posterior. kl_scale is 1/minibatches-per-epoch so one epoch of
// batch objectives totals one full ELBO.
FitOutput fit_core(const Eigen::Ref<const Eigen::MatrixXd>& X,
                   const Eigen::Ref<const Eigen::VectorXd>& y, const TrainConfig& config,
                   double weak_learner_noise_scale = 1.0,
                   const LowRankGaussian* warm_from = nullptr);

// Standardizes features and target, then fits. Throws std::invalid_argument
// for fewer than 2 rows or a zero-variance target, NumericError with the
// step index if the objective diverges.
FitOutput fit_vst(const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::VectorXd>& y, const TrainConfig& config);

SoftTreeSpec spec_from_config(const TrainConfig& config, Eigen::Index feature_dim);

}  // namespace vistree
