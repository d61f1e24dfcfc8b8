#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vistree/vst_training.hpp"

namespace vistree {

class RandomStream;

struct VsgbmConfig {
  int num_trees = 1;
  double a_sigma = 3.0;  // noise-variance prior shape, > 1 for a finite mean
  double b_sigma = 1.0;  // noise-variance prior scale
  TrainConfig tree;      // per-tree training settings; output_mode forced to MeanOnly
  double weak_learner_noise_scale = 1.0;  // fixed likelihood std of each weak learner
  double shrinkage = 1.0;  // scales trees after the first; 1.0 is plain additive boosting

  void validate() const;
};

struct InverseGammaPosterior {
  double shape = 0.0;
  double scale = 0.0;

  // Defined for shape > 1.
  double mean() const { return scale / (shape - 1.0); }
};

struct VsgbmModel {
  std::vector<VstModel> trees;  // shared feature standardization, identity target stats
  InverseGammaPosterior noise_posterior;
  double a_sigma = 3.0;  // prior echo
  double b_sigma = 1.0;
  double shrinkage = 1.0;
  ScalerStats feature_stats;
  ScalarStats target_stats;
  Eigen::VectorXd final_residuals;  // standardized units; noise_posterior derives from these
};

struct VsgbmFitOutput {
  VsgbmModel model;
  std::vector<TraceRow> trace;  // per-tree traces concatenated, steps running
};

// Sequential residual boosting: tree 1 fits the standardized target, each
// later tree fits the residual left by one fresh joint posterior draw of the
// earlier trees, then the noise posterior is the conjugate update
// (a_sigma + n, b_sigma + r'r) with r the final sampled residual.
VsgbmFitOutput fit_vsgbm(const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::VectorXd>& y, const VsgbmConfig& config);

// One draw of the homoskedastic noise variance, sigma^2 = scale / Gamma(shape).
double sample_noise_variance(const InverseGammaPosterior& posterior, RandomStream& rng);

// One joint function draw: sum of tree means under a single posterior sample
// per tree, de-standardized, plus a matching noise std draw in target units.
struct FunctionSample {
  Eigen::VectorXd mean;
  double noise_std = 0.0;
};

FunctionSample vsgbm_function_sample(const VsgbmModel& model,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     unsigned long long seed);

// Ensemble mean in standardized target units under a joint draw taken from
// `rng`; consumes the same draws as vsgbm_function_sample minus the noise.
Eigen::VectorXd vsgbm_sampled_mean_std_units(const VsgbmModel& model,
                                             const Eigen::Ref<const Eigen::MatrixXd>& X_std,
                                             RandomStream& rng);

}  // namespace vistree
