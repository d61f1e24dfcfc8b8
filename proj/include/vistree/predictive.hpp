#pragma once

#include <Eigen/Dense>

#include "vistree/vsgbm.hpp"
#include "vistree/vst_training.hpp"

namespace vistree {

// Monte Carlo predictive quantities. Draws are deterministic in (model, seed)
// and shared across rows, so per-row values equal the batched ones.

// log[(1/S) sum_s p(y | x, theta_s)] in original target units.
double predictive_loglik(const VstModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                         double y, Eigen::Index samples, unsigned long long seed);
double predictive_loglik(const VsgbmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                         double y, Eigen::Index samples, unsigned long long seed);

// Unbiased variance of the per-draw predictive means, original units.
// Observation noise never enters. samples must be >= 2.
double epistemic_uncertainty(const VstModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             Eigen::Index samples, unsigned long long seed);
double epistemic_uncertainty(const VsgbmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             Eigen::Index samples, unsigned long long seed);

struct Metrics {
  double mean_loglik = 0.0;
  double rmse = 0.0;
  double mean_epistemic_std = 0.0;
};

// Dataset-level metrics; standardized target units by default to match how
// training sees the data, original units on request.
Metrics regression_metrics(const VstModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                           const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index samples,
                           unsigned long long seed, bool original_units = false);
Metrics regression_metrics(const VsgbmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                           const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index samples,
                           unsigned long long seed, bool original_units = false);

// Per-input decomposition. predictive_std and epistemic_std use population
// moments over the S draws so that
//   predictive_var = epistemic_var + mean aleatoric variance
// holds as an identity; the epistemic_uncertainty op above stays unbiased.
struct PredictiveSummary {
  Eigen::VectorXd predictive_mean;
  Eigen::VectorXd predictive_std;
  Eigen::VectorXd epistemic_std;
  Eigen::MatrixXd sample_means;  // n x S
  double mean_loglik = 0.0;
  double rmse = 0.0;
};

PredictiveSummary predictive_summary(const VstModel& model,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     Eigen::Index samples, unsigned long long seed,
                                     bool original_units = false);
PredictiveSummary predictive_summary(const VsgbmModel& model,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     Eigen::Index samples, unsigned long long seed,
                                     bool original_units = false);

}  // namespace vistree
