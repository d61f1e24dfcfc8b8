#include "vistree/predictive.hpp"

#include <cmath>
#include <stdexcept>

#include "vistree/random.hpp"

namespace vistree {

namespace {

// Per-draw, per-row predictive pieces, all in original target units.
struct SampleBattery {
  Eigen::MatrixXd loglik;  // n x S
  Eigen::MatrixXd mean;    // n x S
  Eigen::MatrixXd var;     // n x S, per-draw aleatoric variance
};

// Routing, leaf moments and density of one tree draw in a single pass.
void vst_row_stats(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& theta,
                   const Eigen::Ref<const Eigen::VectorXd>& x, double y_std_units,
                   double* loglik, double* mean, double* var) {
  const Eigen::VectorXd logp = routing_log_probs(spec, theta, x);
  const Eigen::Index leaves = spec.num_leaves();
  double first_moment = 0.0;
  double second_moment = 0.0;
  Eigen::VectorXd terms(leaves);
  for (Eigen::Index l = 0; l < leaves; ++l) {
    const LeafDensity leaf = leaf_density(spec, theta, l, x);
    const double prob = std::exp(logp[l]);
    first_moment += prob * leaf.mean;
    second_moment += prob * (leaf.mean * leaf.mean + leaf.std * leaf.std);
    terms[l] = logp[l] + gaussian_log_density(y_std_units, leaf.mean, leaf.std);
  }
  const double shift = terms.maxCoeff();
  *loglik = shift + std::log((terms.array() - shift).exp().sum());
  *mean = first_moment;
  *var = second_moment - first_moment * first_moment;
}

SampleBattery evaluate(const VstModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                       const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index samples,
                       unsigned long long seed) {
  if (samples < 1) {
    throw std::invalid_argument("need at least one posterior sample");
  }
  if (X.cols() != model.spec.feature_dim) {
    throw std::invalid_argument("feature dimension mismatch");
  }
  const Eigen::MatrixXd Xs = apply_scaler(model.feature_stats, X);
  const Eigen::VectorXd ys = apply_scalar(model.target_stats, y);
  const double tstd = model.target_stats.std;
  const double log_jacobian = std::log(tstd);

  SampleBattery battery;
  battery.loglik.resize(X.rows(), samples);
  battery.mean.resize(X.rows(), samples);
  battery.var.resize(X.rows(), samples);

  RandomStream rng(seed, "predictive");
  for (Eigen::Index s = 0; s < samples; ++s) {
    const Eigen::VectorXd eps_diag = rng.normal_vector(model.posterior.dim());
    const Eigen::VectorXd eps_lowrank = rng.normal_vector(model.posterior.rank());
    const Eigen::VectorXd theta = sample(model.posterior, eps_diag, eps_lowrank);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double ll = 0.0;
      double mean = 0.0;
      double var = 0.0;
      vst_row_stats(model.spec, theta, Xs.row(i).transpose(), ys[i], &ll, &mean, &var);
      battery.loglik(i, s) = ll - log_jacobian;
      battery.mean(i, s) = mean * tstd + model.target_stats.mean;
      battery.var(i, s) = var * tstd * tstd;
    }
  }
  return battery;
}

SampleBattery evaluate(const VsgbmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                       const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index samples,
                       unsigned long long seed) {
  if (samples < 1) {
    throw std::invalid_argument("need at least one posterior sample");
  }
  SampleBattery battery;
  battery.loglik.resize(X.rows(), samples);
  battery.mean.resize(X.rows(), samples);
  battery.var.resize(X.rows(), samples);
  for (Eigen::Index s = 0; s < samples; ++s) {
    const FunctionSample draw =
        vsgbm_function_sample(model, X, stream_key(seed, "predictive", static_cast<uint64_t>(s)));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      battery.loglik(i, s) = gaussian_log_density(y[i], draw.mean[i], draw.noise_std);
      battery.mean(i, s) = draw.mean[i];
      battery.var(i, s) = draw.noise_std * draw.noise_std;
    }
  }
  return battery;
}

Eigen::VectorXd mixture_loglik(const Eigen::MatrixXd& loglik) {
  const Eigen::Index n = loglik.rows();
  Eigen::VectorXd out(n);
  const double log_s = std::log(static_cast<double>(loglik.cols()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double shift = loglik.row(i).maxCoeff();
    out[i] = shift + std::log((loglik.row(i).array() - shift).exp().sum()) - log_s;
  }
  return out;
}

double unbiased_row_variance(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double mean = row.mean();
  return (row.array() - mean).square().sum() / static_cast<double>(row.size() - 1);
}

template <typename Model>
double predictive_loglik_impl(const Model& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                              double y, Eigen::Index samples, unsigned long long seed) {
  const Eigen::MatrixXd X = x.transpose();
  Eigen::VectorXd yv(1);
  yv[0] = y;
  const SampleBattery battery = evaluate(model, X, yv, samples, seed);
  return mixture_loglik(battery.loglik)[0];
}

template <typename Model>
double epistemic_impl(const Model& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                      Eigen::Index samples, unsigned long long seed) {
  if (samples < 2) {
    throw std::invalid_argument("epistemic_uncertainty needs at least 2 samples");
  }
  const Eigen::MatrixXd X = x.transpose();
  const Eigen::VectorXd yv = Eigen::VectorXd::Zero(1);
  const SampleBattery battery = evaluate(model, X, yv, samples, seed);
  return unbiased_row_variance(battery.mean.row(0));
}

template <typename Model>
Metrics metrics_impl(const Model& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index samples,
                     unsigned long long seed, bool original_units, double target_std) {
  if (X.rows() == 0 || X.rows() != y.size()) {
    throw std::invalid_argument("metrics need a non-empty dataset with matching target length");
  }
  if (samples < 2) {
    throw std::invalid_argument("metrics need at least 2 samples");
  }
  const SampleBattery battery = evaluate(model, X, y, samples, seed);
  const double unit_scale = original_units ? 1.0 : 1.0 / target_std;

  Metrics out;
  out.mean_loglik = mixture_loglik(battery.loglik).mean();
  if (!original_units) {
    out.mean_loglik += std::log(target_std);
  }
  const Eigen::VectorXd predictive_mean = battery.mean.rowwise().mean();
  out.rmse = std::sqrt((predictive_mean - y).squaredNorm() / static_cast<double>(y.size())) *
             unit_scale;
  double epi = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    epi += std::sqrt(unbiased_row_variance(battery.mean.row(i)));
  }
  out.mean_epistemic_std = epi / static_cast<double>(X.rows()) * unit_scale;
  return out;
}

template <typename Model>
PredictiveSummary summary_impl(const Model& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                               const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index samples,
                               unsigned long long seed, bool original_units,
                               const ScalarStats& target_stats) {
  if (X.rows() == 0 || X.rows() != y.size()) {
    throw std::invalid_argument("summary needs a non-empty dataset with matching target length");
  }
  const SampleBattery battery = evaluate(model, X, y, samples, seed);
  const double shift = original_units ? 0.0 : target_stats.mean;
  const double unit_scale = original_units ? 1.0 : 1.0 / target_stats.std;
  const double n_s = static_cast<double>(samples);

  PredictiveSummary out;
  out.sample_means = (battery.mean.array() - shift) * unit_scale;
  out.predictive_mean = out.sample_means.rowwise().mean();
  out.predictive_std.resize(X.rows());
  out.epistemic_std.resize(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double epi_var =
        (out.sample_means.row(i).array() - out.predictive_mean[i]).square().sum() / n_s;
    const double alea_var = battery.var.row(i).mean() * unit_scale * unit_scale;
    out.epistemic_std[i] = std::sqrt(epi_var);
    out.predictive_std[i] = std::sqrt(epi_var + alea_var);
  }
  out.mean_loglik = mixture_loglik(battery.loglik).mean();
  if (!original_units) {
    out.mean_loglik += std::log(target_stats.std);
  }
  const Eigen::VectorXd y_units = ((y.array() - shift) * unit_scale).matrix();
  out.rmse = std::sqrt((out.predictive_mean - y_units).squaredNorm() /
                       static_cast<double>(y.size()));
  return out;
}

}  // namespace

double predictive_loglik(const VstModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                         double y, Eigen::Index samples, unsigned long long seed) {
  return predictive_loglik_impl(model, x, y, samples, seed);
}

double predictive_loglik(const VsgbmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                         double y, Eigen::Index samples, unsigned long long seed) {
  return predictive_loglik_impl(model, x, y, samples, seed);
}

double epistemic_uncertainty(const VstModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             Eigen::Index samples, unsigned long long seed) {
  return epistemic_impl(model, x, samples, seed);
}

double epistemic_uncertainty(const VsgbmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             Eigen::Index samples, unsigned long long seed) {
  return epistemic_impl(model, x, samples, seed);
}

Metrics regression_metrics(const VstModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                           const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index samples,
                           unsigned long long seed, bool original_units) {
  return metrics_impl(model, X, y, samples, seed, original_units, model.target_stats.std);
}

Metrics regression_metrics(const VsgbmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                           const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index samples,
                           unsigned long long seed, bool original_units) {
  return metrics_impl(model, X, y, samples, seed, original_units, model.target_stats.std);
}

PredictiveSummary predictive_summary(const VstModel& model,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     Eigen::Index samples, unsigned long long seed,
                                     bool original_units) {
  return summary_impl(model, X, y, samples, seed, original_units, model.target_stats);
}

PredictiveSummary predictive_summary(const VsgbmModel& model,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     Eigen::Index samples, unsigned long long seed,
                                     bool original_units) {
  return summary_impl(model, X, y, samples, seed, original_units, model.target_stats);
}

}  // namespace vistree
