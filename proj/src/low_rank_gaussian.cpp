#include "vistree/low_rank_gaussian.hpp"

#include <cmath>
#include <stdexcept>

#include "vistree/activations.hpp"

namespace vistree {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_finite(const LowRankGaussian& dist) {
  if (!dist.mean.allFinite() || !dist.diag_raw.allFinite() || !dist.factor.allFinite()) {
    throw NumericError("LowRankGaussian: non-finite parameters");
  }
}

// Cholesky factor of I_k + V^T D^{-1} V where D = diag(sigma^2).
Eigen::LLT<Eigen::MatrixXd> capacitance_llt(const Eigen::MatrixXd& factor,
                                            const Eigen::VectorXd& sigma) {
  const Eigen::Index k = factor.cols();
  Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(k, k);
  cap.selfadjointView<Eigen::Lower>().rankUpdate(
      (factor.array().colwise() / sigma.array()).matrix().transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(cap);
  if (llt.info() != Eigen::Success) {
    throw NumericError("log_det_capacitance: Cholesky factorization failed");
  }
  return llt;
}

}  // namespace

Eigen::VectorXd LowRankGaussian::effective_std() const {
  return diag_raw.unaryExpr([](double v) { return softplus(v); });
}

Eigen::VectorXd sample(const LowRankGaussian& dist, const Eigen::Ref<const Eigen::VectorXd>& noise_std,
                       const Eigen::Ref<const Eigen::VectorXd>& noise_lowrank) {
  if (noise_std.size() != dist.dim()) {
    throw std::invalid_argument("sample: noise_std length must equal distribution dimension");
  }
  if (noise_lowrank.size() != dist.rank()) {
    throw std::invalid_argument("sample: noise_lowrank length must equal distribution rank");
  }
  Eigen::VectorXd out = dist.mean + (dist.effective_std().array() * noise_std.array()).matrix();
  if (dist.rank() > 0) {
    out.noalias() += dist.factor * noise_lowrank;
  }
  return out;
}

double log_det_capacitance(const LowRankGaussian& dist) {
  if (dist.rank() == 0) {
    return 0.0;
  }
  require_finite(dist);
  const Eigen::VectorXd sigma = dist.effective_std();
  const auto llt = capacitance_llt(dist.factor, sigma);
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double kl_to_isotropic(const LowRankGaussian& dist, const IsotropicPrior& prior) {
  if (!(prior.variance > 0.0)) {
    throw std::invalid_argument("kl_to_isotropic: prior variance must be positive");
  }
  require_finite(dist);
  const double gamma = prior.variance;
  const auto p = static_cast<double>(dist.dim());
  const Eigen::VectorXd sigma = dist.effective_std();
  const Eigen::ArrayXd var = sigma.array().square();
  const double diag_term = (var / gamma - var.log()).sum();
  const double factor_term = dist.factor.squaredNorm() / gamma;
  const double mean_term = dist.mean.squaredNorm() / gamma;
  const double delta = log_det_capacitance(dist);
  return 0.5 * (diag_term + factor_term - delta + mean_term + p * (std::log(gamma) - 1.0));
}

void GaussianGrad::setZero(Eigen::Index dim, Eigen::Index rank) {
  mean = Eigen::VectorXd::Zero(dim);
  diag_raw = Eigen::VectorXd::Zero(dim);
  factor = Eigen::MatrixXd::Zero(dim, rank);
}

GaussianGrad kl_gradient(const LowRankGaussian& dist, const IsotropicPrior& prior) {
  if (!(prior.variance > 0.0)) {
    throw std::invalid_argument("kl_gradient: prior variance must be positive");
  }
  require_finite(dist);
  const double gamma = prior.variance;
  const Eigen::VectorXd sigma = dist.effective_std();

  GaussianGrad grad;
  grad.mean = dist.mean / gamma;

  // d KL / d sigma_d = sigma_d / gamma - 1 / sigma_d + (V C^{-1} V^T)_dd / sigma_d^3,
  // then chained through softplus. The capacitance inverse also yields
  // d KL / d V = V / gamma - D^{-1} V C^{-1}.
  Eigen::VectorXd dkl_dsigma = (sigma.array() / gamma - sigma.array().inverse()).matrix();
  if (dist.rank() > 0) {
    const auto llt = capacitance_llt(dist.factor, sigma);
    // W = D^{-1} V C^{-1}
    Eigen::MatrixXd w = (dist.factor.array().colwise() / sigma.array().square()).matrix();
    w = llt.solve(w.transpose()).transpose();
    dkl_dsigma.array() +=
        (w.array() * dist.factor.array()).rowwise().sum() / sigma.array();
    grad.factor = dist.factor / gamma - w;
  } else {
    grad.factor.resize(dist.dim(), 0);
  }
  grad.diag_raw =
      (dkl_dsigma.array() * dist.diag_raw.unaryExpr([](double v) { return sigmoid(v); }).array())
          .matrix();
  return grad;
}

double log_density(const LowRankGaussian& dist, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != dist.dim()) {
    throw std::invalid_argument("log_density: dimension mismatch");
  }
  const Eigen::Index p = dist.dim();
  const Eigen::VectorXd sigma = dist.effective_std();
  Eigen::MatrixXd cov = sigma.array().square().matrix().asDiagonal();
  if (dist.rank() > 0) {
    cov.noalias() += dist.factor * dist.factor.transpose();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericError("log_density: covariance factorization failed");
  }
  const Eigen::VectorXd centered = x - dist.mean;
  const Eigen::VectorXd alpha = llt.matrixL().solve(centered);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(p) * kLog2Pi + log_det + alpha.squaredNorm());
}

}  // namespace vistree
