#pragma once

#include <Eigen/Dense>

#include "vistree/errors.hpp"

namespace vistree {

// Gaussian with covariance diag[softplus(diag_raw)^2] + factor * factor^T.
// The diagonal scale is stored unconstrained and mapped through softplus, so
// gradient-based training never has to project onto the positive orthant.
// Instances are immutable values in spirit: nothing here mutates them.
struct LowRankGaussian {
  Eigen::VectorXd mean;      // length dim
  Eigen::VectorXd diag_raw;  // length dim, effective std = softplus(diag_raw)
  Eigen::MatrixXd factor;    // dim x rank

  Eigen::Index dim() const { return mean.size(); }
  Eigen::Index rank() const { return factor.cols(); }

  // Per-coordinate effective standard deviation, strictly positive.
  Eigen::VectorXd effective_std() const;
};

// Spherical zero-centered Gaussian prior N(0, variance * I).
struct IsotropicPrior {
  double variance = 1.0;
};

// mean + softplus(diag_raw) .* noise_std + factor * noise_lowrank.
// Noise is supplied by the caller, so the draw is a deterministic affine
// function of the noise and differentiable in every distribution parameter.
Eigen::VectorXd sample(const LowRankGaussian& dist, const Eigen::Ref<const Eigen::VectorXd>& noise_std,
                       const Eigen::Ref<const Eigen::VectorXd>& noise_lowrank);

// log det(I_k + V^T diag[sigma^2]^{-1} V), computed from a Cholesky
// factorization of the k x k capacitance matrix. Returns 0 for rank 0.
double log_det_capacitance(const LowRankGaussian& dist);

// Closed-form KL(q || N(0, prior.variance * I)). Nonnegative; zero exactly
// when q equals the prior.
double kl_to_isotropic(const LowRankGaussian& dist, const IsotropicPrior& prior);

// Gradient of kl_to_isotropic with respect to (mean, diag_raw, factor).
struct GaussianGrad {
  Eigen::VectorXd mean;
  Eigen::VectorXd diag_raw;
  Eigen::MatrixXd factor;

  void setZero(Eigen::Index dim, Eigen::Index rank);
};

GaussianGrad kl_gradient(const LowRankGaussian& dist, const IsotropicPrior& prior);

// Dense log density, O(dim^3); used by evaluation code where dim is small.
double log_density(const LowRankGaussian& dist, const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace vistree
