#pragma once

#include <Eigen/Dense>

#include "vistree/low_rank_gaussian.hpp"
#include "vistree/soft_tree.hpp"

namespace vistree {

// Which per-example data term the objective uses. Elbo scores the full tree
// density; BoostedResidual scores a fixed-variance Gaussian centered on the
// tree's mean prediction (the weak-learner objective used when boosting).
enum class ObjectiveKind { Elbo, BoostedResidual };

struct ObjectiveOptions {
  ObjectiveKind kind = ObjectiveKind::Elbo;
  // Weight on the KL term. Training sets this to 1 / (minibatches per epoch)
  // so that one epoch of batch objectives sums to one full ELBO.
  double kl_scale = 1.0;
  // Likelihood std of the BoostedResidual data term, in training units.
  double residual_noise_scale = 1.0;
};

// Caller-supplied standard-normal draws, one column per Monte Carlo sample.
struct NoiseDraws {
  Eigen::MatrixXd eps_diag;     // dim x m
  Eigen::MatrixXd eps_lowrank;  // rank x m

  Eigen::Index samples() const { return eps_diag.cols(); }
};

NoiseDraws draw_noise(class RandomStream& rng, Eigen::Index dim, Eigen::Index rank,
                      Eigen::Index samples);

struct ObjectiveValueGrad {
  // (1/m) sum_i sum_batch data_term(x_b, y_b; theta_i) - kl_scale * KL(q||p).
  double value = 0.0;
  GaussianGrad grad;
  double data_fit = 0.0;  // the Monte Carlo data term alone
  double kl = 0.0;        // full KL(q || p)
};

// Exact gradient of the Monte Carlo objective with respect to every posterior
// parameter, accumulated analytically through the reparameterized draws and
// the tree evaluation. Deterministic given (parameters, batch, noise).
ObjectiveValueGrad objective_gradient(const LowRankGaussian& posterior, const SoftTreeSpec& spec,
                                      const Eigen::Ref<const Eigen::MatrixXd>& X,
                                      const Eigen::Ref<const Eigen::VectorXd>& y,
                                      const IsotropicPrior& prior, const NoiseDraws& noise,
                                      const ObjectiveOptions& opts);

// Evaluation trace for one tree pass; reused across examples to avoid
// reallocation. backward_* accumulate d(term)/d(theta) into grad_theta.
struct TreeTape {
  Eigen::VectorXd logits;        // gating logits z_n
  Eigen::VectorXd logw;          // log routing weight per heap position
  Eigen::VectorXd acc;           // upward accumulator
  Eigen::VectorXd leaf_mean;     // per-leaf Gaussian mean at x
  Eigen::VectorXd leaf_std_pre;  // per-leaf std pre-activation
  Eigen::VectorXd terms;         // per-leaf joint log terms

  void resize(const SoftTreeSpec& spec);

  // Forward tree log-likelihood; fills the trace.
  double forward_log_likelihood(const SoftTreeSpec& spec,
                                const Eigen::Ref<const Eigen::VectorXd>& theta,
                                const Eigen::Ref<const Eigen::VectorXd>& x, double y);
  // d log_likelihood / d theta, scaled by `weight`, added to grad_theta.
  void backward_log_likelihood(const SoftTreeSpec& spec,
                               const Eigen::Ref<const Eigen::VectorXd>& x, double y,
                               double weight, Eigen::Ref<Eigen::VectorXd> grad_theta);

  // Forward mixture mean; fills the trace.
  double forward_predict_mean(const SoftTreeSpec& spec,
                              const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const Eigen::Ref<const Eigen::VectorXd>& x);
  // d predict_mean / d theta, scaled by `weight`, added to grad_theta.
  void backward_predict_mean(const SoftTreeSpec& spec,
                             const Eigen::Ref<const Eigen::VectorXd>& x, double weight,
                             Eigen::Ref<Eigen::VectorXd> grad_theta);
};

// Standard bias-corrected Adam over a flat parameter vector.
struct AdamState {
  long step = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(Eigen::Index size, double learning_rate);

// One descent step in place; params moves opposite the gradient.
void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grad);

// Flat view of posterior parameters and gradients, ordered
// [mean; diag_raw; factor column-major]. Used by the optimizer.
Eigen::VectorXd flatten(const LowRankGaussian& dist);
Eigen::VectorXd flatten(const GaussianGrad& grad);
void unflatten_into(const Eigen::Ref<const Eigen::VectorXd>& flat, LowRankGaussian& dist);

}  // namespace vistree
