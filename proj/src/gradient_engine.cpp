#include "vistree/gradient_engine.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "vistree/activations.hpp"
#include "vistree/errors.hpp"
#include "vistree/random.hpp"

namespace vistree {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;

void require_block_finite(const Eigen::Ref<const Eigen::MatrixXd>& block, const char* name) {
  if (!block.allFinite()) {
    throw NumericError(std::string(name) + " is not finite");
  }
}

}  // namespace

NoiseDraws draw_noise(RandomStream& rng, Eigen::Index dim, Eigen::Index rank,
                      Eigen::Index samples) {
  NoiseDraws noise;
  noise.eps_diag = rng.normal_matrix(dim, samples);
  noise.eps_lowrank = rng.normal_matrix(rank, samples);
  return noise;
}

void TreeTape::resize(const SoftTreeSpec& spec) {
  const Eigen::Index internal = spec.num_internal();
  const Eigen::Index leaves = spec.num_leaves();
  logits.resize(internal);
  logw.resize(internal + leaves);
  acc.resize(internal + leaves);
  leaf_mean.resize(leaves);
  leaf_std_pre.resize(leaves);
  terms.resize(leaves);
}

namespace {

// Fills logits and logw for one input. theta layout matches soft_tree.
void forward_routing(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& theta,
                     const Eigen::Ref<const Eigen::VectorXd>& x, TreeTape& tape) {
  const Eigen::Index p = spec.feature_dim;
  const Eigen::Index internal = spec.num_internal();
  for (Eigen::Index n = 0; n < internal; ++n) {
    const Eigen::Index off = node_offset(spec, n);
    tape.logits[n] = spec.beta * (theta.segment(off, p).dot(x) + theta[off + p]);
  }
  tape.logw[0] = 0.0;
  for (Eigen::Index n = 0; n < internal; ++n) {
    tape.logw[2 * n + 1] = tape.logw[n] + log_sigmoid(-tape.logits[n]);
    tape.logw[2 * n + 2] = tape.logw[n] + log_sigmoid(tape.logits[n]);
  }
}

void forward_leaves(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& theta,
                    const Eigen::Ref<const Eigen::VectorXd>& x, TreeTape& tape) {
  const Eigen::Index p = spec.feature_dim;
  const Eigen::Index leaves = spec.num_leaves();
  for (Eigen::Index l = 0; l < leaves; ++l) {
    const Eigen::Index off = leaf_offset(spec, l);
    if (spec.leaf_kind == LeafKind::Constant) {
      tape.leaf_mean[l] = theta[off];
      tape.leaf_std_pre[l] = theta[off + 1];
    } else {
      tape.leaf_mean[l] = theta.segment(off, p).dot(x) + theta[off + p];
      tape.leaf_std_pre[l] = theta.segment(off + p + 1, p).dot(x) + theta[off + 2 * p + 1];
    }
  }
}

// Routes dz_n through the gating parameters. dz holds d(term)/d(logit_n).
void backward_nodes(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const TreeTape& tape, double weight, Eigen::Ref<Eigen::VectorXd> grad_theta) {
  const Eigen::Index p = spec.feature_dim;
  const Eigen::Index internal = spec.num_internal();
  for (Eigen::Index n = 0; n < internal; ++n) {
    const double dz = tape.acc[2 * n + 2] - sigmoid(tape.logits[n]) * tape.acc[n];
    const double scale = weight * dz * spec.beta;
    const Eigen::Index off = node_offset(spec, n);
    grad_theta.segment(off, p) += scale * x;
    grad_theta[off + p] += scale;
  }
}

}  // namespace

double TreeTape::forward_log_likelihood(const SoftTreeSpec& spec,
                                        const Eigen::Ref<const Eigen::VectorXd>& theta,
                                        const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
  forward_routing(spec, theta, x, *this);
  forward_leaves(spec, theta, x, *this);
  const Eigen::Index internal = spec.num_internal();
  const Eigen::Index leaves = spec.num_leaves();
  for (Eigen::Index l = 0; l < leaves; ++l) {
    const double s = softplus(leaf_std_pre[l]);
    const double zscore = (y - leaf_mean[l]) / s;
    terms[l] = logw[internal + l] - std::log(s) - kHalfLog2Pi - 0.5 * zscore * zscore;
  }
  const double shift = terms.maxCoeff();
  if (!std::isfinite(shift)) {
    return shift;
  }
  return shift + std::log((terms.array() - shift).exp().sum());
}

void TreeTape::backward_log_likelihood(const SoftTreeSpec& spec,
                                       const Eigen::Ref<const Eigen::VectorXd>& x, double y,
                                       double weight, Eigen::Ref<Eigen::VectorXd> grad_theta) {
  const Eigen::Index p = spec.feature_dim;
  const Eigen::Index internal = spec.num_internal();
  const Eigen::Index leaves = spec.num_leaves();
  const double shift = terms.maxCoeff();
  const double total = std::log((terms.array() - shift).exp().sum()) + shift;
  for (Eigen::Index l = 0; l < leaves; ++l) {
    const double resp = std::exp(terms[l] - total);
    acc[internal + l] = resp;
    const double s = softplus(leaf_std_pre[l]);
    const double diff = y - leaf_mean[l];
    const double dmean = resp * diff / (s * s);
    const double dpre = resp * (-1.0 / s + diff * diff / (s * s * s)) * sigmoid(leaf_std_pre[l]);
    const Eigen::Index off = leaf_offset(spec, l);
    if (spec.leaf_kind == LeafKind::Constant) {
      grad_theta[off] += weight * dmean;
      grad_theta[off + 1] += weight * dpre;
    } else {
      grad_theta.segment(off, p) += weight * dmean * x;
      grad_theta[off + p] += weight * dmean;
      grad_theta.segment(off + p + 1, p) += weight * dpre * x;
      grad_theta[off + 2 * p + 1] += weight * dpre;
    }
  }
  for (Eigen::Index n = internal - 1; n >= 0; --n) {
    acc[n] = acc[2 * n + 1] + acc[2 * n + 2];
  }
  backward_nodes(spec, x, *this, weight, grad_theta);
}

double TreeTape::forward_predict_mean(const SoftTreeSpec& spec,
                                      const Eigen::Ref<const Eigen::VectorXd>& theta,
                                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  forward_routing(spec, theta, x, *this);
  forward_leaves(spec, theta, x, *this);
  const Eigen::Index internal = spec.num_internal();
  const Eigen::Index leaves = spec.num_leaves();
  double out = 0.0;
  for (Eigen::Index l = 0; l < leaves; ++l) {
    out += std::exp(logw[internal + l]) * leaf_mean[l];
  }
  return out;
}

void TreeTape::backward_predict_mean(const SoftTreeSpec& spec,
                                     const Eigen::Ref<const Eigen::VectorXd>& x, double weight,
                                     Eigen::Ref<Eigen::VectorXd> grad_theta) {
  const Eigen::Index p = spec.feature_dim;
  const Eigen::Index internal = spec.num_internal();
  const Eigen::Index leaves = spec.num_leaves();
  for (Eigen::Index l = 0; l < leaves; ++l) {
    const double prob = std::exp(logw[internal + l]);
    acc[internal + l] = prob * leaf_mean[l];
    const Eigen::Index off = leaf_offset(spec, l);
    if (spec.leaf_kind == LeafKind::Constant) {
      grad_theta[off] += weight * prob;
    } else {
      grad_theta.segment(off, p) += weight * prob * x;
      grad_theta[off + p] += weight * prob;
    }
  }
  for (Eigen::Index n = internal - 1; n >= 0; --n) {
    acc[n] = acc[2 * n + 1] + acc[2 * n + 2];
  }
  backward_nodes(spec, x, *this, weight, grad_theta);
}

ObjectiveValueGrad objective_gradient(const LowRankGaussian& posterior, const SoftTreeSpec& spec,
                                      const Eigen::Ref<const Eigen::MatrixXd>& X,
                                      const Eigen::Ref<const Eigen::VectorXd>& y,
                                      const IsotropicPrior& prior, const NoiseDraws& noise,
                                      const ObjectiveOptions& opts) {
  spec.validate();
  const Eigen::Index dim = param_count(spec);
  if (posterior.dim() != dim) {
    throw std::invalid_argument("posterior dimension does not match the tree parameter count");
  }
  if (X.rows() == 0 || X.rows() != y.size()) {
    throw std::invalid_argument("batch must be non-empty with matching target length");
  }
  if (X.cols() != spec.feature_dim) {
    throw std::invalid_argument("feature dimension mismatch");
  }
  const Eigen::Index m = noise.samples();
  if (m < 1 || noise.eps_diag.rows() != dim || noise.eps_lowrank.rows() != posterior.rank() ||
      noise.eps_lowrank.cols() != m) {
    throw std::invalid_argument("noise draws do not match posterior shape");
  }
  if (!X.allFinite() || !y.allFinite()) {
    throw NumericError("training batch contains non-finite values");
  }

  ObjectiveValueGrad out;
  out.grad.setZero(dim, posterior.rank());

  const Eigen::ArrayXd diag_slope = posterior.diag_raw.array().unaryExpr([](double v) {
    return sigmoid(v);
  });

  TreeTape tape;
  tape.resize(spec);
  Eigen::VectorXd theta(dim);
  Eigen::VectorXd grad_theta(dim);
  Eigen::VectorXd xbuf(spec.feature_dim);
  const double inv_m = 1.0 / static_cast<double>(m);

  for (Eigen::Index i = 0; i < m; ++i) {
    theta = sample(posterior, noise.eps_diag.col(i), noise.eps_lowrank.col(i));
    grad_theta.setZero();
    double data_term = 0.0;
    for (Eigen::Index b = 0; b < X.rows(); ++b) {
      xbuf = X.row(b).transpose();
      if (opts.kind == ObjectiveKind::Elbo) {
        data_term += tape.forward_log_likelihood(spec, theta, xbuf, y[b]);
        tape.backward_log_likelihood(spec, xbuf, y[b], 1.0, grad_theta);
      } else {
        const double s0 = opts.residual_noise_scale;
        const double fhat = tape.forward_predict_mean(spec, theta, xbuf);
        const double diff = y[b] - fhat;
        data_term += -std::log(s0) - kHalfLog2Pi - 0.5 * diff * diff / (s0 * s0);
        tape.backward_predict_mean(spec, xbuf, diff / (s0 * s0), grad_theta);
      }
    }
    out.data_fit += inv_m * data_term;
    out.grad.mean += inv_m * grad_theta;
    out.grad.diag_raw.array() +=
        inv_m * grad_theta.array() * diag_slope * noise.eps_diag.col(i).array();
    if (posterior.rank() > 0) {
      out.grad.factor += inv_m * grad_theta * noise.eps_lowrank.col(i).transpose();
    }
  }

  out.kl = kl_to_isotropic(posterior, prior);
  out.value = out.data_fit - opts.kl_scale * out.kl;
  if (opts.kl_scale != 0.0) {
    const GaussianGrad klg = kl_gradient(posterior, prior);
    out.grad.mean -= opts.kl_scale * klg.mean;
    out.grad.diag_raw -= opts.kl_scale * klg.diag_raw;
    if (posterior.rank() > 0) {
      out.grad.factor -= opts.kl_scale * klg.factor;
    }
  }

  if (!std::isfinite(out.value)) {
    throw NumericError("objective value is not finite");
  }
  require_block_finite(out.grad.mean, "posterior mean gradient");
  require_block_finite(out.grad.diag_raw, "posterior diagonal gradient");
  require_block_finite(out.grad.factor, "posterior factor gradient");
  return out;
}

AdamState make_adam_state(Eigen::Index size, double learning_rate) {
  AdamState state;
  state.first_moment = Eigen::VectorXd::Zero(size);
  state.second_moment = Eigen::VectorXd::Zero(size);
  state.learning_rate = learning_rate;
  return state;
}

void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grad) {
  if (params.size() != state.first_moment.size() || grad.size() != params.size()) {
    throw std::invalid_argument("optimizer state size mismatch");
  }
  state.step += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grad.array().square().matrix();
  const double correct1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double correct2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.learning_rate * (state.first_moment.array() / correct1) /
                    ((state.second_moment.array() / correct2).sqrt() + state.epsilon);
}

Eigen::VectorXd flatten(const LowRankGaussian& dist) {
  const Eigen::Index p = dist.dim();
  const Eigen::Index k = dist.rank();
  Eigen::VectorXd flat(2 * p + p * k);
  flat.head(p) = dist.mean;
  flat.segment(p, p) = dist.diag_raw;
  if (k > 0) {
    flat.tail(p * k) = Eigen::Map<const Eigen::VectorXd>(dist.factor.data(), p * k);
  }
  return flat;
}

Eigen::VectorXd flatten(const GaussianGrad& grad) {
  const Eigen::Index p = grad.mean.size();
  const Eigen::Index k = grad.factor.cols();
  Eigen::VectorXd flat(2 * p + p * k);
  flat.head(p) = grad.mean;
  flat.segment(p, p) = grad.diag_raw;
  if (k > 0) {
    flat.tail(p * k) = Eigen::Map<const Eigen::VectorXd>(grad.factor.data(), p * k);
  }
  return flat;
}

void unflatten_into(const Eigen::Ref<const Eigen::VectorXd>& flat, LowRankGaussian& dist) {
  const Eigen::Index p = dist.dim();
  const Eigen::Index k = dist.rank();
  if (flat.size() != 2 * p + p * k) {
    throw std::invalid_argument("flat parameter vector has the wrong length");
  }
  dist.mean = flat.head(p);
  dist.diag_raw = flat.segment(p, p);
  if (k > 0) {
    dist.factor = Eigen::Map<const Eigen::MatrixXd>(flat.segment(2 * p, p * k).data(), p, k);
  }
}

}  // namespace vistree
