#include "vistree/soft_tree.hpp"

#include <cmath>
#include <stdexcept>

#include "vistree/activations.hpp"

namespace vistree {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;

void check_x(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != spec.feature_dim) {
    throw std::invalid_argument("soft_tree: feature vector length does not match spec");
  }
  if (!x.allFinite()) {
    throw NumericError("soft_tree: non-finite feature vector");
  }
}

void check_params(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params) {
  if (params.size() != param_count(spec)) {
    throw std::invalid_argument("soft_tree: parameter vector length does not match spec");
  }
}

}  // namespace

void SoftTreeSpec::validate() const {
  if (depth < 1) {
    throw std::invalid_argument("SoftTreeSpec: depth must be >= 1");
  }
  if (feature_dim < 1) {
    throw std::invalid_argument("SoftTreeSpec: feature_dim must be >= 1");
  }
  if (!(beta > 0.0)) {
    throw std::invalid_argument("SoftTreeSpec: beta must be positive");
  }
}

Eigen::Index param_count(const SoftTreeSpec& spec) {
  return spec.num_internal() * (spec.feature_dim + 1) +
         spec.num_leaves() * spec.leaf_param_count();
}

Eigen::Index node_offset(const SoftTreeSpec& spec, Eigen::Index node) {
  return node * (spec.feature_dim + 1);
}

Eigen::Index leaf_offset(const SoftTreeSpec& spec, Eigen::Index leaf) {
  return spec.num_internal() * (spec.feature_dim + 1) + leaf * spec.leaf_param_count();
}

StructuredParams unpack(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params) {
  check_params(spec, params);
  const Eigen::Index p = spec.feature_dim;
  StructuredParams out;
  out.nodes.resize(static_cast<std::size_t>(spec.num_internal()));
  for (Eigen::Index n = 0; n < spec.num_internal(); ++n) {
    const Eigen::Index off = node_offset(spec, n);
    out.nodes[static_cast<std::size_t>(n)].weight = params.segment(off, p);
    out.nodes[static_cast<std::size_t>(n)].bias = params[off + p];
  }
  for (Eigen::Index l = 0; l < spec.num_leaves(); ++l) {
    const Eigen::Index off = leaf_offset(spec, l);
    if (spec.leaf_kind == LeafKind::Constant) {
      out.constant_leaves.push_back({params[off], params[off + 1]});
    } else {
      LinearLeaf leaf;
      leaf.mean_weight = params.segment(off, p);
      leaf.mean_bias = params[off + p];
      leaf.std_weight = params.segment(off + p + 1, p);
      leaf.std_bias = params[off + 2 * p + 1];
      out.linear_leaves.push_back(std::move(leaf));
    }
  }
  return out;
}

Eigen::VectorXd pack(const SoftTreeSpec& spec, const StructuredParams& structured) {
  const Eigen::Index p = spec.feature_dim;
  Eigen::VectorXd params(param_count(spec));
  for (Eigen::Index n = 0; n < spec.num_internal(); ++n) {
    const auto& node = structured.nodes.at(static_cast<std::size_t>(n));
    const Eigen::Index off = node_offset(spec, n);
    params.segment(off, p) = node.weight;
    params[off + p] = node.bias;
  }
  for (Eigen::Index l = 0; l < spec.num_leaves(); ++l) {
    const Eigen::Index off = leaf_offset(spec, l);
    if (spec.leaf_kind == LeafKind::Constant) {
      const auto& leaf = structured.constant_leaves.at(static_cast<std::size_t>(l));
      params[off] = leaf.mean;
      params[off + 1] = leaf.std_raw;
    } else {
      const auto& leaf = structured.linear_leaves.at(static_cast<std::size_t>(l));
      params.segment(off, p) = leaf.mean_weight;
      params[off + p] = leaf.mean_bias;
      params.segment(off + p + 1, p) = leaf.std_weight;
      params[off + 2 * p + 1] = leaf.std_bias;
    }
  }
  return params;
}

Eigen::VectorXd gating_logits(const SoftTreeSpec& spec,
                              const Eigen::Ref<const Eigen::VectorXd>& params,
                              const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_params(spec, params);
  check_x(spec, x);
  const Eigen::Index p = spec.feature_dim;
  Eigen::VectorXd logits(spec.num_internal());
  for (Eigen::Index n = 0; n < spec.num_internal(); ++n) {
    const Eigen::Index off = node_offset(spec, n);
    logits[n] = spec.beta * (params.segment(off, p).dot(x) + params[off + p]);
  }
  return logits;
}

Eigen::VectorXd routing_log_probs(const SoftTreeSpec& spec,
                                  const Eigen::Ref<const Eigen::VectorXd>& params,
                                  const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd logits = gating_logits(spec, params, x);
  const Eigen::Index num_internal = spec.num_internal();
  const Eigen::Index num_leaves = spec.num_leaves();
  // Propagate log-weights down the heap: left child takes log sigmoid(-z),
  // right child log sigmoid(z).
  Eigen::VectorXd logw = Eigen::VectorXd::Zero(num_internal + num_leaves);
  for (Eigen::Index n = 0; n < num_internal; ++n) {
    logw[2 * n + 1] = logw[n] + log_sigmoid(-logits[n]);
    logw[2 * n + 2] = logw[n] + log_sigmoid(logits[n]);
  }
  return logw.tail(num_leaves);
}

Eigen::VectorXd routing_probs(const SoftTreeSpec& spec,
                              const Eigen::Ref<const Eigen::VectorXd>& params,
                              const Eigen::Ref<const Eigen::VectorXd>& x) {
  return routing_log_probs(spec, params, x).array().exp();
}

LeafDensity leaf_density(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                         Eigen::Index leaf_index, const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_params(spec, params);
  check_x(spec, x);
  if (leaf_index < 0 || leaf_index >= spec.num_leaves()) {
    throw std::invalid_argument("leaf_density: leaf index out of range");
  }
  const Eigen::Index p = spec.feature_dim;
  const Eigen::Index off = leaf_offset(spec, leaf_index);
  LeafDensity out;
  if (spec.leaf_kind == LeafKind::Constant) {
    out.mean = params[off];
    out.std = softplus(params[off + 1]);
  } else {
    out.mean = params.segment(off, p).dot(x) + params[off + p];
    out.std = softplus(params.segment(off + p + 1, p).dot(x) + params[off + 2 * p + 1]);
  }
  return out;
}

double gaussian_log_density(double y, double mean, double std) {
  const double z = (y - mean) / std;
  return -kHalfLog2Pi - std::log(std) - 0.5 * z * z;
}

double log_likelihood(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                      const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
  if (!std::isfinite(y)) {
    throw NumericError("log_likelihood: non-finite target");
  }
  const Eigen::VectorXd logp = routing_log_probs(spec, params, x);
  Eigen::VectorXd terms(spec.num_leaves());
  for (Eigen::Index l = 0; l < spec.num_leaves(); ++l) {
    const LeafDensity density = leaf_density(spec, params, l, x);
    terms[l] = logp[l] + gaussian_log_density(y, density.mean, density.std);
  }
  const double max_term = terms.maxCoeff();
  return max_term + std::log((terms.array() - max_term).exp().sum());
}

double predict_mean(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                    const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd probs = routing_probs(spec, params, x);
  double out = 0.0;
  for (Eigen::Index l = 0; l < spec.num_leaves(); ++l) {
    out += probs[l] * leaf_density(spec, params, l, x).mean;
  }
  return out;
}

}  // namespace vistree
