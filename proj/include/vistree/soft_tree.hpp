#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vistree/errors.hpp"

namespace vistree {

enum class LeafKind { Constant, Linear };
enum class OutputMode { Density, MeanOnly };

// Fixed-depth complete binary soft tree. Internal nodes are indexed in
// breadth-first order, leaves left to right. With N = 2^depth - 1 internal
// nodes, heap positions 0..N-1 are internal and positions N..N+L-1 are the
// leaves, so children of position i sit at 2i+1 and 2i+2.
struct SoftTreeSpec {
  int depth = 1;
  Eigen::Index feature_dim = 1;
  LeafKind leaf_kind = LeafKind::Constant;
  double beta = 1.0;  // inverse temperature on the gating logits
  OutputMode output_mode = OutputMode::Density;

  Eigen::Index num_internal() const { return (Eigen::Index{1} << depth) - 1; }
  Eigen::Index num_leaves() const { return Eigen::Index{1} << depth; }
  Eigen::Index leaf_param_count() const {
    return leaf_kind == LeafKind::Constant ? 2 : 2 * feature_dim + 2;
  }
  void validate() const;
};

// Flat layout: for each internal node n in BFS order, (w_n in R^p, b_n);
// then for each leaf l left to right, the leaf block. Constant leaves store
// (mu_l, alpha_l); linear leaves store (w_l, b_l, w_hat_l, b_hat_l). The
// leaf std is always softplus of the stored pre-activation.
Eigen::Index param_count(const SoftTreeSpec& spec);
Eigen::Index node_offset(const SoftTreeSpec& spec, Eigen::Index node);
Eigen::Index leaf_offset(const SoftTreeSpec& spec, Eigen::Index leaf);

// Structured view of the flat vector, bijective with it.
struct NodeParams {
  Eigen::VectorXd weight;
  double bias = 0.0;
};
struct ConstantLeaf {
  double mean = 0.0;
  double std_raw = 0.0;
};
struct LinearLeaf {
  Eigen::VectorXd mean_weight;
  double mean_bias = 0.0;
  Eigen::VectorXd std_weight;
  double std_bias = 0.0;
};
struct StructuredParams {
  std::vector<NodeParams> nodes;
  std::vector<ConstantLeaf> constant_leaves;
  std::vector<LinearLeaf> linear_leaves;
};

StructuredParams unpack(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params);
Eigen::VectorXd pack(const SoftTreeSpec& spec, const StructuredParams& structured);

// beta * (w_n . x + b_n) for every internal node.
Eigen::VectorXd gating_logits(const SoftTreeSpec& spec,
                              const Eigen::Ref<const Eigen::VectorXd>& params,
                              const Eigen::Ref<const Eigen::VectorXd>& x);

// Log routing probabilities per leaf: the product along the root-to-leaf
// path of sigmoid gates, right branch taking sigmoid(z) and left branch
// 1 - sigmoid(z), accumulated in log space.
Eigen::VectorXd routing_log_probs(const SoftTreeSpec& spec,
                                  const Eigen::Ref<const Eigen::VectorXd>& params,
                                  const Eigen::Ref<const Eigen::VectorXd>& x);

// exp of the above; entries sum to one.
Eigen::VectorXd routing_probs(const SoftTreeSpec& spec,
                              const Eigen::Ref<const Eigen::VectorXd>& params,
                              const Eigen::Ref<const Eigen::VectorXd>& x);

struct LeafDensity {
  double mean = 0.0;
  double std = 1.0;  // strictly positive
};

// Gaussian predictive density of one leaf at x. Constant leaves ignore x;
// linear leaves have mean and std pre-activation affine in x.
LeafDensity leaf_density(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                         Eigen::Index leaf_index, const Eigen::Ref<const Eigen::VectorXd>& x);

// log p(y | x, params): log-sum-exp over leaves of routing log-prob plus the
// leaf Gaussian log-density.
double log_likelihood(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                      const Eigen::Ref<const Eigen::VectorXd>& x, double y);

// Routing-probability-weighted mixture of leaf means; lies in the convex
// hull of the leaf means at x.
double predict_mean(const SoftTreeSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& params,
                    const Eigen::Ref<const Eigen::VectorXd>& x);

double gaussian_log_density(double y, double mean, double std);

}  // namespace vistree
