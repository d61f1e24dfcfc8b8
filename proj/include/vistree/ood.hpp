#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "vistree/vsgbm.hpp"
#include "vistree/vst_training.hpp"

namespace vistree {

// P(ood score > id score) + half credit for ties, the rank-statistic form of
// the area under the ROC curve. Invariant under strictly increasing score
// transforms.
double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores);

// Threshold maximizing balanced accuracy of the rule "score > t is OOD",
// searched over midpoints of adjacent distinct scores plus a reject-all
// candidate. Ties resolve to the smallest threshold.
std::pair<double, double> best_threshold(const std::vector<double>& id_scores,
                                         const std::vector<double>& ood_scores);

struct OodReport {
  double auroc = 0.5;
  double best_threshold = 0.0;
  double threshold_accuracy = 0.5;
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

// Scores every row by epistemic uncertainty under shared posterior draws.
OodReport ood_report(const VstModel& model, const Eigen::Ref<const Eigen::MatrixXd>& id_X,
                     const Eigen::Ref<const Eigen::MatrixXd>& ood_X, Eigen::Index samples,
                     unsigned long long seed);
OodReport ood_report(const VsgbmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& id_X,
                     const Eigen::Ref<const Eigen::MatrixXd>& ood_X, Eigen::Index samples,
                     unsigned long long seed);

}  // namespace vistree
