#include "vistree/ood.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vistree/predictive.hpp"

namespace vistree {

double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) {
    throw std::invalid_argument("auroc needs non-empty score sets");
  }
  // Midranks over the pooled sample; the rank sum of the OOD group gives the
  // Mann-Whitney statistic with ties counted half.
  struct Entry {
    double score;
    bool ood;
  };
  std::vector<Entry> pooled;
  pooled.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) {
    pooled.push_back({s, false});
  }
  for (double s : ood_scores) {
    pooled.push_back({s, true});
  }
  std::sort(pooled.begin(), pooled.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  double ood_rank_sum = 0.0;
  size_t i = 0;
  while (i < pooled.size()) {
    size_t j = i;
    while (j < pooled.size() && pooled[j].score == pooled[i].score) {
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based ranks i+1 .. j
    for (size_t t = i; t < j; ++t) {
      if (pooled[t].ood) {
        ood_rank_sum += midrank;
      }
    }
    i = j;
  }
  const double n_ood = static_cast<double>(ood_scores.size());
  const double n_id = static_cast<double>(id_scores.size());
  const double u = ood_rank_sum - n_ood * (n_ood + 1.0) / 2.0;
  return u / (n_id * n_ood);
}

std::pair<double, double> best_threshold(const std::vector<double>& id_scores,
                                         const std::vector<double>& ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) {
    throw std::invalid_argument("best_threshold needs non-empty score sets");
  }
  std::vector<double> values;
  values.reserve(id_scores.size() + ood_scores.size());
  values.insert(values.end(), id_scores.begin(), id_scores.end());
  values.insert(values.end(), ood_scores.begin(), ood_scores.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  std::vector<double> candidates;
  for (size_t i = 0; i + 1 < values.size(); ++i) {
    candidates.push_back(0.5 * (values[i] + values[i + 1]));
  }
  // Classify-everything-as-ID fallback; guarantees balanced accuracy >= 0.5.
  candidates.push_back(values.back());

  const double n_id = static_cast<double>(id_scores.size());
  const double n_ood = static_cast<double>(ood_scores.size());
  double best_t = candidates.front();
  double best_acc = -1.0;
  for (double t : candidates) {
    double id_correct = 0.0;
    for (double s : id_scores) {
      id_correct += s <= t ? 1.0 : 0.0;
    }
    double ood_correct = 0.0;
    for (double s : ood_scores) {
      ood_correct += s > t ? 1.0 : 0.0;
    }
    const double balanced = 0.5 * (id_correct / n_id + ood_correct / n_ood);
    if (balanced > best_acc) {
      best_acc = balanced;
      best_t = t;
    }
  }
  return {best_t, best_acc};
}

namespace {

template <typename Model>
std::vector<double> epistemic_scores(const Model& model,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     Eigen::Index samples, unsigned long long seed) {
  std::vector<double> scores(static_cast<size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    scores[static_cast<size_t>(i)] =
        epistemic_uncertainty(model, X.row(i).transpose(), samples, seed);
  }
  return scores;
}

template <typename Model>
OodReport report_impl(const Model& model, const Eigen::Ref<const Eigen::MatrixXd>& id_X,
                      const Eigen::Ref<const Eigen::MatrixXd>& ood_X, Eigen::Index samples,
                      unsigned long long seed) {
  if (id_X.rows() == 0 || ood_X.rows() == 0) {
    throw std::invalid_argument("ood_report needs non-empty ID and OOD sets");
  }
  OodReport report;
  report.id_scores = epistemic_scores(model, id_X, samples, seed);
  report.ood_scores = epistemic_scores(model, ood_X, samples, seed);
  report.auroc = auroc(report.id_scores, report.ood_scores);
  const auto [threshold, accuracy] = best_threshold(report.id_scores, report.ood_scores);
  report.best_threshold = threshold;
  report.threshold_accuracy = accuracy;
  return report;
}

}  // namespace

OodReport ood_report(const VstModel& model, const Eigen::Ref<const Eigen::MatrixXd>& id_X,
                     const Eigen::Ref<const Eigen::MatrixXd>& ood_X, Eigen::Index samples,
                     unsigned long long seed) {
  return report_impl(model, id_X, ood_X, samples, seed);
}

OodReport ood_report(const VsgbmModel& model, const Eigen::Ref<const Eigen::MatrixXd>& id_X,
                     const Eigen::Ref<const Eigen::MatrixXd>& ood_X, Eigen::Index samples,
                     unsigned long long seed) {
  return report_impl(model, id_X, ood_X, samples, seed);
}

}  // namespace vistree
