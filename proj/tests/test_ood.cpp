#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "vistree/activations.hpp"
#include "vistree/data.hpp"
#include "vistree/ood.hpp"
#include "vistree/predictive.hpp"
#include "vistree/random.hpp"

using namespace vistree;

TEST_CASE("auroc worked examples") {
  CHECK(auroc({0.1, 0.2}, {0.8, 0.9}) == 1.0);
  CHECK(auroc({0.5, 0.5}, {0.5, 0.5}) == 0.5);
  CHECK(auroc({1.0, 3.0}, {2.0, 4.0}) == 0.75);
  CHECK(auroc({0.8, 0.9}, {0.1, 0.2}) == 0.0);
  CHECK_THROWS_AS(auroc({}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({1.0}, {}), std::invalid_argument);
}

TEST_CASE("auroc complements under label swap and respects monotone transforms") {
  RandomStream rng(stream_key(71, "scores"));
  std::vector<double> id(30), ood(25);
  for (double& v : id) v = rng.normal();
  for (double& v : ood) v = rng.normal() + 0.8;
  double base = auroc(id, ood);
  CHECK(auroc(ood, id) == doctest::Approx(1.0 - base).epsilon(1e-12));

  std::vector<double> id_t = id, ood_t = ood;
  for (double& v : id_t) v = std::exp(2.0 * v + 1.0);
  for (double& v : ood_t) v = std::exp(2.0 * v + 1.0);
  CHECK(auroc(id_t, ood_t) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("auroc gives half credit to ties") {
  // Three of the four comparisons are wins, one is a tie: (3 + 0.5) / 4.
  CHECK(auroc({1.0, 2.0}, {2.0, 3.0}) == doctest::Approx(0.875).epsilon(1e-12));
}

TEST_CASE("best_threshold worked example") {
  auto [threshold, accuracy] = best_threshold({1.0, 2.0, 4.0}, {3.0, 5.0, 6.0});
  CHECK(threshold == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(accuracy == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("best_threshold separates disjoint score ranges perfectly") {
  auto [threshold, accuracy] = best_threshold({0.1, 0.2, 0.3}, {0.7, 0.8});
  CHECK(accuracy == 1.0);
  CHECK(threshold > 0.3);
  CHECK(threshold < 0.7);
}

TEST_CASE("best_threshold on identical scores falls back to reject-all") {
  auto [threshold, accuracy] = best_threshold({0.4, 0.4}, {0.4});
  CHECK(accuracy == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(threshold == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("ood_report scores match the per-row epistemic operation") {
  Dataset d = synth(SynthName::TailLine, 80, 0.1, 72);
  TrainConfig c;
  c.depth = 2;
  c.rank = 2;
  c.steps = 200;
  c.batch_size = 80;
  FitOutput fit = fit_vst(d.features, d.target, c);

  Eigen::MatrixXd id_X = d.features.topRows(6);
  Eigen::MatrixXd ood_X = d.features.topRows(4) * 5.0;
  OodReport report = ood_report(fit.model, id_X, ood_X, 32, 9);
  REQUIRE(report.id_scores.size() == 6);
  REQUIRE(report.ood_scores.size() == 4);
  for (int i = 0; i < 6; ++i) {
    double direct = epistemic_uncertainty(fit.model, id_X.row(i).transpose(), 32, 9);
    CHECK(report.id_scores[static_cast<std::size_t>(i)] ==
          doctest::Approx(direct).epsilon(1e-12));
  }
  CHECK(report.auroc ==
        doctest::Approx(auroc(report.id_scores, report.ood_scores)).epsilon(1e-12));
  auto [threshold, accuracy] = best_threshold(report.id_scores, report.ood_scores);
  CHECK(report.best_threshold == threshold);
  CHECK(report.threshold_accuracy == accuracy);
}

TEST_CASE("swapping the id and ood sets complements the reported auroc") {
  Dataset d = synth(SynthName::Linear, 60, 0.2, 73);
  TrainConfig c;
  c.depth = 1;
  c.rank = 1;
  c.steps = 150;
  c.batch_size = 60;
  FitOutput fit = fit_vst(d.features, d.target, c);
  Eigen::MatrixXd a = d.features.topRows(8);
  Eigen::MatrixXd b = d.features.topRows(8) * 6.0;
  OodReport forward = ood_report(fit.model, a, b, 24, 5);
  OodReport backward = ood_report(fit.model, b, a, 24, 5);
  CHECK(forward.auroc == doctest::Approx(1.0 - backward.auroc).epsilon(1e-12));
}

TEST_CASE("a point-mass posterior cannot separate anything") {
  SoftTreeSpec spec;
  spec.depth = 1;
  spec.feature_dim = 1;
  spec.leaf_kind = LeafKind::Constant;
  spec.beta = 2.0;
  Eigen::VectorXd theta(param_count(spec));
  theta << 0.4, 0.0, -0.2, inverse_softplus(0.5), 0.6, inverse_softplus(0.5);
  VstModel m;
  m.spec = spec;
  m.posterior.mean = theta;
  m.posterior.diag_raw = Eigen::VectorXd::Constant(theta.size(), -40.0);
  m.posterior.factor.resize(theta.size(), 0);
  m.feature_stats.mean = Eigen::VectorXd::Zero(1);
  m.feature_stats.std = Eigen::VectorXd::Ones(1);
  m.feature_stats.constant.assign(1, 0);

  Eigen::MatrixXd id_X(3, 1), ood_X(3, 1);
  id_X << -0.5, 0.0, 0.5;
  ood_X << 4.0, 5.0, 6.0;
  OodReport report = ood_report(m, id_X, ood_X, 16, 2);
  CHECK(report.auroc == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("far-away inputs score higher epistemic uncertainty after a real fit") {
  Dataset d = synth(SynthName::TailLine, 200, 0.05, 74);
  TrainConfig c;
  c.depth = 2;
  c.rank = 3;
  c.steps = 800;
  c.batch_size = 128;
  c.learning_rate = 5e-3;
  c.seed = 1;
  FitOutput fit = fit_vst(d.features, d.target, c);
  Eigen::MatrixXd id_X = d.features.topRows(40);
  Eigen::MatrixXd ood_X(10, 1);
  for (int i = 0; i < 10; ++i) ood_X(i, 0) = 6.0 + 0.2 * i;
  OodReport report = ood_report(fit.model, id_X, ood_X, 128, 3);
  CHECK(report.auroc > 0.8);
}
