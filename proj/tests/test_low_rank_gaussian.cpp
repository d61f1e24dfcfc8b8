#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "vistree/activations.hpp"
#include "vistree/low_rank_gaussian.hpp"
#include "vistree/random.hpp"

using namespace vistree;

namespace {

LowRankGaussian make_dist(const Eigen::VectorXd& mean, const Eigen::VectorXd& std,
                          const Eigen::MatrixXd& factor) {
  LowRankGaussian d;
  d.mean = mean;
  d.diag_raw = std.unaryExpr([](double s) { return inverse_softplus(s); });
  d.factor = factor;
  return d;
}

Eigen::MatrixXd dense_covariance(const LowRankGaussian& d) {
  Eigen::VectorXd s = d.effective_std();
  Eigen::MatrixXd cov = s.array().square().matrix().asDiagonal();
  if (d.rank() > 0) cov += d.factor * d.factor.transpose();
  return cov;
}

LowRankGaussian random_dist(Eigen::Index p, Eigen::Index k, std::uint64_t key) {
  RandomStream rng(key);
  LowRankGaussian d;
  d.mean.resize(p);
  d.diag_raw.resize(p);
  d.factor.resize(p, k);
  for (Eigen::Index i = 0; i < p; ++i) d.mean[i] = rng.normal();
  for (Eigen::Index i = 0; i < p; ++i) d.diag_raw[i] = rng.normal() * 0.5;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < k; ++j) d.factor(i, j) = 0.4 * rng.normal();
  return d;
}

}  // namespace

TEST_CASE("effective_std is the softplus of the raw diagonal") {
  LowRankGaussian d;
  d.mean = Eigen::VectorXd::Zero(3);
  d.diag_raw.resize(3);
  d.diag_raw << -2.0, 0.0, 1.5;
  d.factor.resize(3, 0);
  Eigen::VectorXd s = d.effective_std();
  for (int i = 0; i < 3; ++i) {
    CHECK(s[i] == doctest::Approx(softplus(d.diag_raw[i])).epsilon(1e-15));
  }
}

TEST_CASE("sample is the documented affine map of the noise") {
  LowRankGaussian d = random_dist(4, 2, stream_key(11, "dist"));
  Eigen::VectorXd e1(4);
  e1 << 0.3, -1.2, 0.0, 2.0;
  Eigen::VectorXd e2(2);
  e2 << -0.7, 0.4;
  Eigen::VectorXd theta = sample(d, e1, e2);
  Eigen::VectorXd expected =
      d.mean + (d.effective_std().array() * e1.array()).matrix() + d.factor * e2;
  CHECK((theta - expected).cwiseAbs().maxCoeff() < 1e-15);

  Eigen::VectorXd zero1 = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd zero2 = Eigen::VectorXd::Zero(2);
  CHECK((sample(d, zero1, zero2) - d.mean).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd bad(3);
  bad.setZero();
  CHECK_THROWS_AS(sample(d, bad, e2), std::invalid_argument);
  CHECK_THROWS_AS(sample(d, e1, bad), std::invalid_argument);
}

TEST_CASE("log_det_capacitance handles rank zero and the unit example") {
  LowRankGaussian d;
  d.mean = Eigen::VectorXd::Zero(2);
  d.diag_raw = Eigen::VectorXd::Constant(2, inverse_softplus(1.0));
  d.factor.resize(2, 0);
  CHECK(log_det_capacitance(d) == 0.0);

  d.factor.resize(2, 1);
  d.factor << 1.0, 0.0;
  CHECK(log_det_capacitance(d) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("log_det_capacitance agrees with the dense determinant identity") {
  LowRankGaussian d = random_dist(3, 2, stream_key(12, "dist"));
  Eigen::MatrixXd cov = dense_covariance(d);
  double dense = std::log(cov.determinant()) -
                 d.effective_std().array().square().log().sum();
  CHECK(log_det_capacitance(d) == doctest::Approx(dense).epsilon(1e-10));
}

TEST_CASE("kl_to_isotropic unit example and zero at the prior") {
  LowRankGaussian d;
  d.mean = Eigen::VectorXd::Constant(1, 1.0);
  d.diag_raw = Eigen::VectorXd::Constant(1, inverse_softplus(1.0));
  d.factor.resize(1, 0);
  IsotropicPrior prior;
  prior.variance = 1.0;
  CHECK(kl_to_isotropic(d, prior) == doctest::Approx(0.5).epsilon(1e-12));

  d.mean[0] = 0.0;
  CHECK(kl_to_isotropic(d, prior) == doctest::Approx(0.0).epsilon(1e-12));

  LowRankGaussian wide;
  wide.mean = Eigen::VectorXd::Zero(3);
  wide.diag_raw = Eigen::VectorXd::Constant(3, inverse_softplus(std::sqrt(2.0)));
  wide.factor.resize(3, 0);
  IsotropicPrior p2;
  p2.variance = 2.0;
  CHECK(kl_to_isotropic(wide, p2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kl_to_isotropic is non-negative on random instances") {
  for (std::uint64_t i = 0; i < 20; ++i) {
    LowRankGaussian d = random_dist(2 + static_cast<Eigen::Index>(i % 5),
                                    static_cast<Eigen::Index>(i % 3),
                                    stream_key(13, "dist", i));
    IsotropicPrior prior;
    prior.variance = 0.5 + 0.2 * static_cast<double>(i % 4);
    CHECK(kl_to_isotropic(d, prior) >= -1e-12);
  }
}

TEST_CASE("kl_to_isotropic matches a dense closed form") {
  LowRankGaussian d = random_dist(4, 2, stream_key(14, "dist"));
  IsotropicPrior prior;
  prior.variance = 1.7;
  Eigen::MatrixXd cov = dense_covariance(d);
  double p = 4.0;
  double dense = 0.5 * (cov.trace() / prior.variance - p +
                        d.mean.squaredNorm() / prior.variance +
                        p * std::log(prior.variance) - std::log(cov.determinant()));
  CHECK(kl_to_isotropic(d, prior) == doctest::Approx(dense).epsilon(1e-10));
}

TEST_CASE("kl_to_isotropic matches a Monte Carlo estimate") {
  LowRankGaussian d = random_dist(3, 1, stream_key(15, "dist"));
  IsotropicPrior prior;
  prior.variance = 1.3;
  RandomStream rng(stream_key(15, "mc"));
  const int n = 200000;
  double acc = 0.0;
  const double log2pi = std::log(2.0 * 3.14159265358979323846);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd e1(3), e2(1);
    for (int j = 0; j < 3; ++j) e1[j] = rng.normal();
    e2[0] = rng.normal();
    Eigen::VectorXd theta = sample(d, e1, e2);
    double logq = log_density(d, theta);
    double logp = -0.5 * (3.0 * log2pi + 3.0 * std::log(prior.variance) +
                          theta.squaredNorm() / prior.variance);
    acc += logq - logp;
  }
  CHECK(acc / n == doctest::Approx(kl_to_isotropic(d, prior)).epsilon(0.02));
}

TEST_CASE("kl_gradient matches central finite differences") {
  LowRankGaussian d = random_dist(5, 2, stream_key(16, "dist"));
  IsotropicPrior prior;
  prior.variance = 0.9;
  GaussianGrad g = kl_gradient(d, prior);

  auto fd = [&](double* slot) {
    double orig = *slot;
    double h = 1e-5 * std::max(1.0, std::abs(orig));
    *slot = orig + h;
    double up = kl_to_isotropic(d, prior);
    *slot = orig - h;
    double down = kl_to_isotropic(d, prior);
    *slot = orig;
    return (up - down) / (2.0 * h);
  };

  for (Eigen::Index i = 0; i < d.dim(); ++i) {
    double est = fd(&d.mean[i]);
    CHECK(std::abs(g.mean[i] - est) / std::max({std::abs(est), std::abs(g.mean[i]), 1e-3}) < 1e-6);
    est = fd(&d.diag_raw[i]);
    CHECK(std::abs(g.diag_raw[i] - est) /
              std::max({std::abs(est), std::abs(g.diag_raw[i]), 1e-3}) < 1e-6);
    for (Eigen::Index j = 0; j < d.rank(); ++j) {
      est = fd(&d.factor(i, j));
      CHECK(std::abs(g.factor(i, j) - est) /
                std::max({std::abs(est), std::abs(g.factor(i, j)), 1e-3}) < 1e-6);
    }
  }
}

TEST_CASE("log_density matches the standard normal constant and a dense form") {
  LowRankGaussian d;
  d.mean = Eigen::VectorXd::Zero(1);
  d.diag_raw = Eigen::VectorXd::Constant(1, inverse_softplus(1.0));
  d.factor.resize(1, 0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  CHECK(log_density(d, x) == doctest::Approx(-0.91893853320467274).epsilon(1e-12));

  LowRankGaussian r = random_dist(3, 2, stream_key(17, "dist"));
  Eigen::VectorXd at(3);
  at << 0.2, -0.5, 1.1;
  Eigen::MatrixXd cov = dense_covariance(r);
  Eigen::VectorXd diff = at - r.mean;
  double dense = -0.5 * (3.0 * std::log(2.0 * 3.14159265358979323846) +
                         std::log(cov.determinant()) +
                         diff.dot(cov.llt().solve(diff)));
  CHECK(log_density(r, at) == doctest::Approx(dense).epsilon(1e-10));
}
