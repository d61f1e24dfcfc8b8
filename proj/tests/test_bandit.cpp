#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "vistree/activations.hpp"
#include "vistree/bandit.hpp"
#include "vistree/random.hpp"

using namespace vistree;

namespace {

VstModel point_model(double left_mean, double right_mean, double gate_weight,
                     double spread_raw = -40.0) {
  SoftTreeSpec spec;
  spec.depth = 1;
  spec.feature_dim = 1;
  spec.leaf_kind = LeafKind::Constant;
  spec.beta = 1.0;
  VstModel m;
  m.spec = spec;
  m.posterior.mean.resize(param_count(spec));
  m.posterior.mean << gate_weight, 0.0, left_mean, inverse_softplus(0.5), right_mean,
      inverse_softplus(0.5);
  m.posterior.diag_raw = Eigen::VectorXd::Constant(param_count(spec), spread_raw);
  m.posterior.factor.resize(param_count(spec), 0);
  m.feature_stats.mean = Eigen::VectorXd::Zero(1);
  m.feature_stats.std = Eigen::VectorXd::Ones(1);
  m.feature_stats.constant.assign(1, 0);
  return m;
}

TrainConfig bandit_train_config() {
  TrainConfig c;
  c.depth = 1;
  c.rank = 1;
  c.steps = 60;
  c.batch_size = 32;
  c.learning_rate = 1e-2;
  c.beta = 5.0;
  c.leaf_kind = LeafKind::Linear;
  return c;
}

}  // namespace

TEST_CASE("the bump reward peaks at the arm offset with the documented height") {
  ExplorationEnv env = ExplorationEnv::standard();
  REQUIRE(env.num_arms() == 8);
  CHECK(env.offsets[0] == doctest::Approx(-0.9).epsilon(1e-12));
  CHECK(env.offsets[7] == doctest::Approx(0.9).epsilon(1e-12));
  for (int arm = 0; arm < env.num_arms(); ++arm) {
    double peak =
        2.0 * sigmoid(env.beta_env * env.alpha) - 1.0;
    CHECK(exploration_reward(env, env.offsets[arm], arm, 0.0) ==
          doctest::Approx(peak).epsilon(1e-12));
  }
  CHECK_THROWS_AS(exploration_reward(env, 0.0, 8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(exploration_reward(env, 0.0, -1, 0.0), std::invalid_argument);
}

TEST_CASE("the bump is even around its center and vanishes in the far tail") {
  ExplorationEnv env = ExplorationEnv::standard();
  for (double u : {0.05, 0.1, 0.3}) {
    CHECK(exploration_reward(env, env.offsets[3] + u, 3, 0.0) ==
          doctest::Approx(exploration_reward(env, env.offsets[3] - u, 3, 0.0))
              .epsilon(1e-12));
  }
  // beta (|x - offset| - alpha) > 14 puts both sigmoids in the same tail.
  double far = env.offsets[0] + env.alpha + 15.0 / env.beta_env;
  CHECK(std::abs(exploration_reward(env, far, 0, 0.0)) < 1e-6);
}

TEST_CASE("the quadrature regret reference matches a Monte Carlo estimate") {
  ExplorationEnv env = ExplorationEnv::standard();
  double quad = exploration_random_regret_per_step(env);
  CHECK(quad > 0.0);

  RandomStream rng(stream_key(81, "mc"));
  const int n = 400000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.uniform(-1.0, 1.0);
    int arm = static_cast<int>(rng.below(static_cast<std::uint64_t>(env.num_arms())));
    double best = -1e300;
    for (int a = 0; a < env.num_arms(); ++a) {
      best = std::max(best, exploration_reward(env, x, a, 0.0));
    }
    acc += best - exploration_reward(env, x, arm, 0.0);
  }
  CHECK(acc / n == doctest::Approx(quad).epsilon(0.01));
}

TEST_CASE("thompson_step picks the obviously better arm under point masses") {
  std::vector<VstModel> models;
  models.push_back(point_model(0.1, 0.1, 0.0));
  models.push_back(point_model(0.9, 0.9, 0.0));
  Eigen::VectorXd x(1);
  x << 0.0;
  for (unsigned long long seed = 0; seed < 10; ++seed) {
    CHECK(thompson_step(models, x, seed) == 1);
  }
  std::vector<VstModel> one;
  one.push_back(point_model(0.3, 0.3, 0.0));
  CHECK(thompson_step(one, x, 4) == 0);
  // Exact ties resolve to the lowest index.
  std::vector<VstModel> tied;
  tied.push_back(point_model(0.5, 0.5, 0.0));
  tied.push_back(point_model(0.5, 0.5, 0.0));
  CHECK(thompson_step(tied, x, 4) == 0);
}

TEST_CASE("identical diffuse posteriors split the draw evenly") {
  std::vector<VstModel> models;
  models.push_back(point_model(0.0, 0.0, 0.0, inverse_softplus(0.6)));
  models.push_back(point_model(0.0, 0.0, 0.0, inverse_softplus(0.6)));
  Eigen::VectorXd x(1);
  x << 0.2;
  int wins = 0;
  const int trials = 10000;
  for (int seed = 0; seed < trials; ++seed) {
    if (thompson_step(models, x, static_cast<unsigned long long>(seed)) == 0) wins++;
  }
  double rate = static_cast<double>(wins) / trials;
  CHECK(rate > 0.48);
  CHECK(rate < 0.52);
}

TEST_CASE("replayed rewards make the whole loop deterministic") {
  RandomStream rng(stream_key(82, "replay"));
  const Eigen::Index n = 30;
  Eigen::MatrixXd contexts(n, 2);
  Eigen::MatrixXd rewards(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    contexts(i, 0) = rng.uniform(-1.0, 1.0);
    contexts(i, 1) = rng.uniform(-1.0, 1.0);
    for (Eigen::Index a = 0; a < 3; ++a) rewards(i, a) = rng.normal();
  }
  AgentConfig agent;
  agent.policy = PolicyKind::Vst;
  agent.retrain_every = 10;
  agent.train = bandit_train_config();

  ReplayEnv env1(contexts, rewards);
  BanditTrace a = run_bandit(env1, agent, 25, 5);
  ReplayEnv env2(contexts, rewards);
  BanditTrace b = run_bandit(env2, agent, 25, 5);
  REQUIRE(a.horizon() == 25);
  CHECK(a.arm == b.arm);
  CHECK((a.reward - b.reward).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.cumulative_regret - b.cumulative_regret).cwiseAbs().maxCoeff() == 0.0);

  // Contexts cycle through the logged rows in order.
  for (long t = 0; t < 25; ++t) {
    CHECK(a.contexts(t, 0) == contexts(t % n, 0));
  }
}

TEST_CASE("regret bookkeeping is a prefix sum of instantaneous gaps") {
  ExplorationEnv env = ExplorationEnv::standard();
  AgentConfig agent;
  agent.policy = PolicyKind::Random;
  BanditTrace trace = run_bandit(env, agent, 200, 3);
  REQUIRE(trace.horizon() == 200);
  double acc = 0.0;
  for (long t = 0; t < 200; ++t) {
    CHECK(trace.instant_regret[t] >= -1e-12);
    acc += trace.instant_regret[t];
    CHECK(trace.cumulative_regret[t] == doctest::Approx(acc).epsilon(1e-12));
    int arm = trace.arm[static_cast<std::size_t>(t)];
    double expect_gap = trace.optimal_expected[t] -
                        exploration_reward(env, trace.contexts(t, 0), arm, 0.0);
    CHECK(trace.instant_regret[t] == doctest::Approx(expect_gap).epsilon(1e-12));
  }
  CHECK(trace.final_regret() == trace.cumulative_regret[199]);
}

TEST_CASE("the oracle policy never incurs regret") {
  ExplorationEnv env = ExplorationEnv::standard();
  AgentConfig agent;
  agent.policy = PolicyKind::Oracle;
  BanditTrace trace = run_bandit(env, agent, 300, 11);
  CHECK(trace.final_regret() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("random play accumulates regret at the quadrature rate") {
  ExplorationEnv env = ExplorationEnv::standard();
  AgentConfig agent;
  agent.policy = PolicyKind::Random;
  BanditTrace trace = run_bandit(env, agent, 4000, 13);
  double per_step = exploration_random_regret_per_step(env);
  CHECK(trace.final_regret() / 4000.0 == doctest::Approx(per_step).epsilon(0.1));
}

TEST_CASE("early forcing covers every arm before model play begins") {
  ExplorationEnv env = ExplorationEnv::standard();
  AgentConfig agent;
  agent.policy = PolicyKind::Vst;
  agent.retrain_every = 25;
  agent.train = bandit_train_config();
  BanditTrace trace = run_bandit(env, agent, 40, 7);
  std::vector<int> counts(8, 0);
  for (long t = 0; t < 16; ++t) counts[static_cast<std::size_t>(trace.arm[static_cast<std::size_t>(t)])]++;
  for (int c : counts) CHECK(c == 2);
}

TEST_CASE("the learning policy runs end to end and logs a full trace") {
  ExplorationEnv env = ExplorationEnv::standard();
  env.offsets.resize(3);
  env.offsets << -0.6, 0.0, 0.6;
  AgentConfig agent;
  agent.policy = PolicyKind::Vst;
  agent.retrain_every = 30;
  agent.train = bandit_train_config();
  BanditTrace trace = run_bandit(env, agent, 120, 9);
  REQUIRE(trace.horizon() == 120);
  REQUIRE(trace.contexts.rows() == 120);
  CHECK(std::isfinite(trace.final_regret()));
  for (int arm : trace.arm) {
    CHECK(arm >= 0);
    CHECK(arm < 3);
  }
  BanditTrace again = run_bandit(env, agent, 120, 9);
  CHECK(again.arm == trace.arm);
  CHECK((again.reward - trace.reward).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear portfolio environment exposes its expected rewards") {
  LinearPortfolioEnv env = LinearPortfolioEnv::make(4, 3, 19);
  REQUIRE(env.num_arms() == 4);
  REQUIRE(env.context_dim() == 3);
  RandomStream rng(stream_key(83, "ctx"));
  Eigen::VectorXd x = env.context(0, rng);
  REQUIRE(x.size() == 3);
  CHECK(x.minCoeff() >= -1.0);
  CHECK(x.maxCoeff() <= 1.0);
  for (int a = 0; a < 4; ++a) {
    CHECK(env.expected_reward(0, x, a) ==
          doctest::Approx(env.arm_weights.row(a).dot(x)).epsilon(1e-12));
  }
  double noiseless = env.expected_reward(0, x, 1);
  RandomStream reward_rng(stream_key(83, "r"));
  double noisy = env.reward(0, x, 1, reward_rng);
  CHECK(std::abs(noisy - noiseless) < 6.0 * env.noise_std);
}
