#include "vistree/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "vistree/activations.hpp"
#include "vistree/errors.hpp"

namespace vistree {

ExplorationEnv ExplorationEnv::standard() {
  ExplorationEnv env;
  env.offsets = Eigen::VectorXd::LinSpaced(8, -0.9, 0.9);
  return env;
}

double exploration_reward(const ExplorationEnv& env, double x, int arm, double noise) {
  if (arm < 0 || arm >= env.num_arms()) {
    throw std::invalid_argument("arm index out of range");
  }
  const double offset = env.offsets[arm];
  return sigmoid(env.beta_env * (x + env.alpha - offset)) -
         sigmoid(env.beta_env * (x - env.alpha - offset)) + noise;
}

Eigen::VectorXd ExplorationEnv::context(long, RandomStream& rng) {
  Eigen::VectorXd x(1);
  x[0] = rng.uniform(-1.0, 1.0);
  return x;
}

double ExplorationEnv::reward(long, const Eigen::Ref<const Eigen::VectorXd>& x, int arm,
                              RandomStream& rng) {
  return exploration_reward(*this, x[0], arm, noise_std * rng.normal());
}

double ExplorationEnv::expected_reward(long, const Eigen::Ref<const Eigen::VectorXd>& x,
                                       int arm) const {
  return exploration_reward(*this, x[0], arm, 0.0);
}

double exploration_random_regret_per_step(const ExplorationEnv& env) {
  // Simpson quadrature of E_x[max_a r(x,a) - avg_a r(x,a)] over x ~ U[-1,1].
  const int intervals = 20000;
  const double h = 2.0 / intervals;
  const int k = env.num_arms();
  auto gap = [&](double x) {
    double best = -1e300;
    double total = 0.0;
    for (int a = 0; a < k; ++a) {
      const double r = exploration_reward(env, x, a, 0.0);
      best = std::max(best, r);
      total += r;
    }
    return best - total / k;
  };
  double integral = gap(-1.0) + gap(1.0);
  for (int i = 1; i < intervals; ++i) {
    integral += (i % 2 == 1 ? 4.0 : 2.0) * gap(-1.0 + i * h);
  }
  integral *= h / 3.0;
  return 0.5 * integral;
}

LinearPortfolioEnv LinearPortfolioEnv::make(int arms, Eigen::Index dim, unsigned long long seed) {
  if (arms < 1 || dim < 1) {
    throw std::invalid_argument("portfolio environment needs arms >= 1 and dim >= 1");
  }
  LinearPortfolioEnv env;
  RandomStream rng(seed, "portfolio");
  env.arm_weights = rng.normal_matrix(arms, dim) / std::sqrt(static_cast<double>(dim));
  return env;
}

Eigen::VectorXd LinearPortfolioEnv::context(long, RandomStream& rng) {
  Eigen::VectorXd x(context_dim());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    x[j] = rng.uniform(-1.0, 1.0);
  }
  return x;
}

double LinearPortfolioEnv::reward(long step, const Eigen::Ref<const Eigen::VectorXd>& x, int arm,
                                  RandomStream& rng) {
  return expected_reward(step, x, arm) + noise_std * rng.normal();
}

double LinearPortfolioEnv::expected_reward(long, const Eigen::Ref<const Eigen::VectorXd>& x,
                                           int arm) const {
  if (arm < 0 || arm >= num_arms()) {
    throw std::invalid_argument("arm index out of range");
  }
  return arm_weights.row(arm).dot(x);
}

ReplayEnv::ReplayEnv(Eigen::MatrixXd contexts_in, Eigen::MatrixXd rewards_in)
    : contexts(std::move(contexts_in)), rewards(std::move(rewards_in)) {
  if (contexts.rows() == 0 || contexts.rows() != rewards.rows() || rewards.cols() < 1) {
    throw std::invalid_argument("replay table needs matching non-empty context and reward rows");
  }
}

Eigen::VectorXd ReplayEnv::context(long step, RandomStream&) {
  return contexts.row(step % contexts.rows()).transpose();
}

double ReplayEnv::reward(long step, const Eigen::Ref<const Eigen::VectorXd>&, int arm,
                         RandomStream&) {
  if (arm < 0 || arm >= num_arms()) {
    throw std::invalid_argument("arm index out of range");
  }
  return rewards(step % rewards.rows(), arm);
}

double ReplayEnv::expected_reward(long step, const Eigen::Ref<const Eigen::VectorXd>&,
                                  int arm) const {
  return rewards(step % rewards.rows(), arm);
}

namespace {

double sampled_mean(const VstModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                    RandomStream& rng) {
  const Eigen::VectorXd eps_diag = rng.normal_vector(model.posterior.dim());
  const Eigen::VectorXd eps_lowrank = rng.normal_vector(model.posterior.rank());
  const Eigen::VectorXd theta = sample(model.posterior, eps_diag, eps_lowrank);
  const Eigen::VectorXd xs = (x - model.feature_stats.mean).cwiseQuotient(model.feature_stats.std);
  return predict_mean(model.spec, theta, xs) * model.target_stats.std + model.target_stats.mean;
}

}  // namespace

int thompson_step(const std::vector<VstModel>& models, const Eigen::Ref<const Eigen::VectorXd>& x,
                  RandomStream& rng) {
  if (models.empty()) {
    throw std::invalid_argument("thompson_step needs at least one arm model");
  }
  int best_arm = 0;
  double best_value = sampled_mean(models[0], x, rng);
  for (size_t a = 1; a < models.size(); ++a) {
    const double value = sampled_mean(models[a], x, rng);
    if (value > best_value) {
      best_value = value;
      best_arm = static_cast<int>(a);
    }
  }
  return best_arm;
}

int thompson_step(const std::vector<VstModel>& models, const Eigen::Ref<const Eigen::VectorXd>& x,
                  unsigned long long seed) {
  RandomStream rng(seed, "thompson");
  return thompson_step(models, x, rng);
}

double BanditTrace::final_regret() const {
  return cumulative_regret.size() > 0 ? cumulative_regret[cumulative_regret.size() - 1] : 0.0;
}

namespace {

struct ArmHistory {
  std::vector<double> xs;  // row-major contexts
  std::vector<double> rs;
  Eigen::Index dim = 0;

  Eigen::Index count() const { return static_cast<Eigen::Index>(rs.size()); }

  void add(const Eigen::Ref<const Eigen::VectorXd>& x, double r) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      xs.push_back(x[j]);
    }
    rs.push_back(r);
    dim = x.size();
  }

  Eigen::MatrixXd features() const {
    Eigen::MatrixXd X(count(), dim);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) {
        X(i, j) = xs[static_cast<size_t>(i * dim + j)];
      }
    }
    return X;
  }

  Eigen::VectorXd targets() const {
    return Eigen::Map<const Eigen::VectorXd>(rs.data(), count());
  }
};

VstModel fit_arm(const ArmHistory& history, const AgentConfig& agent, unsigned long long fit_seed,
                 const VstModel* previous, long step) {
  const Eigen::MatrixXd X = history.features();
  const Eigen::VectorXd y = history.targets();
  const ScalerStats feature_stats = fit_scaler(X);
  const ScalarStats target_stats = fit_scalar(y);
  const Eigen::MatrixXd Xs = apply_scaler(feature_stats, X);
  const Eigen::VectorXd ys = apply_scalar(target_stats, y);
  TrainConfig config = agent.train;
  config.seed = fit_seed;
  const LowRankGaussian* warm =
      agent.warm_start && previous != nullptr ? &previous->posterior : nullptr;
  try {
    FitOutput fit = fit_core(Xs, ys, config, 1.0, warm);
    fit.model.feature_stats = feature_stats;
    fit.model.target_stats = target_stats;
    return std::move(fit.model);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " while retraining at bandit step " +
                       std::to_string(step));
  }
}

}  // namespace

BanditTrace run_bandit(BanditEnv& env, const AgentConfig& agent, long horizon,
                       unsigned long long seed) {
  if (horizon < 1) {
    throw std::invalid_argument("horizon must be at least 1");
  }
  if (agent.retrain_every < 1) {
    throw std::invalid_argument("retrain_every must be at least 1");
  }
  const int k = env.num_arms();
  const Eigen::Index d = env.context_dim();

  RandomStream ctx_rng(seed, "env-context");
  RandomStream reward_rng(seed, "env-reward");
  RandomStream agent_rng(seed, "agent");

  std::vector<ArmHistory> history(static_cast<size_t>(k));
  std::vector<VstModel> models;
  bool models_ready = false;
  long fit_counter = 0;

  BanditTrace trace;
  trace.contexts.resize(horizon, d);
  trace.arm.resize(static_cast<size_t>(horizon));
  trace.reward.resize(horizon);
  trace.optimal_expected.resize(horizon);
  trace.instant_regret.resize(horizon);
  trace.cumulative_regret.resize(horizon);

  auto refit_all = [&](long step) {
    std::vector<VstModel> next;
    next.reserve(static_cast<size_t>(k));
    for (int a = 0; a < k; ++a) {
      const unsigned long long fit_seed =
          stream_key(stream_key(seed, "arm", static_cast<uint64_t>(a)), "fit",
                     static_cast<uint64_t>(fit_counter));
      const VstModel* previous = models_ready ? &models[static_cast<size_t>(a)] : nullptr;
      next.push_back(fit_arm(history[static_cast<size_t>(a)], agent, fit_seed, previous, step));
    }
    models = std::move(next);
    models_ready = true;
    ++fit_counter;
  };

  double cumulative = 0.0;
  for (long t = 0; t < horizon; ++t) {
    const Eigen::VectorXd x = env.context(t, ctx_rng);

    int arm = 0;
    if (agent.policy == PolicyKind::Random) {
      arm = static_cast<int>(agent_rng.below(static_cast<uint64_t>(k)));
    } else if (agent.policy == PolicyKind::Oracle) {
      double best = env.expected_reward(t, x, 0);
      for (int a = 1; a < k; ++a) {
        const double value = env.expected_reward(t, x, a);
        if (value > best) {
          best = value;
          arm = a;
        }
      }
    } else {
      Eigen::Index scarcest = history[0].count();
      int scarcest_arm = 0;
      for (int a = 1; a < k; ++a) {
        if (history[static_cast<size_t>(a)].count() < scarcest) {
          scarcest = history[static_cast<size_t>(a)].count();
          scarcest_arm = a;
        }
      }
      arm = scarcest < 2 ? scarcest_arm : thompson_step(models, x, agent_rng);
    }

    const double r = env.reward(t, x, arm, reward_rng);
    double optimal = env.expected_reward(t, x, 0);
    for (int a = 1; a < k; ++a) {
      optimal = std::max(optimal, env.expected_reward(t, x, a));
    }
    const double regret = optimal - env.expected_reward(t, x, arm);

    trace.contexts.row(t) = x.transpose();
    trace.arm[static_cast<size_t>(t)] = arm;
    trace.reward[t] = r;
    trace.optimal_expected[t] = optimal;
    trace.instant_regret[t] = regret;
    cumulative += regret;
    trace.cumulative_regret[t] = cumulative;

    if (agent.policy == PolicyKind::Vst) {
      history[static_cast<size_t>(arm)].add(x, r);
      bool all_covered = true;
      for (const auto& h : history) {
        if (h.count() < 2) {
          all_covered = false;
          break;
        }
      }
      if (all_covered && !models_ready) {
        refit_all(t);
      } else if (all_covered && (t + 1) % agent.retrain_every == 0) {
        refit_all(t);
      }
    }
  }
  return trace;
}

}  // namespace vistree
