#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "vistree/random.hpp"
#include "vistree/vst_training.hpp"

namespace vistree {

// Contextual bandit environments. Contexts and rewards are driven by the
// caller's streams so traces replay exactly.
class BanditEnv {
 public:
  virtual ~BanditEnv() = default;
  virtual int num_arms() const = 0;
  virtual Eigen::Index context_dim() const = 0;
  virtual Eigen::VectorXd context(long step, RandomStream& rng) = 0;
  virtual double reward(long step, const Eigen::Ref<const Eigen::VectorXd>& x, int arm,
                        RandomStream& rng) = 0;
  // Noiseless expected reward; regret is measured against its per-step max.
  virtual double expected_reward(long step, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 int arm) const = 0;
};

// One smooth bump per arm on a scalar context in [-1, 1]:
//   r(x, a) = sigmoid(beta (x + alpha - offset_a)) - sigmoid(beta (x - alpha - offset_a)) + eps.
struct ExplorationEnv final : BanditEnv {
  double alpha = 0.2;
  double beta_env = 50.0;
  double noise_std = 0.01;
  Eigen::VectorXd offsets;

  // Eight arms with bump centers evenly spaced in [-0.9, 0.9].
  static ExplorationEnv standard();

  int num_arms() const override { return static_cast<int>(offsets.size()); }
  Eigen::Index context_dim() const override { return 1; }
  Eigen::VectorXd context(long step, RandomStream& rng) override;
  double reward(long step, const Eigen::Ref<const Eigen::VectorXd>& x, int arm,
                RandomStream& rng) override;
  double expected_reward(long step, const Eigen::Ref<const Eigen::VectorXd>& x,
                         int arm) const override;
};

double exploration_reward(const ExplorationEnv& env, double x, int arm, double noise);

// Per-step expected regret of a uniform-random arm choice, by quadrature over
// the context distribution. The reference value for regret checks.
double exploration_random_regret_per_step(const ExplorationEnv& env);

// Each arm's expected reward is a fixed linear function of the context,
// x ~ U[-1,1]^d.
struct LinearPortfolioEnv final : BanditEnv {
  Eigen::MatrixXd arm_weights;  // k x d
  double noise_std = 0.05;

  static LinearPortfolioEnv make(int arms, Eigen::Index dim, unsigned long long seed);

  int num_arms() const override { return static_cast<int>(arm_weights.rows()); }
  Eigen::Index context_dim() const override { return arm_weights.cols(); }
  Eigen::VectorXd context(long step, RandomStream& rng) override;
  double reward(long step, const Eigen::Ref<const Eigen::VectorXd>& x, int arm,
                RandomStream& rng) override;
  double expected_reward(long step, const Eigen::Ref<const Eigen::VectorXd>& x,
                         int arm) const override;
};

// Replays logged contexts with a full reward column per arm; steps cycle
// through rows in order.
struct ReplayEnv final : BanditEnv {
  Eigen::MatrixXd contexts;  // n x d
  Eigen::MatrixXd rewards;   // n x k

  ReplayEnv(Eigen::MatrixXd contexts_in, Eigen::MatrixXd rewards_in);

  int num_arms() const override { return static_cast<int>(rewards.cols()); }
  Eigen::Index context_dim() const override { return contexts.cols(); }
  Eigen::VectorXd context(long step, RandomStream& rng) override;
  double reward(long step, const Eigen::Ref<const Eigen::VectorXd>& x, int arm,
                RandomStream& rng) override;
  double expected_reward(long step, const Eigen::Ref<const Eigen::VectorXd>& x,
                         int arm) const override;
};

// Argmax over arms of one posterior-draw predictive mean each; ties go to the
// lowest arm index.
int thompson_step(const std::vector<VstModel>& models, const Eigen::Ref<const Eigen::VectorXd>& x,
                  RandomStream& rng);
int thompson_step(const std::vector<VstModel>& models, const Eigen::Ref<const Eigen::VectorXd>& x,
                  unsigned long long seed);

enum class PolicyKind { Vst, Random, Oracle };

struct AgentConfig {
  PolicyKind policy = PolicyKind::Vst;
  int retrain_every = 50;
  bool warm_start = true;
  TrainConfig train;  // per-arm model settings
};

struct BanditTrace {
  Eigen::MatrixXd contexts;  // horizon x d
  std::vector<int> arm;
  Eigen::VectorXd reward;
  Eigen::VectorXd optimal_expected;
  Eigen::VectorXd instant_regret;
  Eigen::VectorXd cumulative_regret;

  long horizon() const { return static_cast<long>(arm.size()); }
  double final_regret() const;
};

// Thompson-sampling loop with one model per arm. Arms with fewer than 2
// observations are forced round-robin; all arms retrain on their full
// history every retrain_every steps.
BanditTrace run_bandit(BanditEnv& env, const AgentConfig& agent, long horizon,
                       unsigned long long seed);

}  // namespace vistree
