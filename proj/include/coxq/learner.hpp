#pragma once

#include <vector>

#include "coxq/net.hpp"
#include "coxq/policy.hpp"
#include "coxq/quantile_critics.hpp"

namespace coxq {

/// Per-step discounted cap on Q_c equivalent to an episode cost limit:
/// d_ep * (1 - gamma^T) / (T * (1 - gamma)).
double convert_limit(double d_episode, int T, double gamma);

struct LagrangianState {
  double lambda = 1.0;
  double lr_lambda = 3e-4;
  double alm_c = 10.0;  // convexification coefficient
  double d_q = 0.0;     // converted per-step cap
  double d_episode = 0.0;
};

/// Dual ascent on the multiplier: lambda <- max(0, lambda + lr*(cost - d_q)).
LagrangianState lambda_update(LagrangianState state, double batch_mean_cost_ub);

/// ALM penalty with branch switch: active iff lambda + c*(q - d) >= 0.
double alm_penalty(double q_c_ub, const LagrangianState& lag);
double alm_penalty_grad(double q_c_ub, const LagrangianState& lag);

struct TemperatureState {
  double log_alpha = std::log(0.2);
  double target_entropy = -1.0;
  double lr = 3e-4;
  bool auto_tune = true;
  ScalarAdam opt{3e-4};

  double alpha() const { return std::exp(log_alpha); }
};

TemperatureState temperature_update(TemperatureState state, double batch_mean_log_prob);

struct TargetNetworks {
  std::vector<DenseNet> reward;
  std::vector<DenseNet> cost;
  double tau = 0.005;
};

/// Elementwise exponential tracking: shadow <- (1 - tau)*shadow + tau*live.
void polyak_update(TargetNetworks& targets, const CriticEnsemble& live_reward,
                   const CriticEnsemble& live_cost);

struct Batch {
  Mat states, actions, next_states;  // columns are samples
  Vec rewards, costs;
  std::vector<char> terminated;
  int size() const { return static_cast<int>(rewards.size()); }
};

struct CriticLosses {
  double reward_loss = 0;
  double cost_loss = 0;
};

struct ActorLosses {
  double actor_loss = 0;        // negated maximization objective
  double mean_q_c_ub = 0;       // feeds the multiplier update
  double mean_log_prob = 0;     // feeds the temperature update
  double mean_penalty = 0;
};

/// The full mutable learner state: networks, optimizers and duals. The
/// trainer owns exactly one and mutates it single-threaded.
struct Agent {
  GaussianPolicy policy;
  CriticEnsemble reward_critics, cost_critics;
  TargetNetworks targets;
  Adam policy_opt;
  std::vector<Adam> reward_opts, cost_opts;
  LagrangianState lagrangian;
  TemperatureState temperature;
  BoundConfig bounds;
  TruncationSpec truncation;
  ActionBox box;
  double gamma = 0.99;
  double huber_kappa = 1.0;
  double action_bound_weight = 1.0;  // quadratic pull of the pre-clip mean into the box

  Agent() = default;
  Agent(int state_dim, int action_dim, const ActionBox& action_box,
        const std::vector<int>& policy_hidden, const std::vector<int>& critic_hidden,
        int n_critics, int quantiles, double lr, Rng& rng);
};

/// One TQC update of both critic ensembles. Reward targets carry the entropy
/// bonus; cost targets do not.
CriticLosses critic_update(Agent& agent, const Batch& batch, Rng& rng,
                           bool entropy_bonus = true);

/// One ALM actor step maximizing Qr_mean - alpha*log pi - penalty(Qc_UB).
ActorLosses actor_update(Agent& agent, const Batch& batch, Rng& rng);

}  // namespace coxq
