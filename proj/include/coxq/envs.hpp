#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "coxq/policy.hpp"
#include "coxq/rng.hpp"

namespace coxq {

struct CmdpStep {
  Vec next_state;
  double reward = 0;
  double cost = 0;  // always >= 0
  bool terminated = false;
  bool truncated = false;  // horizon reached; bootstrap through this
};

/// Velocity-limited 1-D point mass: dense progress reward, binary over-speed
/// cost. The unconstrained optimum exceeds the threshold every step, so the
/// constraint binds by construction.
struct ToyVelocitySpec {
  double dt = 0.05;
  double v_threshold = 1.0;
  double accel_lo = -1.0, accel_hi = 1.0;
  double ctrl_weight = 0.001;
  int horizon = 200;
  double noise_std = 0.01;      // on velocity
  double init_perturb = 0.05;   // uniform half-width on (x, v) at reset
};

/// 1-D sparse-signal task: +30 bonus for reaching the goal, cost 1 inside a
/// pit region, zero reward elsewhere.
struct ToySparseGoalSpec {
  double dt = 0.1;
  double goal_x = 8.0;
  double goal_bonus = 30.0;
  double pit_lo = 4.0, pit_hi = 5.0;
  double accel_lo = -1.0, accel_hi = 1.0;
  int horizon = 200;
  double noise_std = 0.02;
  double init_perturb = 0.05;
};

Vec toy_velocity_reset(const ToyVelocitySpec& spec, Rng& rng);
CmdpStep toy_velocity_step(const ToyVelocitySpec& spec, const Vec& state, int step_index,
                           const Vec& action, Rng& rng);

Vec toy_sparse_goal_reset(const ToySparseGoalSpec& spec, Rng& rng);
CmdpStep toy_sparse_goal_step(const ToySparseGoalSpec& spec, const Vec& state, int step_index,
                              const Vec& action, Rng& rng);

/// Fixed evaluation states straddling the cost-active region, used by the
/// estimation-bias diagnostic. A converged safe policy rarely visits costly
/// states, so probing its own trajectories yields near-zero ground-truth cost
/// and a meaningless relative bias; these canonical states keep the oracle
/// value substantial across all of training.
std::vector<Vec> toy_velocity_probe_states(const ToyVelocitySpec& spec);
std::vector<Vec> toy_sparse_goal_probe_states(const ToySparseGoalSpec& spec);

/// Stateful wrapper owning the RNG and the current state; one instance per
/// parallel rollout worker.
class Env {
 public:
  virtual ~Env() = default;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual ActionBox action_box() const = 0;
  virtual int horizon() const = 0;
  virtual Vec reset() = 0;
  virtual CmdpStep step(const Vec& action) = 0;
  virtual const Vec& state() const = 0;
  virtual int step_index() const = 0;
  /// Re-enters at an arbitrary (state, step) pair; used by the Monte-Carlo
  /// oracle and by exact training resume.
  virtual void set_state(const Vec& s, int step_index) = 0;
  virtual Rng& rng() = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
  /// Canonical cost-active evaluation states for the bias diagnostic.
  virtual std::vector<Vec> probe_states() const = 0;
};

std::unique_ptr<Env> make_env(const std::string& name, std::uint64_t seed);
std::unique_ptr<Env> make_toy_velocity(const ToyVelocitySpec& spec, std::uint64_t seed);
std::unique_ptr<Env> make_toy_sparse_goal(const ToySparseGoalSpec& spec, std::uint64_t seed);

struct OracleEstimate {
  double mean_return = 0, mean_cost = 0;
  double se_return = 0, se_cost = 0;
  Vec return_quantiles, cost_quantiles;
  int n_rollouts = 0;
};

/// Monte-Carlo ground truth for the discounted return/cost random variables:
/// executes (state, action) once, then follows `policy`; empirical quantiles
/// are reported at levels (m - 0.5) / M.
OracleEstimate mc_oracle(Env& env_template, const std::function<Vec(const Vec&)>& policy,
                         const Vec& state, int step_index, const Vec& action, int n_rollouts,
                         double gamma, int horizon, int M, std::uint64_t seed);

struct DpSolution {
  double best_return = 0;
  // policy_table[t][v_idx][budget] = best acceleration
  std::vector<std::vector<std::vector<double>>> policy_table;
};

/// Finite-horizon value iteration on the noise-free ToyVelocity over a
/// discretized (velocity, remaining-budget) grid: max return subject to
/// episode cost <= d_episode. Acceptance yardstick for the constrained
/// optimum.
DpSolution dp_constrained_optimum(const ToyVelocitySpec& spec, int grid_resolution,
                                  double d_episode, int action_grid = 41);

}  // namespace coxq
