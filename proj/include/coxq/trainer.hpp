#pragma once

#include <memory>
#include <string>
#include <vector>

#include "coxq/checkpoint.hpp"
#include "coxq/config.hpp"
#include "coxq/envs.hpp"
#include "coxq/learner.hpp"
#include "coxq/metrics.hpp"
#include "coxq/replay.hpp"
#include "coxq/step_control.hpp"

namespace coxq {

struct EvalSummary {
  double mean_return = 0;
  double median_return = 0;
  double mean_cost = 0;
  double violation_rate = 0;  // fraction of episodes with cost > episode limit
  int episodes = 0;
  std::vector<double> episode_returns, episode_costs;
};

std::unique_ptr<Env> make_configured_env(const TrainConfig& cfg, std::uint64_t seed);

/// Single-threaded phase loop of the training harness: collect with COX
/// exploration, update offline, auto-tune the trust region, evaluate and
/// persist. One Trainer owns all mutable learner state.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  /// Runs to total_steps. Returns 0 on success, 3 on numeric divergence.
  int run();

  /// Advances exactly n environment steps (test hook; no metrics flushing).
  void step_n(std::int64_t n);

  EvalSummary evaluate(int episodes, std::uint64_t seed) const;

  Checkpoint make_checkpoint() const;
  void restore(const Checkpoint& ck);

  const TrainConfig& config() const { return cfg_; }
  const Agent& agent() const { return agent_; }
  Agent& agent() { return agent_; }
  std::int64_t global_step() const { return global_step_; }
  const std::vector<MetricsRecord>& records() const { return metrics_->records(); }
  const TrustRegion& trust_region() const { return trust_region_; }
  ReplayBuffer& buffer() { return buffer_; }

 private:
  struct EnvSlot {
    std::unique_ptr<Env> env;
    double ep_return = 0;
    double ep_cost = 0;
  };

  Vec select_action(EnvSlot& slot);
  void update_phase();
  void log_record();
  void run_eval_probe(MetricsRecord& rec);
  void write_outputs(bool final);

  TrainConfig cfg_;
  Agent agent_;
  std::vector<EnvSlot> envs_;
  ReplayBuffer buffer_;
  TrustRegion trust_region_;
  Rng action_rng_, update_rng_;
  std::int64_t global_step_ = 0;
  std::unique_ptr<MetricsWriter> metrics_;

  // per-interval accumulators
  double interval_ep_return_ = 0, interval_ep_cost_ = 0;
  double interval_ep_count_ = 0;
  double unsafe_calls_ = 0, conflict_calls_ = 0;
  double eta_sum_ = 0, eta_count_ = 0;
  double loss_r_sum_ = 0, loss_c_sum_ = 0, actor_loss_sum_ = 0;
  double update_count_ = 0;
  MetricsRecord pending_eval_;  // carries eval/bias numbers into the next record
  bool have_pending_eval_ = false;
};

/// Deterministic evaluation of a stored checkpoint (mean action, no
/// exploration shift).
EvalSummary evaluate_checkpoint(const std::string& checkpoint_path, int episodes,
                                std::uint64_t seed);

}  // namespace coxq
