#pragma once

#include <cstdint>
#include <istream>
#include <string>

namespace coxq {

/// Every tunable of the training harness. Defaults follow the shared
/// off-policy settings of the algorithm, scaled to the desk-size toy tasks
/// where noted in configs/.
struct TrainConfig {
  // run
  std::string env = "toy_velocity";
  std::uint64_t seed = 0;
  std::int64_t total_steps = 150000;
  std::int64_t initial_steps = 2000;
  std::string out_dir = "run_out";
  std::int64_t eval_interval = 5000;
  int eval_episodes = 20;
  std::int64_t log_interval = 1000;
  std::int64_t checkpoint_interval = 50000;
  bool use_cox = true;

  // learner
  double policy_lr = 3e-4;
  double critic_lr = 3e-4;
  double entropy_lr = 3e-4;
  int batch_size = 256;
  double gamma = 0.99;
  double tau = 0.005;
  int target_update_freq = 1;
  int gradient_steps = 1;
  int parallel_envs = 1;
  std::int64_t buffer_size = 200000;
  int policy_hidden_width = 64;
  int policy_hidden_depth = 2;
  int critic_hidden_width = 64;
  int critic_hidden_depth = 2;
  bool entropy_auto_tune = true;
  double init_temperature = 0.2;
  double action_bound_weight = 1.0;

  // critics
  int n_critics = 5;
  int n_quantiles = 25;
  int k_r = 2;
  int k_c = 5;
  double beta_r = 4.0;
  double beta_c = 3.0;
  int cvar_alpha = 13;
  double huber_kappa = 1.0;

  // constraint
  double episode_cost_limit = 5.0;
  int episode_length = 200;
  double lambda_init = 1.0;
  double lambda_lr = 3e-4;
  double alm_c = 10.0;

  // exploration
  double delta_max = 6.0;
  double delta_init = 1.0;
  double delta_min = 1e-4;
  double delta_lr = 1e-4;
  std::int64_t recent_window = 10000;
  std::int64_t delta_update_freq = 200;

  // diagnostics
  int bias_probe_states = 8;
  int bias_probe_rollouts = 32;

  void validate() const;  // throws on out-of-range values
};

/// Parses a sectioned key=value file ([section] headers plus key = value
/// lines; '#' comments). Unknown keys are rejected.
TrainConfig load_config(const std::string& path, const TrainConfig& base = TrainConfig{});

/// Stream form of load_config; used to re-hydrate the config a checkpoint
/// carries.
TrainConfig parse_config(std::istream& in, const TrainConfig& base = TrainConfig{});

/// The sectioned text form of the fully resolved configuration.
std::string config_to_string(const TrainConfig& cfg);

/// Applies one "section.key=value" override (CLI flags beat file values).
void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Writes the fully resolved configuration in the same sectioned format.
void write_config(const TrainConfig& cfg, const std::string& path);

}  // namespace coxq
