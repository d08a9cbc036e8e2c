#include "coxq/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace coxq {

namespace {

struct Entry {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
T parse_value(const std::string& s);

template <>
double parse_value<double>(const std::string& s) {
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number: " + s);
  return v;
}
template <>
int parse_value<int>(const std::string& s) {
  return static_cast<int>(std::stol(s));
}
template <>
std::int64_t parse_value<std::int64_t>(const std::string& s) {
  return std::stoll(s);
}
template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& s) {
  return std::stoull(s);
}
template <>
bool parse_value<bool>(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("bad bool: " + s);
}
template <>
std::string parse_value<std::string>(const std::string& s) {
  return s;
}

std::string format_value(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
std::string format_value(const std::string& v) { return v; }
std::string format_value(bool v) { return v ? "true" : "false"; }
template <typename T>
std::string format_value(T v) {
  return std::to_string(v);
}

using Table = std::map<std::string, Entry>;

template <typename T>
void reg(Table& t, const std::string& key, T TrainConfig::* member) {
  t[key] = Entry{
      [member](const TrainConfig& c) { return format_value(c.*member); },
      [member, key](TrainConfig& c, const std::string& v) {
        try {
          c.*member = parse_value<T>(v);
        } catch (const std::exception&) {
          throw std::invalid_argument("config: bad value for " + key + ": " + v);
        }
      }};
}

const Table& table() {
  static const Table t = [] {
    Table t;
    reg(t, "run.env", &TrainConfig::env);
    reg(t, "run.seed", &TrainConfig::seed);
    reg(t, "run.total_steps", &TrainConfig::total_steps);
    reg(t, "run.initial_steps", &TrainConfig::initial_steps);
    reg(t, "run.out_dir", &TrainConfig::out_dir);
    reg(t, "run.eval_interval", &TrainConfig::eval_interval);
    reg(t, "run.eval_episodes", &TrainConfig::eval_episodes);
    reg(t, "run.log_interval", &TrainConfig::log_interval);
    reg(t, "run.checkpoint_interval", &TrainConfig::checkpoint_interval);
    reg(t, "run.use_cox", &TrainConfig::use_cox);
    reg(t, "learner.policy_lr", &TrainConfig::policy_lr);
    reg(t, "learner.critic_lr", &TrainConfig::critic_lr);
    reg(t, "learner.entropy_lr", &TrainConfig::entropy_lr);
    reg(t, "learner.batch_size", &TrainConfig::batch_size);
    reg(t, "learner.gamma", &TrainConfig::gamma);
    reg(t, "learner.tau", &TrainConfig::tau);
    reg(t, "learner.target_update_freq", &TrainConfig::target_update_freq);
    reg(t, "learner.gradient_steps", &TrainConfig::gradient_steps);
    reg(t, "learner.parallel_envs", &TrainConfig::parallel_envs);
    reg(t, "learner.buffer_size", &TrainConfig::buffer_size);
    reg(t, "learner.policy_hidden_width", &TrainConfig::policy_hidden_width);
    reg(t, "learner.policy_hidden_depth", &TrainConfig::policy_hidden_depth);
    reg(t, "learner.critic_hidden_width", &TrainConfig::critic_hidden_width);
    reg(t, "learner.critic_hidden_depth", &TrainConfig::critic_hidden_depth);
    reg(t, "learner.entropy_auto_tune", &TrainConfig::entropy_auto_tune);
    reg(t, "learner.init_temperature", &TrainConfig::init_temperature);
    reg(t, "learner.action_bound_weight", &TrainConfig::action_bound_weight);
    reg(t, "critics.n_critics", &TrainConfig::n_critics);
    reg(t, "critics.n_quantiles", &TrainConfig::n_quantiles);
    reg(t, "critics.k_r", &TrainConfig::k_r);
    reg(t, "critics.k_c", &TrainConfig::k_c);
    reg(t, "critics.beta_r", &TrainConfig::beta_r);
    reg(t, "critics.beta_c", &TrainConfig::beta_c);
    reg(t, "critics.cvar_alpha", &TrainConfig::cvar_alpha);
    reg(t, "critics.huber_kappa", &TrainConfig::huber_kappa);
    reg(t, "constraint.episode_cost_limit", &TrainConfig::episode_cost_limit);
    reg(t, "constraint.episode_length", &TrainConfig::episode_length);
    reg(t, "constraint.lambda_init", &TrainConfig::lambda_init);
    reg(t, "constraint.lambda_lr", &TrainConfig::lambda_lr);
    reg(t, "constraint.alm_c", &TrainConfig::alm_c);
    reg(t, "exploration.delta_max", &TrainConfig::delta_max);
    reg(t, "exploration.delta_init", &TrainConfig::delta_init);
    reg(t, "exploration.delta_min", &TrainConfig::delta_min);
    reg(t, "exploration.delta_lr", &TrainConfig::delta_lr);
    reg(t, "exploration.recent_window", &TrainConfig::recent_window);
    reg(t, "exploration.delta_update_freq", &TrainConfig::delta_update_freq);
    reg(t, "diagnostics.bias_probe_states", &TrainConfig::bias_probe_states);
    reg(t, "diagnostics.bias_probe_rollouts", &TrainConfig::bias_probe_rollouts);
    return t;
  }();
  return t;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("config: " + msg);
  };
  require(gamma > 0.0 && gamma < 1.0, "gamma must be in (0,1)");
  require(tau > 0.0 && tau <= 1.0, "tau must be in (0,1]");
  require(batch_size >= 1, "batch_size >= 1");
  require(n_critics >= 1, "n_critics >= 1");
  require(n_quantiles >= 1, "n_quantiles >= 1");
  require(k_r >= 0 && k_r < n_critics * n_quantiles, "k_r in [0, N*M)");
  require(k_c >= 0 && k_c < n_critics * n_quantiles, "k_c in [0, N*M)");
  require(cvar_alpha >= 1 && cvar_alpha <= n_quantiles, "cvar_alpha in [1, M]");
  require(beta_r >= 0.0 && beta_c >= 0.0, "beta_r, beta_c >= 0");
  require(episode_length >= 1, "episode_length >= 1");
  require(episode_cost_limit >= 0.0, "episode_cost_limit >= 0");
  require(delta_min > 0.0 && delta_min <= delta_init && delta_init <= delta_max,
          "need 0 < delta_min <= delta_init <= delta_max");
  require(lambda_init >= 0.0, "lambda_init >= 0");
  require(alm_c > 0.0, "alm_c > 0");
  require(total_steps >= 0 && initial_steps >= 0, "step counts >= 0");
  require(buffer_size >= 1, "buffer_size >= 1");
  require(parallel_envs >= 1, "parallel_envs >= 1");
  require(huber_kappa > 0.0, "huber_kappa > 0");
  require(action_bound_weight >= 0.0, "action_bound_weight >= 0");
  require(recent_window >= 1, "recent_window >= 1");
  require(env == "toy_velocity" || env == "toy_sparse_goal", "unknown env " + env);
}

void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto it = table().find(key);
  if (it == table().end()) throw std::invalid_argument("config: unknown key " + key);
  it->second.set(cfg, value);
}

TrainConfig load_config(const std::string& path, const TrainConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse_config(in, base);
}

TrainConfig parse_config(std::istream& in, const TrainConfig& base) {
  TrainConfig cfg = base;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos && !section.empty()) key = section + "." + key;
    apply_override(cfg, key, value);
  }
  return cfg;
}

std::string config_to_string(const TrainConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, entry] : table()) {
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      section = sec;
      out << "[" << section << "]\n";
    }
    out << key.substr(key.find('.') + 1) << " = " << entry.get(cfg) << "\n";
  }
  return out.str();
}

void write_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << config_to_string(cfg);
}

}  // namespace coxq
