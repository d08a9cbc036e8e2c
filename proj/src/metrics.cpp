#include "coxq/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace coxq {

namespace {

using Json = nlohmann::ordered_json;

// nlohmann serializes NaN as null; map it back on read.
double num(const Json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? std::nan("") : v.get<double>();
}

}  // namespace

std::string to_json(const MetricsRecord& r) {
  Json j;
  j["step"] = r.step;
  j["episode_return"] = r.episode_return;
  j["episode_cost"] = r.episode_cost;
  j["eval_return"] = r.eval_return;
  j["eval_cost"] = r.eval_cost;
  j["lambda"] = r.lambda;
  j["delta"] = r.delta;
  j["conflict_ratio"] = r.conflict_ratio;
  j["eta_star_mean"] = r.eta_star_mean;
  j["cost_bias"] = r.cost_bias;
  j["cost_bias_abs"] = r.cost_bias_abs;
  j["oracle_cost"] = r.oracle_cost;
  j["reward_critic_loss"] = r.reward_critic_loss;
  j["cost_critic_loss"] = r.cost_critic_loss;
  j["actor_loss"] = r.actor_loss;
  j["temperature"] = r.temperature;
  return j.dump();
}

MetricsRecord record_from_json(const std::string& line) {
  Json j = Json::parse(line);
  MetricsRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.episode_return = num(j, "episode_return");
  r.episode_cost = num(j, "episode_cost");
  r.eval_return = num(j, "eval_return");
  r.eval_cost = num(j, "eval_cost");
  r.lambda = num(j, "lambda");
  r.delta = num(j, "delta");
  r.conflict_ratio = num(j, "conflict_ratio");
  r.eta_star_mean = num(j, "eta_star_mean");
  r.cost_bias = num(j, "cost_bias");
  r.cost_bias_abs = num(j, "cost_bias_abs");
  r.oracle_cost = num(j, "oracle_cost");
  r.reward_critic_loss = num(j, "reward_critic_loss");
  r.cost_critic_loss = num(j, "cost_critic_loss");
  r.actor_loss = num(j, "actor_loss");
  r.temperature = num(j, "temperature");
  return r;
}

void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("atomic_write: cannot open " + tmp);
    out << contents;
    if (!out) throw std::runtime_error("atomic_write: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("atomic_write: rename failed for " + path);
}

void MetricsWriter::append(const MetricsRecord& r) { records_.push_back(r); }

void MetricsWriter::flush() const {
  std::ostringstream os;
  for (const MetricsRecord& r : records_) os << to_json(r) << "\n";
  atomic_write(path_, os.str());
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_metrics: cannot open " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void export_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  std::ostringstream os;
  os << "step,episode_return,episode_cost,eval_return,eval_cost,lambda,delta,"
        "conflict_ratio,eta_star_mean,cost_bias,cost_bias_abs,oracle_cost,reward_critic_loss,"
        "cost_critic_loss,actor_loss,temperature\n";
  os.precision(17);
  for (const MetricsRecord& r : records) {
    os << r.step << ',' << r.episode_return << ',' << r.episode_cost << ',' << r.eval_return
       << ',' << r.eval_cost << ',' << r.lambda << ',' << r.delta << ',' << r.conflict_ratio
       << ',' << r.eta_star_mean << ',' << r.cost_bias << ',' << r.cost_bias_abs << ',' << r.oracle_cost << ','
       << r.reward_critic_loss << ',' << r.cost_critic_loss << ',' << r.actor_loss << ','
       << r.temperature << "\n";
  }
  atomic_write(path, os.str());
}

}  // namespace coxq
