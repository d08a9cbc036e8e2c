#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coxq {

/// One logging-interval record of the training run.
struct MetricsRecord {
  std::int64_t step = 0;
  double episode_return = 0;  // training episodes finished in the interval
  double episode_cost = 0;
  double eval_return = 0;  // NaN when no evaluation ran at this record
  double eval_cost = 0;
  double lambda = 0;
  double delta = 0;
  double conflict_ratio = 0;
  double eta_star_mean = 0;
  double cost_bias = 0;      // critic estimate minus oracle, signed (NaN when unprobed)
  double cost_bias_abs = 0;  // mean absolute estimation error over probe states
  double oracle_cost = 0;
  double reward_critic_loss = 0;
  double cost_critic_loss = 0;
  double actor_loss = 0;
  double temperature = 0;
  double wall_time = 0;  // in-process only; not part of the serialized stream
};

std::string to_json(const MetricsRecord& r);
MetricsRecord record_from_json(const std::string& line);

/// Append-only JSON-lines stream. flush() rewrites the whole file through a
/// temp file + rename so readers always see complete records.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::string path) : path_(std::move(path)) {}
  void append(const MetricsRecord& r);
  void flush() const;
  const std::vector<MetricsRecord>& records() const { return records_; }

 private:
  std::string path_;
  std::vector<MetricsRecord> records_;
};

std::vector<MetricsRecord> read_metrics(const std::string& path);

/// Flat tabular export (CSV with a header row).
void export_csv(const std::vector<MetricsRecord>& records, const std::string& path);

/// Atomic write-then-rename of arbitrary bytes.
void atomic_write(const std::string& path, const std::string& contents);

}  // namespace coxq
