#pragma once

#include <cstdint>
#include <vector>

#include "coxq/learner.hpp"
#include "coxq/rng.hpp"
#include "coxq/sigma_geometry.hpp"

namespace coxq {

struct Transition {
  Vec state, action, next_state;
  double reward = 0;
  double cost = 0;
  bool terminated = false;
  bool truncated = false;
  std::int64_t step_index = 0;
};

/// Fixed-capacity ring store with uniform sampling and an exact
/// newest-first recent window.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

  /// Uniformly sampled minibatch packed column-wise.
  Batch sample(int batch_size, Rng& rng) const;

  /// The last min(window, size) insertions, newest first.
  std::vector<const Transition*> recent(std::size_t window) const;

  /// Mean cost over the recent window (0 if empty).
  double recent_mean_cost(std::size_t window) const;

  std::size_t cursor() const { return cursor_; }

  /// Replaces the entire ring; `cursor` must index the next overwrite slot.
  void restore(std::vector<Transition> data, std::size_t cursor) {
    data_ = std::move(data);
    cursor_ = cursor;
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

}  // namespace coxq
