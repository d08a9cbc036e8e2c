#include "coxq/replay.hpp"

#include <stdexcept>

namespace coxq {

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
    cursor_ = data_.size() % capacity_;
  } else {
    data_[cursor_] = std::move(t);
    cursor_ = (cursor_ + 1) % capacity_;
  }
}

Batch ReplayBuffer::sample(int batch_size, Rng& rng) const {
  if (data_.empty()) throw std::runtime_error("ReplayBuffer::sample: buffer empty");
  const int sd = static_cast<int>(data_.front().state.size());
  const int ad = static_cast<int>(data_.front().action.size());
  Batch b;
  b.states.resize(sd, batch_size);
  b.actions.resize(ad, batch_size);
  b.next_states.resize(sd, batch_size);
  b.rewards.resize(batch_size);
  b.costs.resize(batch_size);
  b.terminated.resize(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const Transition& t = data_[rng.index(data_.size())];
    b.states.col(i) = t.state;
    b.actions.col(i) = t.action;
    b.next_states.col(i) = t.next_state;
    b.rewards[i] = t.reward;
    b.costs[i] = t.cost;
    b.terminated[i] = t.terminated ? 1 : 0;
  }
  return b;
}

std::vector<const Transition*> ReplayBuffer::recent(std::size_t window) const {
  const std::size_t n = std::min(window, data_.size());
  std::vector<const Transition*> out;
  out.reserve(n);
  // cursor_ points at the next overwrite slot == oldest element once full.
  std::size_t idx = data_.size() < capacity_ ? data_.size() : cursor_;
  for (std::size_t i = 0; i < n; ++i) {
    idx = (idx + data_.size() - 1) % data_.size();
    out.push_back(&data_[idx]);
  }
  return out;
}

double ReplayBuffer::recent_mean_cost(std::size_t window) const {
  auto items = recent(window);
  if (items.empty()) return 0.0;
  double sum = 0;
  for (const Transition* t : items) sum += t->cost;
  return sum / items.size();
}

}  // namespace coxq
