#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace evdispatch {

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

/// Fixed-capacity ring of transitions with FIFO eviction.
///
/// Sampling is uniform without replacement inside one minibatch. With
/// `prioritized` set, draws are proportional to priority^alpha instead and
/// priorities are refreshed from TD errors by the learner.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity, bool prioritized = false, double alpha = 0.6);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool prioritized() const { return prioritized_; }

  /// Logical index: 0 is the oldest stored transition.
  const Transition& operator[](std::size_t i) const;

  /// Slot indices (physical) of a minibatch; requires batch <= size().
  std::vector<std::size_t> sample(std::size_t batch, std::mt19937_64& rng) const;
  const Transition& slot(std::size_t physical) const { return data_[physical]; }

  /// Sampling probability of a slot (uniform when not prioritized).
  double probability(std::size_t physical) const;
  void update_priorities(std::span<const std::size_t> slots, std::span<const double> td_errors);

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next write slot once full
  bool prioritized_;
  double alpha_;
  double max_priority_ = 1.0;
  std::vector<Transition> data_;
  std::vector<double> priority_;
};

}  // namespace evdispatch
