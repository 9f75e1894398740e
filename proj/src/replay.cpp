#include "evdispatch/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "evdispatch/error.hpp"

namespace evdispatch {

ReplayBuffer::ReplayBuffer(std::size_t capacity, bool prioritized, double alpha)
    : capacity_(capacity), prioritized_(prioritized), alpha_(alpha) {
  EVD_REQUIRE(capacity > 0, "replay capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1u << 16));
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
    priority_.push_back(max_priority_);
    return;
  }
  data_[head_] = std::move(t);
  priority_[head_] = max_priority_;
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
  EVD_REQUIRE(i < data_.size(), "replay index out of range");
  if (data_.size() < capacity_) return data_[i];
  return data_[(head_ + i) % capacity_];
}

double ReplayBuffer::probability(std::size_t physical) const {
  if (!prioritized_) return 1.0 / static_cast<double>(data_.size());
  double total = 0.0;
  for (double p : priority_) total += std::pow(p, alpha_);
  return std::pow(priority_[physical], alpha_) / total;
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
  EVD_REQUIRE(batch > 0 && batch <= data_.size(), "minibatch larger than the stored transitions");
  std::vector<std::size_t> out;
  out.reserve(batch);
  if (!prioritized_) {
    // Floyd's algorithm: distinct indices, one draw per pick.
    std::unordered_set<std::size_t> chosen;
    const std::size_t n = data_.size();
    for (std::size_t j = n - batch; j < n; ++j) {
      std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      if (!chosen.insert(t).second) {
        chosen.insert(j);
        out.push_back(j);
      } else {
        out.push_back(t);
      }
    }
    return out;
  }
  std::vector<double> weight(data_.size());
  for (std::size_t i = 0; i < weight.size(); ++i) weight[i] = std::pow(priority_[i], alpha_);
  for (std::size_t k = 0; k < batch; ++k) {
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = weight.size() - 1;
    for (std::size_t i = 0; i < weight.size(); ++i) {
      if (weight[i] <= 0.0) continue;
      if (u < weight[i]) {
        pick = i;
        break;
      }
      u -= weight[i];
    }
    while (weight[pick] <= 0.0) --pick;
    out.push_back(pick);
    weight[pick] = 0.0;
  }
  return out;
}

void ReplayBuffer::update_priorities(std::span<const std::size_t> slots,
                                     std::span<const double> td_errors) {
  if (!prioritized_) return;
  EVD_REQUIRE(slots.size() == td_errors.size(), "priority update sizes differ");
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double p = std::abs(td_errors[k]) + 1e-3;
    priority_[slots[k]] = p;
    max_priority_ = std::max(max_priority_, p);
  }
}

}  // namespace evdispatch
