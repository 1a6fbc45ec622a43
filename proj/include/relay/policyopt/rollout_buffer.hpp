#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "relay/error.hpp"

namespace relay::policyopt {

enum class PolicyId : std::uint8_t { kDefault, kSetup, kTarget };

inline const char* to_string(PolicyId id) {
  switch (id) {
    case PolicyId::kDefault: return "default";
    case PolicyId::kSetup: return "setup";
    case PolicyId::kTarget: return "target";
  }
  return "?";
}

struct Transition {
  std::vector<double> raw_obs;
  std::vector<float> obs;  // normalized, as seen by the net
  std::vector<float> action;
  bool switch_bit = false;
  double logp = 0.0;  // joint Gaussian (+ Bernoulli) log-probability
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
  PolicyId policy = PolicyId::kDefault;

  bool operator==(const Transition&) const = default;
};

class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity = 2048) : capacity_(capacity) {
    if (capacity_ == 0) throw InvalidInput("rollout buffer capacity must be positive");
    entries_.reserve(capacity_);
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool full() const noexcept { return entries_.size() >= capacity_; }

  void push(Transition t) {
    if (full()) throw UsageError("rollout buffer is full (" + std::to_string(capacity_) + " entries)");
    if (!std::isfinite(t.logp) || !std::isfinite(t.reward)) {
      throw InvalidInput("transition has non-finite log-prob or reward");
    }
    entries_.push_back(std::move(t));
  }

  const Transition& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Transition>& entries() const noexcept { return entries_; }

  Transition& back() {
    if (entries_.empty()) throw UsageError("rollout buffer is empty");
    return entries_.back();
  }
  const Transition& back() const {
    if (entries_.empty()) throw UsageError("rollout buffer is empty");
    return entries_.back();
  }

  void clear() { entries_.clear(); }

  /// Keeps only the final entry.
  void clear_except_last() {
    if (entries_.empty()) throw UsageError("clear_except_last on an empty buffer");
    Transition last = std::move(entries_.back());
    entries_.clear();
    entries_.push_back(std::move(last));
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> entries_;
};

}  // namespace relay::policyopt
