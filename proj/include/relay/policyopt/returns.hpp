#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "relay/error.hpp"

namespace relay::policyopt {

/// R_t = r_t + gamma * R_{t+1}, seeded with R_T = bootstrap.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double gamma, double bootstrap) {
  std::vector<double> out(rewards.size());
  double running = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (!std::isfinite(rewards[i])) throw InvalidInput("discounted_returns: non-finite reward at " + std::to_string(i));
    running = rewards[i] + gamma * running;
    out[i] = running;
  }
  return out;
}

struct StepSignal {
  double reward = 0.0;
  double value = 0.0;  // V(s_t)
  bool done = false;   // no bootstrap flows from t+1 into t
};

/// Generalized advantage estimates over a flat stream that may span several
/// episodes. `next_value` is V(s_T) for the state after the last entry and is
/// ignored when that entry is done.
inline std::vector<double> gae_advantages(std::span<const StepSignal> steps, double next_value, double gamma,
                                          double lambda) {
  std::vector<double> adv(steps.size());
  double running = 0.0;
  for (std::size_t i = steps.size(); i-- > 0;) {
    const auto& s = steps[i];
    if (!std::isfinite(s.reward) || !std::isfinite(s.value)) {
      throw InvalidInput("gae_advantages: non-finite reward or value at " + std::to_string(i));
    }
    const bool last = i + 1 == steps.size();
    const double v_next = s.done ? 0.0 : (last ? next_value : steps[i + 1].value);
    const double delta = s.reward + gamma * v_next - s.value;
    running = delta + (s.done ? 0.0 : gamma * lambda * running);
    adv[i] = running;
  }
  return adv;
}

}  // namespace relay::policyopt
