#pragma once

#include <algorithm>
#include <cmath>

#include "relay/error.hpp"
#include "relay/policyopt/rollout_buffer.hpp"

namespace relay::composer {

struct AWTVParams {
  double alpha = 0.15;
  double beta = 0.01;
  double gamma = 0.99;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidInput("AWTV alpha and beta must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidInput("AWTV gamma must be in (0, 1]");
  }
};

/// One-step TD estimate of the target policy's advantage:
/// r + gamma * V(s') - V(s). Pass v_next = 0 at a true termination.
inline double td_advantage(double reward, double v_state, double v_next, double gamma) {
  if (!std::isfinite(reward) || !std::isfinite(v_state) || !std::isfinite(v_next) || !std::isfinite(gamma)) {
    throw InvalidInput("td_advantage: non-finite input");
  }
  return reward + gamma * v_next - v_state;
}

/// Overload taking the value function itself.
template <typename ValueFn, typename State>
double td_advantage(const ValueFn& value, const State& s, const State& s_next, double reward, double gamma,
                    bool terminal = false) {
  return td_advantage(reward, value(s), terminal ? 0.0 : value(s_next), gamma);
}

/// Advantage Weighted Target Value: (1 - min(alpha * A^2, 1)) * beta * V(s).
inline double awtv_reward(double advantage, double v_state, const AWTVParams& p) {
  const double weight = 1.0 - std::min(p.alpha * advantage * advantage, 1.0);
  return weight * p.beta * v_state;
}

/// Folds a post-switch reward into the setup buffer's final entry.
inline void extend_reward(policyopt::RolloutBuffer& buffer, double reward) {
  if (buffer.empty()) throw UsageError("extend_reward on an empty buffer");
  if (!std::isfinite(reward)) throw InvalidInput("extend_reward: non-finite reward");
  buffer.back().reward += reward;
}

}  // namespace relay::composer
