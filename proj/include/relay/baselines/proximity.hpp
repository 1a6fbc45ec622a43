#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <vector>

#include "relay/baselines/classifier.hpp"
#include "relay/composer/setup_training.hpp"
#include "relay/terrainsim/runner.hpp"

namespace relay::baselines {

inline constexpr std::size_t kProximityBufferCap = 50'000;

/// P(s): how likely the target policy succeeds from s, fitted on states seen
/// by the transition policy in successful (1) and failed (0) episodes.
class ProximityPredictor {
 public:
  explicit ProximityPredictor(std::uint64_t seed = 0, std::size_t cap = kProximityBufferCap)
      : net_(terrainsim::kObservationSize, seed), cap_(cap) {
    if (cap_ == 0) throw InvalidInput("proximity buffer capacity must be positive");
  }

  const std::deque<terrainsim::Observation>& success_buffer() const noexcept { return success_; }
  const std::deque<terrainsim::Observation>& failure_buffer() const noexcept { return failure_; }
  bool fitted() const noexcept { return net_.fitted(); }

  /// Files every state of one episode under its outcome; oldest states drop
  /// once a buffer holds `cap` entries.
  void add_episode(const std::vector<terrainsim::Observation>& states, bool success) {
    auto& buf = success ? success_ : failure_;
    for (const auto& s : states) {
      buf.push_back(s);
      if (buf.size() > cap_) buf.pop_front();
    }
  }

  /// One or more passes over both buffers; no-op while either is empty.
  std::optional<FitStats> fit(int epochs, std::mt19937_64& rng) {
    if (success_.empty() || failure_.empty()) return std::nullopt;
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    x.reserve(success_.size() + failure_.size());
    for (const auto& s : success_) {
      x.emplace_back(s.begin(), s.end());
      y.push_back(1);
    }
    for (const auto& s : failure_) {
      x.emplace_back(s.begin(), s.end());
      y.push_back(0);
    }
    return net_.fit(x, y, epochs, rng);
  }

  double operator()(std::span<const double> obs) const { return net_.probability(obs); }

 private:
  BinaryClassifier net_;
  std::size_t cap_;
  std::deque<terrainsim::Observation> success_;
  std::deque<terrainsim::Observation> failure_;
};

/// Dense reward P(s_next) - P(s_t); sums telescope along a trajectory.
template <typename P, typename State>
double proximity_reward(const P& predictor, const State& s, const State& s_next) {
  return predictor(s_next) - predictor(s);
}

struct ProximityOptions {
  int fit_epochs = 1;
  std::uint64_t seed = 0;
};

struct ProximityArm {
  composer::TrainingCurve curve;
  ProximityPredictor predictor;
};

/// Transition-policy training driven by the proximity reward: the same state
/// machine and PPO loop as the setup policy, with the predictor refitted from
/// its success/failure buffers before every update. Rewards are 0 until the
/// first fit and post-switch steps are not credited.
inline ProximityArm train_proximity_arm(composer::BehaviorModule& module, const policyopt::Policy& walk,
                                        const composer::EpisodeSpec& spec, const policyopt::PPOConfig& cfg,
                                        composer::SetupOptions opt, const ProximityOptions& popt = {}) {
  ProximityArm arm{{}, ProximityPredictor(popt.seed)};
  std::mt19937_64 fit_rng(popt.seed ^ 0x5bd1e995ULL);
  opt.extended_reward = false;
  composer::SetupHooks hooks;
  hooks.reward = [&arm](const composer::RewardContext& c) {
    if (!arm.predictor.fitted()) return 0.0;
    return proximity_reward(arm.predictor, *c.obs, *c.next_obs);
  };
  hooks.on_episode_end = [&arm](const std::vector<terrainsim::Observation>& states, bool success) {
    arm.predictor.add_episode(states, success);
  };
  hooks.before_update = [&] { arm.predictor.fit(popt.fit_epochs, fit_rng); };
  arm.curve = composer::train_setup(module, walk, spec, cfg, opt, hooks);
  return arm;
}

}  // namespace relay::baselines
