#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "relay/diffcore/distributions.hpp"
#include "relay/diffcore/net.hpp"
#include "relay/policyopt/normalizer.hpp"

namespace relay::policyopt {

using Net = diffcore::ParameterizedNet<float>;

inline constexpr double kObsClip = 5.0;

struct Decision {
  std::vector<float> obs;     // normalized + clipped input
  std::vector<float> action;  // unclipped Gaussian sample (or mean when greedy)
  bool switch_bit = false;
  double switch_prob = 0.0;
  double logp = 0.0;
  double value = 0.0;
};

/// A net plus the observation statistics it was trained against.
///
/// `uses_switch` decides whether the Bernoulli switch bit is part of the
/// sampled action (and of its log-probability). A net may carry a switch head
/// without using it, which is how the default walk policy stays bit-copyable
/// into a setup policy.
class Policy {
 public:
  Policy() = default;
  Policy(Net net, RunningNormalizer normalizer, bool uses_switch = false)
      : net_(std::move(net)), normalizer_(std::move(normalizer)), uses_switch_(uses_switch) {
    if (uses_switch_ && !net_.has_switch_head()) throw InvalidInput("policy uses a switch but its net has no switch head");
    if (normalizer_.dims() != net_.input_size()) throw InvalidInput("normalizer and net input sizes differ");
  }

  Net& net() noexcept { return net_; }
  const Net& net() const noexcept { return net_; }
  RunningNormalizer& normalizer() noexcept { return normalizer_; }
  const RunningNormalizer& normalizer() const noexcept { return normalizer_; }
  bool uses_switch() const noexcept { return uses_switch_; }
  void set_uses_switch(bool on) {
    if (on && !net_.has_switch_head()) throw InvalidInput("net has no switch head");
    uses_switch_ = on;
  }

  std::vector<float> preprocess(std::span<const double> raw) const {
    auto z = normalizer_.normalize(raw);
    std::vector<float> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<float>(std::clamp(z[i], -kObsClip, kObsClip));
    return out;
  }

  /// Samples when `rng` is non-null, otherwise acts greedily (mean action,
  /// switch iff P(switch) > 0.5). Statistics update before normalizing.
  Decision act(std::span<const double> raw, std::mt19937_64* rng, bool update_stats) {
    if (update_stats) normalizer_.update(raw);
    return decide(raw, rng, true);
  }

  Decision act(std::span<const double> raw, std::mt19937_64* rng) const { return decide(raw, rng, true); }

  /// Acting without the critic; the decision's value is left at 0.
  Decision act_only(std::span<const double> raw, std::mt19937_64* rng) const { return decide(raw, rng, false); }

  double value(std::span<const double> raw) const {
    auto obs = preprocess(raw);
    return static_cast<double>(net_.value(obs));
  }

  bool operator==(const Policy&) const = default;

 private:
  Decision decide(std::span<const double> raw, std::mt19937_64* rng, bool with_value) const {
    Decision d;
    d.obs = preprocess(raw);
    auto out = net_.forward(d.obs, with_value);
    d.value = static_cast<double>(out.value);
    d.action.resize(out.mean.size());
    if (rng != nullptr) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (std::size_t i = 0; i < out.mean.size(); ++i) {
        d.action[i] = static_cast<float>(out.mean[i] + std::exp(out.log_std[i]) * normal(*rng));
      }
    } else {
      d.action = out.mean;
    }
    d.logp = diffcore::gaussian_logprob<float, float, float>(out.mean, out.log_std, d.action);
    if (uses_switch_) {
      const double logit = static_cast<double>(*out.switch_logit);
      d.switch_prob = diffcore::sigmoid(logit);
      if (rng != nullptr) {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        d.switch_bit = uni(*rng) < d.switch_prob;
      } else {
        d.switch_bit = d.switch_prob > 0.5;
      }
      d.logp += diffcore::bernoulli_logprob(logit, d.switch_bit);
    }
    return d;
  }

  Net net_;
  RunningNormalizer normalizer_;
  bool uses_switch_ = false;
};

}  // namespace relay::policyopt
