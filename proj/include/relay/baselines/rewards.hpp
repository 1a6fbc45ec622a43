#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "relay/composer/awtv.hpp"
#include "relay/composer/setup_training.hpp"
#include "relay/error.hpp"

namespace relay::baselines {

enum class RewardTag { kOriginal, kConstant, kTargetTorque, kTargetValue, kAwtv };

inline const char* to_string(RewardTag t) {
  switch (t) {
    case RewardTag::kOriginal: return "original";
    case RewardTag::kConstant: return "constant";
    case RewardTag::kTargetTorque: return "target-torque";
    case RewardTag::kTargetValue: return "target-value";
    case RewardTag::kAwtv: return "awtv";
  }
  return "?";
}

inline std::optional<RewardTag> parse_reward_tag(std::string_view s) {
  for (RewardTag t : {RewardTag::kOriginal, RewardTag::kConstant, RewardTag::kTargetTorque, RewardTag::kTargetValue,
                      RewardTag::kAwtv}) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

struct RewardVariant {
  RewardTag tag = RewardTag::kAwtv;
  double constant = 1.5;
  double torque_scale = 2.0;
  composer::AWTVParams awtv;  // beta doubles as the target-value scale
};

/// Inputs a variant may read; absent fields raise when the tag needs them.
struct VariantContext {
  std::optional<double> env_reward;
  std::optional<std::span<const float>> setup_action;
  std::optional<std::span<const float>> target_action;
  std::optional<double> advantage;
  std::optional<double> v_state;
};

namespace detail {
template <typename T>
const T& need(const std::optional<T>& v, const char* field, RewardTag tag) {
  if (!v) throw InvalidInput(std::string(to_string(tag)) + " reward needs the " + field + " context field");
  return *v;
}
}  // namespace detail

inline double variant_reward(const RewardVariant& variant, const VariantContext& c) {
  const RewardTag tag = variant.tag;
  switch (tag) {
    case RewardTag::kOriginal: return detail::need(c.env_reward, "env reward", tag);
    case RewardTag::kConstant: return variant.constant;
    case RewardTag::kTargetTorque: {
      const auto a = detail::need(c.setup_action, "setup action", tag);
      const auto b = detail::need(c.target_action, "target action", tag);
      if (a.size() != b.size()) throw InvalidInput("target-torque reward: action sizes differ");
      double sq = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sq += d * d;
      }
      return std::exp(-variant.torque_scale * sq);
    }
    case RewardTag::kTargetValue: return variant.awtv.beta * detail::need(c.v_state, "state value", tag);
    case RewardTag::kAwtv:
      return composer::awtv_reward(detail::need(c.advantage, "advantage", tag), detail::need(c.v_state, "state value", tag),
                                   variant.awtv);
  }
  throw InvalidInput("unknown reward tag");
}

/// Setup-training hooks that score transitions with `variant`.
inline composer::SetupHooks variant_hooks(const RewardVariant& variant) {
  composer::SetupHooks hooks;
  hooks.needs_target_action = variant.tag == RewardTag::kTargetTorque;
  hooks.reward = [variant](const composer::RewardContext& rc) {
    VariantContext c;
    c.env_reward = rc.env_reward;
    c.setup_action = rc.setup_action;
    if (!rc.target_action.empty()) c.target_action = rc.target_action;
    c.advantage = rc.advantage;
    c.v_state = rc.v_state;
    return variant_reward(variant, c);
  };
  return hooks;
}

}  // namespace relay::baselines
