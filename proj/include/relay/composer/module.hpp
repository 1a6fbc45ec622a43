#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>

#include "relay/composer/training.hpp"
#include "relay/error.hpp"
#include "relay/terrainsim/course.hpp"

namespace relay::composer {

/// Everything needed to negotiate one terrain kind: the frozen target policy
/// (with its value head), the setup policy that leads into it, and the
/// target-side reward used to judge setup transitions.
struct BehaviorModule {
  ArtifactKind kind = ArtifactKind::kBlock;
  std::shared_ptr<const Policy> target;
  Policy setup;

  /// Setup policy bit-copied from the default policy, or freshly initialized
  /// (with empty statistics) when `init_from_default` is false.
  static BehaviorModule create(ArtifactKind kind, std::shared_ptr<const Policy> target, const Policy& default_policy,
                               bool init_from_default = true, std::uint64_t seed = 0) {
    if (!target) throw InvalidInput("behavior module needs a target policy");
    if (!target->net().has_value_head()) throw InvalidInput("target policy needs a value head");
    if (!default_policy.net().has_switch_head()) {
      throw InvalidInput("default policy net needs a switch head to seed a setup policy");
    }
    BehaviorModule m;
    m.kind = kind;
    m.target = std::move(target);
    if (init_from_default) {
      m.setup = default_policy;
      m.setup.set_uses_switch(true);
    } else {
      m.setup = fresh_policy(seed, true, true);
    }
    return m;
  }
};

/// Default policy plus one module per terrain kind.
struct Ensemble {
  const Policy* walk = nullptr;
  std::array<const BehaviorModule*, terrainsim::kArtifactKinds> modules{};

  const BehaviorModule& module(ArtifactKind k) const {
    const auto* m = modules[static_cast<std::size_t>(k)];
    if (m == nullptr) throw InvalidInput(std::string("no behavior module for ") + terrainsim::to_string(k));
    return *m;
  }

  void add(const BehaviorModule& m) { modules[static_cast<std::size_t>(m.kind)] = &m; }

  /// Throws unless every artifact on `course` has a module.
  void require_course(const Course& course) const {
    if (walk == nullptr) throw InvalidInput("ensemble has no default policy");
    for (const auto& a : course.artifacts) module(a.kind);
  }
};

}  // namespace relay::composer
