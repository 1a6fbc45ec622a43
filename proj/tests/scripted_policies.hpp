#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "relay/composer/module.hpp"
#include "relay/composer/switching.hpp"
#include "relay/terrainsim/runner.hpp"

namespace scripted {

using namespace relay;
using namespace relay::composer;

inline constexpr float kGain = 1e4f;

// Scripted policies are linear nets (no hidden layers) with saturating gains
// behind an identity normalizer, so every action component clamps to +-1.
enum Obs { kV = 0, kC = 3, kDist = 5 };

inline Policy linear_policy(bool switch_head, bool uses_switch) {
  diffcore::NetShape s;
  s.input = terrainsim::kObservationSize;
  s.hidden = {};
  s.action = 2;
  s.value_head = true;
  s.switch_head = switch_head;
  auto net = policyopt::Net::zeros(s, diffcore::kLogStdMin);
  const std::size_t n = terrainsim::kObservationSize;
  const double big = 1e12;  // statistics count: keeps the normalizer at identity while acting
  policyopt::RunningNormalizer norm(big, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                                    std::vector<double>(n, big));
  return Policy(std::move(net), std::move(norm), uses_switch);
}

inline diffcore::Matrix<float>* param(Policy& p, const std::string& name) {
  for (auto& a : p.net().parameters()) {
    if (a.name == name) return a.array;
  }
  return nullptr;
}

// a1 = sat(gain * (0.8 - v)): bang-bang speed hold near 0.8 m/s.
inline void hold_speed(Policy& p) {
  (*param(p, "mean.weight"))(0, kV) = -kGain;
  (*param(p, "mean.bias"))[0] = 0.8f * kGain;
}

inline Policy scripted_walk() {
  Policy p = linear_policy(true, false);
  hold_speed(p);
  (*param(p, "mean.bias"))[1] = -kGain;  // stay upright
  return p;
}

inline Policy scripted_setup() {
  Policy p = linear_policy(true, true);
  hold_speed(p);
  (*param(p, "mean.bias"))[1] = kGain;  // crouch
  (*param(p, "switch.weight"))(0, kC) = kGain;
  (*param(p, "switch.bias"))[0] = -0.55f * kGain;  // hand over once c > 0.55
  return p;
}

inline Policy scripted_target() {
  Policy p = linear_policy(false, false);
  hold_speed(p);
  (*param(p, "mean.weight"))(1, kDist) = kGain;
  (*param(p, "mean.bias"))[1] = -0.35f * kGain;  // crouch until 0.35 m out, then jump
  (*param(p, "value.weight"))(0, kV) = 3.0f;
  (*param(p, "value.bias"))[0] = 20.0f;
  return p;
}

inline double sat(double x) { return x > 0 ? 1.0 : -1.0; }

struct ExpectedTrace {
  std::vector<SwitchEvent> events;
  RunnerState final_state;
  int setup_steps = 0;
  int steps = 0;
  bool success = false;
};

// The state machine written out by hand against the raw dynamics.
inline ExpectedTrace hand_trace(const Course& course, const RunnerState& start) {
  const DynamicsParams p;
  const double block_start = course.artifacts[0].start;
  const double block_end = course.artifacts[0].end();
  ExpectedTrace t;
  PolicyId active = PolicyId::kDefault;
  RunnerState s = start;
  auto log = [&](PolicyId to) {
    t.events.push_back({s.steps, active, to, s.x, s.c, s.v, terrainsim::ArtifactKind::kBlock});
    active = to;
  };
  for (;;) {
    if (active == PolicyId::kTarget && s.x > block_end && s.contact) log(PolicyId::kDefault);
    if (active == PolicyId::kDefault && s.x <= block_end && block_start - s.x <= 1.0) log(PolicyId::kSetup);
    const double a1 = sat(0.8 - s.v);
    double a2 = -1.0;
    bool hand_over = false;
    if (active == PolicyId::kSetup) {
      a2 = 1.0;
      hand_over = s.c > 0.55;
      ++t.setup_steps;
    } else if (active == PolicyId::kTarget) {
      a2 = sat(std::clamp(block_start - s.x, 0.0, 2.0) - 0.35);
    }
    auto r = terrainsim::step_dynamics(course, p, s, {a1, a2});
    s = r.next;
    ++t.steps;
    if (r.terminal()) {
      t.success = r.reached_goal;
      break;
    }
    if (hand_over) log(PolicyId::kTarget);
  }
  t.final_state = s;
  return t;
}

inline RunnerState trace_start() {
  RunnerState s;
  s.x = 1.5;
  s.h = 1.0;
  return s;
}

struct ScriptedWorld {
  Policy walk = scripted_walk();
  BehaviorModule module;
  Ensemble ensemble;
  ScriptedWorld() {
    module.kind = terrainsim::ArtifactKind::kBlock;
    module.target = std::make_shared<const Policy>(scripted_target());
    module.setup = scripted_setup();
    ensemble.walk = &walk;
    ensemble.add(module);
  }
};

}  // namespace scripted
