#pragma once

#include <string>
#include <vector>

#include "relay/error.hpp"
#include "relay/policyopt/rollout_buffer.hpp"
#include "relay/terrainsim/course.hpp"
#include "relay/terrainsim/runner.hpp"

namespace relay::composer {

using policyopt::PolicyId;

struct SwitchEvent {
  int step = 0;
  PolicyId from = PolicyId::kDefault;
  PolicyId to = PolicyId::kDefault;
  double x = 0.0;
  double c = 0.0;
  double v = 0.0;
  terrainsim::ArtifactKind kind = terrainsim::ArtifactKind::kBlock;

  bool operator==(const SwitchEvent&) const = default;
};

struct SwitchFlags {
  bool detected = false;
  bool tau_phi = false;
  bool tau_theta = false;
  terrainsim::ArtifactKind kind = terrainsim::ArtifactKind::kBlock;
  std::size_t artifact = 0;
};

/// Which policy drives the runner, whether a detection is latched, and the
/// log of every transition made so far.
struct SwitchState {
  PolicyId active = PolicyId::kDefault;
  bool latched = false;
  terrainsim::ArtifactKind kind = terrainsim::ArtifactKind::kBlock;
  std::size_t artifact = 0;
  std::vector<SwitchEvent> log;
};

inline bool legal_transition(PolicyId from, PolicyId to, bool setup_enabled) {
  if (from == PolicyId::kDefault && to == PolicyId::kSetup) return setup_enabled;
  if (from == PolicyId::kDefault && to == PolicyId::kTarget) return !setup_enabled;
  if (from == PolicyId::kSetup && to == PolicyId::kTarget) return setup_enabled;
  if (from == PolicyId::kTarget && to == PolicyId::kDefault) return true;
  return false;
}

/// Applies one transition, throwing on anything outside the legal set.
inline void transition(SwitchState& s, PolicyId to, const terrainsim::RunnerState& at, bool setup_enabled = true) {
  if (!legal_transition(s.active, to, setup_enabled)) {
    throw UsageError(std::string("illegal policy transition ") + to_string(s.active) + " -> " + to_string(to));
  }
  s.log.push_back({at.steps, s.active, to, at.x, at.c, at.v, s.kind});
  s.active = to;
}

/// Default -> setup on detection, setup -> target on tau_phi, target ->
/// default on tau_theta. Flags belonging to an inactive policy are ignored.
/// With `setup_enabled == false` detection hands straight to the target.
inline SwitchState select_policy(SwitchState s, const SwitchFlags& f, const terrainsim::RunnerState& at,
                                 bool setup_enabled = true) {
  switch (s.active) {
    case PolicyId::kDefault:
      if (f.detected) {
        s.latched = true;
        s.kind = f.kind;
        s.artifact = f.artifact;
        transition(s, setup_enabled ? PolicyId::kSetup : PolicyId::kTarget, at, setup_enabled);
      }
      break;
    case PolicyId::kSetup:
      if (f.tau_phi) transition(s, PolicyId::kTarget, at, setup_enabled);
      break;
    case PolicyId::kTarget:
      if (f.tau_theta) {
        transition(s, PolicyId::kDefault, at, setup_enabled);
        s.latched = false;
      }
      break;
  }
  return s;
}

/// Target -> default once the runner is past the artifact's far edge and on
/// the ground.
inline bool tau_theta(const terrainsim::RunnerState& s, const terrainsim::Course& course, std::size_t artifact) {
  if (artifact >= course.artifacts.size()) throw InvalidInput("tau_theta: artifact index out of range");
  return s.x > course.artifacts[artifact].end() && s.contact;
}

}  // namespace relay::composer
