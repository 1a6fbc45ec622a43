#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relay/error.hpp"
#include "relay/terrainsim/course.hpp"

namespace relay::terrainsim {

/// Planar runner: a point body riding on a leg whose length shrinks with crouch.
struct RunnerState {
  double x = 0.0;  // m
  double h = 1.0;  // body height, m
  double v = 0.0;  // forward velocity, m/s
  double w = 0.0;  // vertical velocity, m/s
  double c = 0.0;  // crouch in [0, 1]
  bool contact = true;
  int steps = 0;

  bool operator==(const RunnerState&) const = default;
};

struct DynamicsParams {
  double dt = 1.0 / 60.0;
  double drive = 4.0;
  double drag = 1.5;
  double v_max = 2.0;
  double crouch_rate = 4.0;
  double stand_height = 1.0;
  double crouch_depth = 0.4;
  double jump_crouch = 0.5;     // minimum crouch for take-off
  double jump_command = -0.5;   // a2 at or below this triggers take-off
  double impulse = 6.0;         // w0 = impulse * c * |a2|
  double gravity = 9.81;
  double step_up = 0.15;
  double gap_fall_depth = 0.3;  // sole this far below the rim over a gap = fallen
  // Crouching past `stumble_crouch` while faster than `stumble_speed` trips
  // the runner. Infinity disables the rule.
  double stumble_speed = 1.2;
  double stumble_crouch = 0.25;
  // Take-off needs the runner at or below this forward speed.
  double takeoff_speed = std::numeric_limits<double>::infinity();
  int max_steps = 900;
  double progress_weight = 20.0;
  double alive_bonus = 0.05;
  double failure_penalty = 10.0;
  double goal_bonus = 10.0;

  double leg_length(double c) const noexcept { return stand_height * (1.0 - crouch_depth * c); }
};

enum class FailureCause { kNone, kCollision, kFellInGap, kTimeout };

inline const char* to_string(FailureCause f) {
  switch (f) {
    case FailureCause::kNone: return "none";
    case FailureCause::kCollision: return "collision";
    case FailureCause::kFellInGap: return "fell-in-gap";
    case FailureCause::kTimeout: return "timeout";
  }
  return "?";
}

struct EpisodeOutcome {
  bool success = false;
  double distance_fraction = 0.0;
  int steps = 0;
  FailureCause cause = FailureCause::kNone;
  std::optional<ArtifactKind> failed_at;  // artifact being negotiated when the episode failed
};

using Action = std::array<double, 2>;  // {drive a1, crouch rate a2}, each clamped to [-1, 1]

struct DynamicsResult {
  RunnerState next;
  double reward = 0.0;
  FailureCause failure = FailureCause::kNone;
  bool reached_goal = false;
  bool jumped = false;
  bool terminal() const noexcept { return reached_goal || failure != FailureCause::kNone; }
};

namespace detail {

// Exact constant-gravity flight for one step; c is frozen while airborne.
inline DynamicsResult fly(const Course& course, const DynamicsParams& p, const RunnerState& s, RunnerState n) {
  DynamicsResult r;
  const double dt = p.dt;
  n.x = s.x + s.v * dt;
  n.h = s.h + s.w * dt - 0.5 * p.gravity * dt * dt;
  n.w = s.w - p.gravity * dt;
  n.contact = false;
  const double leg = p.leg_length(s.c);
  const double sole_prev = s.h - leg;
  const double sole = n.h - leg;
  const auto ground = course.ground(n.x);
  if (!ground) {
    if (sole < -p.gap_fall_depth) r.failure = FailureCause::kFellInGap;
  } else if (sole <= *ground) {
    const bool from_gap = !course.ground(s.x).has_value();
    if (*ground - std::max(sole_prev, sole) > p.step_up) {
      r.failure = from_gap ? FailureCause::kFellInGap : FailureCause::kCollision;
      n.x = s.x;
    } else {
      n.contact = true;
      n.w = 0.0;
      n.h = *ground + leg;
    }
  }
  r.next = n;
  return r;
}

}  // namespace detail

/// One control step. Pure: the same (course, params, state, action) always
/// yields the same result. Timeouts are the environment's concern.
inline DynamicsResult step_dynamics(const Course& course, const DynamicsParams& p, const RunnerState& s,
                                    const Action& action) {
  const double a1 = std::clamp(action[0], -1.0, 1.0);
  const double a2 = std::clamp(action[1], -1.0, 1.0);
  RunnerState n = s;
  n.steps = s.steps + 1;
  DynamicsResult r;

  if (s.contact && s.c >= p.jump_crouch && a2 <= p.jump_command && s.v <= p.takeoff_speed) {
    RunnerState launch = s;
    launch.w = p.impulse * s.c * std::abs(a2);
    r = detail::fly(course, p, launch, n);
    r.jumped = true;
  } else if (s.contact) {
    const double dt = p.dt;
    n.v = std::clamp(s.v + (p.drive * a1 - p.drag * s.v) * dt, 0.0, p.v_max);
    n.c = std::clamp(s.c + p.crouch_rate * a2 * dt, 0.0, 1.0);
    n.x = s.x + n.v * dt;
    const double g0 = course.ground(s.x).value_or(0.0);
    const auto g1 = course.ground(n.x);
    if (!g1) {
      r.failure = FailureCause::kFellInGap;
      n.h = -p.gap_fall_depth;
    } else if (*g1 - g0 > p.step_up) {
      r.failure = FailureCause::kCollision;
      n.x = s.x;
      n.v = 0.0;
    } else if (n.c > p.stumble_crouch && n.v > p.stumble_speed) {
      r.failure = FailureCause::kCollision;
    } else if (*g1 < g0 - 1e-12) {
      // walked off a ledge: keep body height, start falling
      n.contact = false;
      n.w = 0.0;
      n.h = g0 + p.leg_length(n.c);
    } else {
      n.h = *g1 + p.leg_length(n.c);
    }
    r.next = n;
  } else {
    r = detail::fly(course, p, s, n);
  }

  r.reached_goal = r.failure == FailureCause::kNone && r.next.x >= course.goal();
  r.reward = p.progress_weight * (r.next.x - s.x) + p.alive_bonus;
  if (r.failure != FailureCause::kNone) r.reward -= p.failure_penalty;
  if (r.reached_goal) r.reward += p.goal_bonus;
  return r;
}

inline constexpr std::size_t kObservationSize = 10;
inline constexpr double kMaxSensedDistance = 2.0;
inline constexpr double kDetectDistance = 1.0;

using Observation = std::array<double, kObservationSize>;

/// [v, w, h - ground, c, contact, dist to next artifact (<= 2), next height, one-hot kind(3)]
inline Observation observe(const Course& course, const RunnerState& s) {
  Observation o{};
  o[0] = s.v;
  o[1] = s.w;
  o[2] = s.h - course.ground(s.x).value_or(0.0);
  o[3] = s.c;
  o[4] = s.contact ? 1.0 : 0.0;
  o[5] = kMaxSensedDistance;
  if (auto idx = course.next_artifact(s.x)) {
    const auto& a = course.artifacts[*idx];
    const double dist = std::clamp(a.start - s.x, 0.0, kMaxSensedDistance);
    o[5] = dist;
    if (a.start - s.x <= kMaxSensedDistance) {
      o[6] = a.feature_height();
      o[7 + static_cast<std::size_t>(a.kind)] = 1.0;
    }
  }
  return o;
}

struct Detection {
  bool detected = false;
  ArtifactKind kind = ArtifactKind::kBlock;
  std::size_t index = 0;
};

/// Ground-truth detector: fires within `range` of the next untraversed artifact.
inline Detection oracle_detect(const RunnerState& s, const Course& course, double range = kDetectDistance) {
  Detection d;
  if (auto idx = course.next_artifact(s.x)) {
    const auto& a = course.artifacts[*idx];
    if (a.start - s.x <= range) {
      d.detected = true;
      d.kind = a.kind;
      d.index = *idx;
    }
  }
  return d;
}

/// x0 ~ U(0, 2.2) m before the course's first artifact, at rest and standing.
inline RunnerState initial_state(const Course& course, std::uint64_t seed, const DynamicsParams& p = {}) {
  course.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offset(0.0, kStartSpread);
  RunnerState s;
  s.x = course.start_anchor() - offset(rng);
  s.h = course.ground(s.x).value_or(0.0) + p.leg_length(0.0);
  return s;
}

/// Episode wrapper: timeout, distance bookkeeping and outcome.
class RunnerEnv {
 public:
  explicit RunnerEnv(Course course, DynamicsParams params = {}) : course_(std::move(course)), params_(params) {
    course_.validate();
  }

  const Course& course() const noexcept { return course_; }
  const DynamicsParams& params() const noexcept { return params_; }
  const RunnerState& state() const noexcept { return state_; }
  bool done() const noexcept { return done_; }
  double start_x() const noexcept { return x0_; }

  RunnerState reset(std::uint64_t seed) { return reset_to(initial_state(course_, seed, params_)); }

  RunnerState reset_to(const RunnerState& s) {
    if (!std::isfinite(s.x) || s.c < 0.0 || s.c > 1.0 || s.v < 0.0) throw InvalidInput("invalid runner state");
    state_ = s;
    state_.steps = 0;
    x0_ = s.x;
    max_x_ = s.x;
    done_ = false;
    outcome_.reset();
    return state_;
  }

  Observation observation() const { return observe(course_, state_); }

  struct StepResult {
    RunnerState state;
    double reward = 0.0;
    bool done = false;
    std::optional<EpisodeOutcome> outcome;
    bool jumped = false;
  };

  StepResult step(const Action& action) {
    if (done_) throw UsageError("step called after the episode finished");
    auto r = step_dynamics(course_, params_, state_, action);
    FailureCause cause = r.failure;
    double reward = r.reward;
    if (cause == FailureCause::kNone && !r.reached_goal && r.next.steps > params_.max_steps) {
      cause = FailureCause::kTimeout;
      reward -= params_.failure_penalty;
    }
    const RunnerState prev = state_;
    state_ = r.next;
    max_x_ = std::max(max_x_, state_.x);
    StepResult out{state_, reward, false, std::nullopt, r.jumped};
    if (r.reached_goal || cause != FailureCause::kNone) {
      done_ = true;
      EpisodeOutcome o;
      o.success = r.reached_goal;
      o.steps = state_.steps;
      o.cause = cause;
      o.distance_fraction = o.success ? 1.0 : distance_fraction();
      if (!o.success) {
        if (auto idx = course_.next_artifact(prev.x)) o.failed_at = course_.artifacts[*idx].kind;
      }
      outcome_ = o;
      out.done = true;
      out.outcome = o;
    }
    return out;
  }

  const std::optional<EpisodeOutcome>& outcome() const noexcept { return outcome_; }

  double distance_fraction() const {
    const double span = course_.goal() - x0_;
    if (span <= 0.0) return 1.0;
    return std::clamp((max_x_ - x0_) / span, 0.0, 1.0);
  }

 private:
  Course course_;
  DynamicsParams params_;
  RunnerState state_;
  double x0_ = 0.0;
  double max_x_ = 0.0;
  bool done_ = true;
  std::optional<EpisodeOutcome> outcome_;
};

struct SuccessDistance {
  double success_pct = 0.0;
  double distance_pct = 0.0;
};

inline SuccessDistance metrics(std::span<const EpisodeOutcome> episodes) {
  if (episodes.empty()) throw InvalidInput("metrics of an empty episode list");
  double s = 0.0;
  double d = 0.0;
  for (const auto& e : episodes) {
    s += e.success ? 1.0 : 0.0;
    d += e.distance_fraction;
  }
  const double n = static_cast<double>(episodes.size());
  return {100.0 * s / n, 100.0 * d / n};
}

}  // namespace relay::terrainsim
