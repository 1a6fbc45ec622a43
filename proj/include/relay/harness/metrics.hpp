#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "relay/composer/episode.hpp"
#include "relay/error.hpp"
#include "relay/harness/config.hpp"

namespace relay::harness {

/// One evaluation episode of one arm.
struct MetricsRow {
  std::uint64_t seed = 0;
  std::string method;
  std::string course;
  bool success = false;
  double distance = 0.0;  // fraction of the course covered, in [0, 1]
  int steps = 0;
  int switches = 0;
  std::string failed_at;  // artifact kind at failure, empty on success

  void validate() const {
    if (!(distance >= 0.0 && distance <= 1.0)) throw InvalidInput("metrics row distance outside [0, 1]");
    if (steps < 0 || switches < 0) throw InvalidInput("metrics row with negative counts");
  }
};

inline constexpr const char* kMetricsHeader = "config_hash,seed,method,course,episode,success,distance,steps,switches,failed_at";

inline MetricsRow metrics_row(std::uint64_t seed, const std::string& method, const std::string& course,
                              const composer::ComposedEpisode& ep) {
  MetricsRow r;
  r.seed = seed;
  r.method = method;
  r.course = course;
  r.success = ep.outcome.success;
  r.distance = ep.outcome.distance_fraction;
  r.steps = ep.outcome.steps;
  r.switches = static_cast<int>(ep.events.size());
  if (!ep.outcome.success && ep.outcome.failed_at) r.failed_at = terrainsim::to_string(*ep.outcome.failed_at);
  return r;
}

/// CSV with a fixed header; numbers printed with fixed precision so reruns
/// are byte-identical.
class MetricsCsv {
 public:
  MetricsCsv(std::ostream& out, std::uint64_t config_hash) : out_(&out), hash_(hash_hex(config_hash)) {
    *out_ << kMetricsHeader << "\n";
  }

  void write(const MetricsRow& r, std::size_t episode) {
    r.validate();
    char dist[32];
    std::snprintf(dist, sizeof dist, "%.6f", r.distance);
    *out_ << hash_ << "," << r.seed << "," << r.method << "," << r.course << "," << episode << ","
          << (r.success ? 1 : 0) << "," << dist << "," << r.steps << "," << r.switches << "," << r.failed_at << "\n";
    ++rows_;
  }

  std::size_t rows() const noexcept { return rows_; }

 private:
  std::ostream* out_;
  std::string hash_;
  std::size_t rows_ = 0;
};

/// One JSON object per switch event.
inline void write_switch_events(std::ostream& out, std::uint64_t config_hash, std::uint64_t seed,
                                const std::string& method, std::size_t episode,
                                const std::vector<composer::SwitchEvent>& events) {
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["config_hash"] = hash_hex(config_hash);
    j["seed"] = seed;
    j["method"] = method;
    j["episode"] = episode;
    j["step"] = e.step;
    j["from"] = policyopt::to_string(e.from);
    j["to"] = policyopt::to_string(e.to);
    j["kind"] = terrainsim::to_string(e.kind);
    j["x"] = e.x;
    j["c"] = e.c;
    j["v"] = e.v;
    out << j.dump() << "\n";
  }
}

}  // namespace relay::harness
