#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "relay/error.hpp"

namespace relay::terrainsim {

enum class ArtifactKind { kBlock, kGap, kHurdle };

inline constexpr std::size_t kArtifactKinds = 3;

inline const char* to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::kBlock: return "block";
    case ArtifactKind::kGap: return "gap";
    case ArtifactKind::kHurdle: return "hurdle";
  }
  return "?";
}

inline std::optional<ArtifactKind> parse_kind(std::string_view s) {
  if (s == "block" || s == "jump") return ArtifactKind::kBlock;
  if (s == "gap") return ArtifactKind::kGap;
  if (s == "hurdle") return ArtifactKind::kHurdle;
  return std::nullopt;
}

struct TerrainArtifact {
  ArtifactKind kind = ArtifactKind::kBlock;
  double start = 0.0;
  double length = 0.0;  // extent along x (gap width for gaps)
  double height = 0.0;  // raised height; unused for gaps

  double end() const noexcept { return start + length; }

  static TerrainArtifact block(double start, double height = 0.5, double length = 0.3) {
    return {ArtifactKind::kBlock, start, length, height};
  }
  static TerrainArtifact gap(double start, double width = 0.8) { return {ArtifactKind::kGap, start, width, 0.0}; }
  static TerrainArtifact hurdle(double start, double height = 0.2, double length = 0.1) {
    return {ArtifactKind::kHurdle, start, length, height};
  }
  static TerrainArtifact of_kind(ArtifactKind k, double start) {
    switch (k) {
      case ArtifactKind::kBlock: return block(start);
      case ArtifactKind::kGap: return gap(start);
      case ArtifactKind::kHurdle: return hurdle(start);
    }
    return block(start);
  }

  /// Feature reported to policies as "next-artifact height"; gaps read -1.
  double feature_height() const noexcept { return kind == ArtifactKind::kGap ? -1.0 : height; }

  bool operator==(const TerrainArtifact&) const = default;
};

inline constexpr double kGoalMargin = 3.0;
inline constexpr double kFlatGoal = 6.0;
inline constexpr double kStartSpread = 2.2;

/// Flat ground at height 0 with artifacts ordered along x. The goal sits
/// 3 m past the last artifact, or at `flat_goal` on an empty course.
struct Course {
  std::vector<TerrainArtifact> artifacts;
  std::optional<double> goal_override;
  std::string id = "course";

  double goal() const {
    if (goal_override) return *goal_override;
    if (artifacts.empty()) return kFlatGoal;
    return artifacts.back().end() + kGoalMargin;
  }

  /// Episodes start uniformly within kStartSpread metres before this point.
  double start_anchor() const { return artifacts.empty() ? kStartSpread : artifacts.front().start; }

  void validate() const {
    double prev_end = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < artifacts.size(); ++i) {
      const auto& a = artifacts[i];
      if (!std::isfinite(a.start) || !(a.length > 0.0) || !std::isfinite(a.length)) {
        throw InvalidInput("artifact " + std::to_string(i) + " has invalid start or length");
      }
      if (a.kind != ArtifactKind::kGap && !(a.height > 0.0 && std::isfinite(a.height))) {
        throw InvalidInput("artifact " + std::to_string(i) + " needs a positive height");
      }
      if (a.start < prev_end) {
        throw InvalidInput("artifact " + std::to_string(i) + " overlaps or precedes the previous artifact");
      }
      prev_end = a.end();
    }
    if (goal_override && !artifacts.empty() && *goal_override <= artifacts.back().end()) {
      throw InvalidInput("goal must lie past the last artifact");
    }
    if (goal_override && !(*goal_override > start_anchor())) throw InvalidInput("goal must lie past the start region");
  }

  /// Support height at x; nullopt over a gap.
  std::optional<double> ground(double x) const {
    for (const auto& a : artifacts) {
      if (x < a.start) break;
      if (x <= a.end()) {
        if (a.kind == ArtifactKind::kGap) return std::nullopt;
        return a.height;
      }
    }
    return 0.0;
  }

  /// Index of the first artifact whose end has not been passed.
  std::optional<std::size_t> next_artifact(double x) const {
    for (std::size_t i = 0; i < artifacts.size(); ++i) {
      if (x <= artifacts[i].end()) return i;
    }
    return std::nullopt;
  }

  bool operator==(const Course&) const = default;
};

inline Course jump_course(double block_start = 3.0) {
  Course c;
  c.artifacts.push_back(TerrainArtifact::block(block_start));
  c.id = "jump";
  return c;
}

inline Course flat_course() {
  Course c;
  c.id = "flat";
  return c;
}

inline Course single_artifact_course(ArtifactKind k, double start = 3.0) {
  Course c;
  c.artifacts.push_back(TerrainArtifact::of_kind(k, start));
  c.id = to_string(k);
  return c;
}

/// Courses made of the given kinds in order, 3 m of flat between artifacts.
inline Course sequence_course(const std::vector<ArtifactKind>& kinds, double first_start = 3.0,
                              double separator = 3.0) {
  Course c;
  double x = first_start;
  std::string id;
  for (ArtifactKind k : kinds) {
    c.artifacts.push_back(TerrainArtifact::of_kind(k, x));
    x = c.artifacts.back().end() + separator;
    if (!id.empty()) id += "-";
    id += to_string(k);
  }
  c.id = id.empty() ? "flat" : id;
  return c;
}

namespace detail {

inline double parse_number(std::string_view tok, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw InvalidInput(where + "invalid number '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace detail

/// Parses the course text format:
///
///   # comment
///   id     <name>
///   goal   <x>
///   block  <start> [height=<m>] [length=<m>]
///   gap    <start> [width=<m>]
///   hurdle <start> [height=<m>] [length=<m>]
///
/// Errors carry "<source>:<line>: ".
inline Course parse_course(std::istream& in, const std::string& source = "<course>") {
  Course course;
  std::string line;
  std::size_t lineno = 0;
  course.id = source;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> toks;
    for (std::string t; ls >> t;) toks.push_back(t);
    if (toks.empty()) continue;
    const std::string& head = toks[0];
    if (head == "id") {
      if (toks.size() != 2) throw InvalidInput(where + "'id' takes exactly one value");
      course.id = toks[1];
      continue;
    }
    if (head == "goal") {
      if (toks.size() != 2) throw InvalidInput(where + "'goal' takes exactly one value");
      course.goal_override = detail::parse_number(toks[1], where);
      continue;
    }
    auto kind = parse_kind(head);
    if (!kind) throw InvalidInput(where + "unknown artifact kind '" + head + "'");
    if (toks.size() < 2) throw InvalidInput(where + "missing start position");
    TerrainArtifact a = TerrainArtifact::of_kind(*kind, detail::parse_number(toks[1], where));
    for (std::size_t i = 2; i < toks.size(); ++i) {
      const auto eq = toks[i].find('=');
      if (eq == std::string::npos) throw InvalidInput(where + "expected key=value, got '" + toks[i] + "'");
      const std::string key = toks[i].substr(0, eq);
      const double val = detail::parse_number(std::string_view(toks[i]).substr(eq + 1), where);
      if (!(val > 0.0)) throw InvalidInput(where + "'" + key + "' must be positive");
      if (key == "height" && *kind != ArtifactKind::kGap) {
        a.height = val;
      } else if (key == "length" && *kind != ArtifactKind::kGap) {
        a.length = val;
      } else if (key == "width" && *kind == ArtifactKind::kGap) {
        a.length = val;
      } else {
        throw InvalidInput(where + "unknown key '" + key + "' for " + head);
      }
    }
    if (!course.artifacts.empty() && a.start < course.artifacts.back().end()) {
      throw InvalidInput(where + "artifact overlaps or precedes the previous one");
    }
    course.artifacts.push_back(a);
  }
  try {
    course.validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(source + ": " + e.what());
  }
  return course;
}

inline Course load_course(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open course file '" + path + "'");
  return parse_course(in, path);
}

inline std::string format_course(const Course& c) {
  std::ostringstream out;
  out.precision(17);
  out << "id " << c.id << "\n";
  if (c.goal_override) out << "goal " << *c.goal_override << "\n";
  for (const auto& a : c.artifacts) {
    out << to_string(a.kind) << " " << a.start;
    if (a.kind == ArtifactKind::kGap) {
      out << " width=" << a.length;
    } else {
      out << " height=" << a.height << " length=" << a.length;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace relay::terrainsim
