#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "relay/baselines/rewards.hpp"
#include "relay/composer/awtv.hpp"
#include "relay/error.hpp"
#include "relay/policyopt/ppo.hpp"
#include "relay/terrainsim/course.hpp"
#include "relay/terrainsim/runner.hpp"

namespace relay::harness {

/// Everything an experiment depends on. Any run is a function of this value.
struct ExperimentConfig {
  std::string experiment = "compare";
  std::vector<std::uint64_t> seeds{0};
  std::vector<terrainsim::ArtifactKind> kinds{terrainsim::ArtifactKind::kBlock};
  std::string course;  // optional course file; empty = single-artifact course of the first kind
  std::vector<std::string> arms;
  std::vector<std::string> rewards{"original", "constant", "target-torque", "target-value", "awtv"};
  std::string output_dir = ".";

  std::size_t walk_budget = 300'000;
  std::size_t target_budget = 1'000'000;
  double target_stop = 95.0;  // target training ends early at this eval success %; <= 0 disables
  std::size_t setup_budget = 1'000'000;
  std::size_t single_budget = 0;  // 0 = target_budget + setup_budget
  std::size_t setup_horizon = 512;
  std::size_t eval_every = 50;
  std::size_t eval_episodes = 100;
  std::size_t final_episodes = 200;
  std::size_t episodes = 200;  // multi-terrain episodes per seed
  std::size_t switch_episodes = 1000;
  int workers = 1;

  policyopt::PPOConfig ppo;
  composer::AWTVParams awtv;
  terrainsim::DynamicsParams dynamics;

  std::size_t single_policy_budget() const { return single_budget > 0 ? single_budget : target_budget + setup_budget; }

  /// Course named by `course`, or the single-artifact course of the first kind.
  terrainsim::Course jump_course() const {
    if (!course.empty()) return terrainsim::load_course(course);
    return terrainsim::single_artifact_course(kinds.front());
  }

  std::string canonical() const;
  std::uint64_t hash() const;
  /// Hash of the keys that shape trained policies; checkpoints carry this one
  /// so they stay compatible across experiments and seed lists.
  std::uint64_t policy_hash() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw InvalidInput("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  return terrainsim::detail::parse_number(v, "config key '" + key + "'");
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ",";
    out += f(x);
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size = [](std::size_t ExperimentConfig::*m) {
      return [m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*m = to_u64(k, v); };
    };
    t["experiment"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.experiment = v; };
    t["seeds"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.seeds.clear();
      for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(k, s));
      if (c.seeds.empty()) throw InvalidInput("config key 'seeds' is empty");
    };
    t["kinds"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.kinds.clear();
      for (const auto& s : split_list(v)) {
        auto kind = terrainsim::parse_kind(s);
        if (!kind) throw InvalidInput("config key 'kinds': unknown artifact kind '" + s + "'");
        c.kinds.push_back(*kind);
      }
      if (c.kinds.empty()) throw InvalidInput("config key 'kinds' is empty");
    };
    t["course"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      if (!std::filesystem::exists(v)) throw InvalidInput("config key 'course': file '" + v + "' does not exist");
      c.course = v;
    };
    t["arms"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.arms = split_list(v); };
    t["rewards"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.rewards = split_list(v);
      for (const auto& r : c.rewards) {
        if (!baselines::parse_reward_tag(r)) throw InvalidInput("config key 'rewards': unknown reward '" + r + "'");
      }
    };
    t["output_dir"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      if (!std::filesystem::is_directory(v)) throw InvalidInput("config key 'output_dir': '" + v + "' is not a directory");
      c.output_dir = v;
    };
    t["walk_budget"] = size(&ExperimentConfig::walk_budget);
    t["target_budget"] = size(&ExperimentConfig::target_budget);
    t["setup_budget"] = size(&ExperimentConfig::setup_budget);
    t["single_budget"] = size(&ExperimentConfig::single_budget);
    t["setup_horizon"] = size(&ExperimentConfig::setup_horizon);
    t["eval_every"] = size(&ExperimentConfig::eval_every);
    t["eval_episodes"] = size(&ExperimentConfig::eval_episodes);
    t["final_episodes"] = size(&ExperimentConfig::final_episodes);
    t["episodes"] = size(&ExperimentConfig::episodes);
    t["switch_episodes"] = size(&ExperimentConfig::switch_episodes);
    t["target_stop"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.target_stop = to_double(k, v); };
    t["workers"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.workers = static_cast<int>(to_u64(k, v));
      if (c.workers < 1) throw InvalidInput("config key 'workers' must be >= 1");
    };
    auto dbl = [](auto getter) {
      return [getter](ExperimentConfig& c, const std::string& k, const std::string& v) { getter(c) = to_double(k, v); };
    };
    t["gamma"] = dbl([](ExperimentConfig& c) -> double& { return c.ppo.gamma; });
    t["lambda"] = dbl([](ExperimentConfig& c) -> double& { return c.ppo.lambda; });
    t["clip"] = dbl([](ExperimentConfig& c) -> double& { return c.ppo.clip; });
    t["learning_rate"] = dbl([](ExperimentConfig& c) -> double& { return c.ppo.learning_rate; });
    t["value_coef"] = dbl([](ExperimentConfig& c) -> double& { return c.ppo.value_coef; });
    t["entropy_coef"] = dbl([](ExperimentConfig& c) -> double& { return c.ppo.entropy_coef; });
    t["max_grad_norm"] = dbl([](ExperimentConfig& c) -> double& { return c.ppo.max_grad_norm; });
    t["epochs"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.ppo.epochs = static_cast<int>(to_u64(k, v)); };
    t["minibatch"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.ppo.minibatch = to_u64(k, v); };
    t["horizon"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.ppo.horizon = to_u64(k, v); };
    t["awtv_alpha"] = dbl([](ExperimentConfig& c) -> double& { return c.awtv.alpha; });
    t["awtv_beta"] = dbl([](ExperimentConfig& c) -> double& { return c.awtv.beta; });
    t["stumble_speed"] = dbl([](ExperimentConfig& c) -> double& { return c.dynamics.stumble_speed; });
    t["stumble_crouch"] = dbl([](ExperimentConfig& c) -> double& { return c.dynamics.stumble_crouch; });
    return t;
  }();
  return table;
}

}  // namespace detail

inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const auto& table = detail::setters();
  auto it = table.find(key);
  if (it == table.end()) throw InvalidInput("unknown config key '" + key + "'");
  it->second(c, key, value);
}

/// `key = value` lines; blank lines and `#` comments ignored; unknown keys
/// and malformed values are errors naming the line.
inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>",
                                     ExperimentConfig base = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set_config_value(base, detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)));
    } catch (const InvalidInput& e) {
      throw InvalidInput(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  base.ppo.validate();
  base.awtv.gamma = base.ppo.gamma;
  base.awtv.validate();
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot open config file '" + path + "'");
  return parse_config(f, path, std::move(base));
}

inline std::string ExperimentConfig::canonical() const {
  using detail::fmt;
  std::map<std::string, std::string> kv;
  kv["experiment"] = experiment;
  kv["seeds"] = detail::join<std::uint64_t>(seeds, [](const std::uint64_t& s) { return std::to_string(s); });
  kv["kinds"] = detail::join<terrainsim::ArtifactKind>(kinds, [](const terrainsim::ArtifactKind& k) {
    return std::string(terrainsim::to_string(k));
  });
  kv["course"] = course.empty() ? std::string() : terrainsim::format_course(jump_course());
  kv["arms"] = detail::join<std::string>(arms, [](const std::string& s) { return s; });
  kv["rewards"] = detail::join<std::string>(rewards, [](const std::string& s) { return s; });
  kv["walk_budget"] = std::to_string(walk_budget);
  kv["target_budget"] = std::to_string(target_budget);
  kv["target_stop"] = fmt(target_stop);
  kv["setup_budget"] = std::to_string(setup_budget);
  kv["single_budget"] = std::to_string(single_budget);
  kv["setup_horizon"] = std::to_string(setup_horizon);
  kv["eval_every"] = std::to_string(eval_every);
  kv["eval_episodes"] = std::to_string(eval_episodes);
  kv["final_episodes"] = std::to_string(final_episodes);
  kv["episodes"] = std::to_string(episodes);
  kv["switch_episodes"] = std::to_string(switch_episodes);
  kv["workers"] = std::to_string(workers);
  kv["gamma"] = fmt(ppo.gamma);
  kv["lambda"] = fmt(ppo.lambda);
  kv["clip"] = fmt(ppo.clip);
  kv["epochs"] = std::to_string(ppo.epochs);
  kv["minibatch"] = std::to_string(ppo.minibatch);
  kv["learning_rate"] = fmt(ppo.learning_rate);
  kv["value_coef"] = fmt(ppo.value_coef);
  kv["entropy_coef"] = fmt(ppo.entropy_coef);
  kv["horizon"] = std::to_string(ppo.horizon);
  kv["max_grad_norm"] = fmt(ppo.max_grad_norm);
  kv["awtv_alpha"] = fmt(awtv.alpha);
  kv["awtv_beta"] = fmt(awtv.beta);
  kv["stumble_speed"] = fmt(dynamics.stumble_speed);
  kv["stumble_crouch"] = fmt(dynamics.stumble_crouch);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

/// 64-bit FNV-1a of the canonical text.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

inline std::uint64_t ExperimentConfig::policy_hash() const {
  static const std::set<std::string> skip{"experiment", "seeds", "kinds", "arms", "rewards", "eval_episodes",
                                          "final_episodes", "episodes", "switch_episodes", "eval_every"};
  std::istringstream in(canonical());
  std::string text;
  for (std::string line; std::getline(in, line);) {
    if (!skip.count(line.substr(0, line.find('=')))) text += line + "\n";
  }
  return fnv1a(text);
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace relay::harness
