#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relay/harness/checkpoint.hpp"
#include "relay/harness/experiments.hpp"

namespace fs = std::filesystem;
using namespace relay;
using namespace relay::harness;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitTrainingFailure = 3;
constexpr int kExitFormat = 4;

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::size_t seed_count = 0;
  std::string out_dir = ".";
  std::string checkpoints = "checkpoints";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "key = value experiment config file");
  sub->add_option("--set", c.sets, "override one config key, as key=value");
  sub->add_option("--seeds", c.seed_count, "use seeds 0..N-1");
  sub->add_option("--out", c.out_dir, "directory for CSV, logs and reports");
  sub->add_option("--checkpoints", c.checkpoints, "checkpoint directory");
}

ExperimentConfig build_config(const Common& c, const std::string& experiment) {
  ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  cfg.experiment = experiment;
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  if (c.seed_count > 0) {
    cfg.seeds.clear();
    for (std::size_t s = 0; s < c.seed_count; ++s) cfg.seeds.push_back(s);
  }
  cfg.ppo.validate();
  cfg.awtv.gamma = cfg.ppo.gamma;
  cfg.awtv.validate();
  fs::create_directories(c.out_dir);
  cfg.output_dir = c.out_dir;
  return cfg;
}

std::string ckpt(const Common& c, const std::string& name) { return (fs::path(c.checkpoints) / (name + ".rbpc")).string(); }

std::string target_name(terrainsim::ArtifactKind k) { return std::string("target-") + terrainsim::to_string(k); }
std::string setup_name(terrainsim::ArtifactKind k) { return std::string("setup-") + terrainsim::to_string(k); }

std::ofstream open_out(const ExperimentConfig& cfg, const std::string& name) {
  const auto path = (fs::path(cfg.output_dir) / name).string();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InvalidInput("cannot write '" + path + "'");
  return f;
}

policyopt::Policy load_policy(const Common& c, const std::string& name, const ExperimentConfig& cfg) {
  return load_checkpoint(ckpt(c, name), cfg.policy_hash(), &std::cerr).policy;
}

// Walk and targets from the checkpoint directory when all are present,
// trained otherwise.
Prerequisites prerequisites(const Common& c, const ExperimentConfig& cfg, std::uint64_t seed) {
  bool have = fs::exists(ckpt(c, "walk"));
  for (auto k : cfg.kinds) have = have && fs::exists(ckpt(c, target_name(k)));
  if (!have) return train_prerequisites(cfg, seed);
  Prerequisites p;
  p.seed = seed;
  p.walk = load_policy(c, "walk", cfg);
  for (auto k : cfg.kinds) {
    p.targets[static_cast<std::size_t>(k)] = std::make_shared<const policyopt::Policy>(load_policy(c, target_name(k), cfg));
  }
  return p;
}

void write_arms(const ExperimentConfig& cfg, const std::string& stem, const std::vector<ArmOutcome>& arms) {
  auto csv_file = open_out(cfg, stem + ".csv");
  auto log_file = open_out(cfg, stem + "_events.jsonl");
  MetricsCsv csv(csv_file, cfg.hash());
  for (const auto& a : arms) {
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      csv.write(a.rows[i], i);
      write_switch_events(log_file, cfg.hash(), a.seed, a.arm, i, a.events[i]);
    }
  }
  auto curves = open_out(cfg, stem + "_curves.csv");
  curves << "config_hash,seed,method,update,env_steps,success,distance\n";
  for (const auto& a : arms) {
    for (const auto& p : a.curve) {
      curves << hash_hex(cfg.hash()) << "," << a.seed << "," << a.arm << "," << p.update << "," << p.env_steps << ","
             << std::fixed << std::setprecision(2) << p.success_pct << "," << p.distance_pct << "\n";
    }
  }
}

void report_arms(const ExperimentConfig& cfg, const std::string& stem, const std::vector<ArmOutcome>& arms,
                 const std::vector<std::string>& order) {
  auto rep = open_out(cfg, stem + "_report.txt");
  for (std::ostream* os : {static_cast<std::ostream*>(&rep), static_cast<std::ostream*>(&std::cout)}) {
    *os << "config " << hash_hex(cfg.hash()) << "\n";
    for (const auto& a : arms) {
      *os << "seed " << a.seed << "  " << std::left << std::setw(18) << a.arm << std::right << " success "
          << std::fixed << std::setprecision(1) << std::setw(5) << a.success_pct << "%  distance " << std::setw(5)
          << a.distance_pct << "%\n";
    }
    if (!order.empty()) {
      *os << "ranking:";
      for (const auto& n : order) *os << " " << n;
      *os << "\n";
    }
  }
}

// Mean success per arm name over seeds, ranked.
std::vector<std::string> mean_ranking(const std::vector<ArmOutcome>& arms) {
  std::vector<ArmOutcome> means;
  for (const auto& a : arms) {
    auto it = std::find_if(means.begin(), means.end(), [&](const ArmOutcome& m) { return m.arm == a.arm; });
    if (it == means.end()) {
      means.push_back(a);
      means.back().distance_pct = 1.0;
    } else {
      it->success_pct += a.success_pct;
      it->distance_pct += 1.0;
    }
  }
  for (auto& m : means) m.success_pct /= m.distance_pct;
  return rank_arms(means);
}

int cmd_train_target(const Common& c) {
  auto cfg = build_config(c, "train-target");
  fs::create_directories(c.checkpoints);
  const auto seed = cfg.seeds.front();
  TrainingCurve curve;
  auto walk = train_walk(cfg, seed, &curve);
  save_checkpoint(ckpt(c, "walk"), walk, cfg.policy_hash());
  std::cout << "walk: " << curve.back().success_pct << "% after " << curve.back().env_steps << " steps -> "
            << ckpt(c, "walk") << "\n";
  for (auto k : cfg.kinds) {
    auto t = train_target_policy(cfg, k, seed, &curve);
    save_checkpoint(ckpt(c, target_name(k)), *t, cfg.policy_hash());
    std::cout << target_name(k) << ": " << curve.back().success_pct << "% after " << curve.back().env_steps
              << " steps -> " << ckpt(c, target_name(k)) << "\n";
  }
  return 0;
}

int cmd_train_setup(const Common& c, std::optional<std::size_t> budget) {
  auto cfg = build_config(c, "train-setup");
  if (budget) cfg.setup_budget = *budget;
  Prerequisites p;
  p.seed = cfg.seeds.front();
  p.walk = load_policy(c, "walk", cfg);
  for (auto k : cfg.kinds) {
    p.targets[static_cast<std::size_t>(k)] = std::make_shared<const policyopt::Policy>(load_policy(c, target_name(k), cfg));
    auto arm = train_setup_arm(cfg, p, k, {});
    save_checkpoint(ckpt(c, setup_name(k)), arm.module.setup, cfg.policy_hash());
    std::cout << setup_name(k) << ": ";
    if (arm.curve.empty()) {
      std::cout << "untrained copy of walk";
    } else {
      std::cout << arm.curve.back().success_pct << "% after " << arm.curve.back().env_steps << " steps";
    }
    std::cout << " -> " << ckpt(c, setup_name(k)) << "\n";
  }
  return 0;
}

int cmd_evaluate(const Common& c) {
  auto cfg = build_config(c, "evaluate");
  const auto walk = load_policy(c, "walk", cfg);
  const auto kind = cfg.kinds.front();
  auto module = BehaviorModule::create(kind, std::make_shared<const policyopt::Policy>(load_policy(c, target_name(kind), cfg)), walk);
  module.setup = load_policy(c, setup_name(kind), cfg);
  Ensemble ens;
  ens.walk = &walk;
  ens.add(module);
  const auto course = cfg.jump_course();
  std::vector<ArmOutcome> arms;
  for (auto seed : cfg.seeds) {
    const auto base = composer::kEvalSeedBase + seed * 1'000'003;
    for (auto mode : {composer::SwitchMode::kSetup, composer::SwitchMode::kDirect}) {
      auto eps = composer::evaluate_composed(ens, course, cfg.dynamics, cfg.final_episodes, {mode, {}, true}, base);
      arms.push_back(summarize(mode == composer::SwitchMode::kSetup ? "setup" : "without-setup", seed, course.id, eps));
    }
  }
  write_arms(cfg, "evaluate", arms);
  report_arms(cfg, "evaluate", arms, mean_ranking(arms));
  return 0;
}

int cmd_compare(const Common& c, const std::string& experiment) {
  auto cfg = build_config(c, experiment);
  std::vector<ArmOutcome> arms;
  for (auto seed : cfg.seeds) {
    auto pre = prerequisites(c, cfg, seed);
    std::vector<ArmOutcome> got;
    if (experiment == "ablate") {
      got = run_ablation(cfg, pre);
    } else if (experiment == "reward-compare") {
      got = run_reward_compare(cfg, pre);
    } else {
      auto names = cfg.arms.empty()
                       ? std::vector<std::string>{"setup", "proximity", "without-setup", "learned-switch", "single-policy"}
                       : cfg.arms;
      got = run_comparison(cfg, pre, names);
    }
    arms.insert(arms.end(), got.begin(), got.end());
  }
  write_arms(cfg, experiment, arms);
  report_arms(cfg, experiment, arms, mean_ranking(arms));
  return 0;
}

int cmd_multi_terrain(const Common& c) {
  auto cfg = build_config(c, "multi-terrain");
  if (cfg.kinds.size() == 1) cfg.kinds = {terrainsim::ArtifactKind::kBlock, terrainsim::ArtifactKind::kGap, terrainsim::ArtifactKind::kHurdle};
  const auto walk = load_policy(c, "walk", cfg);
  std::vector<BehaviorModule> modules;
  modules.reserve(cfg.kinds.size());
  for (auto k : cfg.kinds) {
    auto m = BehaviorModule::create(k, std::make_shared<const policyopt::Policy>(load_policy(c, target_name(k), cfg)), walk);
    m.setup = load_policy(c, setup_name(k), cfg);
    modules.push_back(std::move(m));
  }
  Ensemble ens;
  ens.walk = &walk;
  for (const auto& m : modules) ens.add(m);
  std::map<std::string, std::vector<ArmOutcome>> by_arm;
  std::map<std::string, std::map<terrainsim::ArtifactKind, int>> failures;
  std::map<std::string, int> other;
  for (auto seed : cfg.seeds) {
    for (auto& arm : run_multi_terrain(cfg, ens, seed, cfg.episodes)) {
      for (auto [k, n] : arm.failures) failures[arm.outcome.arm][k] += n;
      other[arm.outcome.arm] += arm.other_failures;
      by_arm[arm.outcome.arm].push_back(std::move(arm.outcome));
    }
  }
  auto rep = open_out(cfg, "multi_terrain_report.txt");
  for (const auto& [name, arms] : by_arm) {
    write_arms(cfg, "multi_terrain_" + name, arms);
    double s = 0.0;
    double d = 0.0;
    for (const auto& a : arms) {
      s += a.success_pct;
      d += a.distance_pct;
    }
    const double n = static_cast<double>(arms.size());
    for (std::ostream* os : {static_cast<std::ostream*>(&rep), static_cast<std::ostream*>(&std::cout)}) {
      *os << std::left << std::setw(14) << name << std::right << " success " << std::fixed << std::setprecision(1)
          << s / n << "%  distance " << d / n << "%  failures:";
      for (auto k : cfg.kinds) *os << " " << terrainsim::to_string(k) << "=" << failures[name][k];
      *os << " other=" << other[name] << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Setup policies between pre-trained locomotion behaviors"};
  app.require_subcommand(1);
  Common common;
  std::optional<std::size_t> budget;
  auto* train_target = app.add_subcommand("train-target", "train the walk policy and target policies");
  auto* train_setup = app.add_subcommand("train-setup", "train setup policies from saved walk/target checkpoints");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate saved policies with and without the setup phase");
  auto* compare = app.add_subcommand("compare", "setup policy against the comparison arms");
  auto* ablate = app.add_subcommand("ablate", "full method vs. no initialization vs. no extended reward");
  auto* rewards = app.add_subcommand("reward-compare", "setup training under each reward variant");
  auto* multi = app.add_subcommand("multi-terrain", "shuffled multi-artifact courses with and without setup");
  for (auto* s : {train_target, train_setup, evaluate, compare, ablate, rewards, multi}) add_common(s, common);
  train_setup->add_option("--budget", budget, "setup training environment steps");
  multi->add_option_function<std::size_t>(
      "--episodes", [&](std::size_t n) { common.sets.push_back("episodes=" + std::to_string(n)); },
      "episodes per seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  try {
    if (*train_target) return cmd_train_target(common);
    if (*train_setup) return cmd_train_setup(common, budget);
    if (*evaluate) return cmd_evaluate(common);
    if (*compare) return cmd_compare(common, "compare");
    if (*ablate) return cmd_compare(common, "ablate");
    if (*rewards) return cmd_compare(common, "reward-compare");
    if (*multi) return cmd_multi_terrain(common);
  } catch (const TrainingFailure& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return kExitTrainingFailure;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
