#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nfvs/baselines.hpp"
#include "nfvs/ddpg.hpp"
#include "nfvs/replay.hpp"
#include "nfvs/simenv.hpp"

namespace nfvs {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Environment plus the per-chain knob defaults used by the static
/// baseline, EE-Pstate and benchmark sweeps.
struct Scenario {
  EnvConfig env;
  std::vector<ChainKnobs> defaults;
};

struct ReplaySettings {
  ReplayConfig buffer;
  double beta0 = 0.4;
  double beta1 = 1.0;
  int flush_every = 100;      // actor steps between local-buffer flushes
  int refresh_every = 200;    // actor steps between parameter fetches
  int evict_every = 10000;    // learner steps between evict_old calls
  double evict_keep = 0.9;
  int stats_every = 1000;     // learner steps between replay-stat rows
};

struct DdpgSettings {
  ddpg::AgentConfig agent;
  int batch_size = 64;
  int learning_starts = 1000;  // stored transitions before the first update
  double reward_scale = 1.0;   // multiplies rewards before they enter replay
};

enum class SchedulerKind { Ddpg, Heuristic, QLearning, EePstate, StaticBaseline };

SchedulerKind parse_scheduler(const std::string& name);
std::string scheduler_name(SchedulerKind kind);

struct ExperimentConfig {
  Scenario scenario;
  SchedulerKind scheduler = SchedulerKind::Ddpg;
  int num_actors = 1;
  std::int64_t total_steps = 50000;
  std::int64_t eval_every = 5000;
  std::uint64_t seed = 1;
  bool deterministic = true;
  std::filesystem::path output = "out";
  int episode_steps = 200;
  int eval_steps = 1000;           // final evaluation window
  int periodic_eval_steps = 200;   // greedy steps per periodic evaluation
  double training_energy_j = 0.0;  // E_t term of the energy-saving metric

  DdpgSettings ddpg;
  ReplaySettings replay;
  HeuristicConfig heuristic;
  QLearningConfig qlearning;
  double des_alpha = 0.5;
  double des_beta = 0.3;

  void validate() const;
};

/// Parse the INI-style scenario / experiment format. Throws ConfigError.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text of the scenario part (flows, ranges, power, model, SLA,
/// defaults), used to check that compared runs share one scenario.
std::string scenario_fingerprint(const Scenario& s);

}  // namespace nfvs
