#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nfvs/replay.hpp"
#include "nfvs/types.hpp"

namespace nfvs {

/// One CSV row: a chain's knobs and outcome for one control step.
struct StepRecord {
  std::int64_t step = 0;
  std::size_t chain_id = 0;
  ChainObservation obs;
  double miss_rate = 0.0;
  ChainKnobs knobs;
  double reward = 0.0;
  bool sla_violated = false;
};

/// Append one record per chain for `step`.
void append_records(std::vector<StepRecord>& out, std::int64_t step, const ResourceAllocation& applied,
                    const StepOutcome& outcome);

std::string step_csv_header();
std::string step_csv_row(const StepRecord& r);

/// Writes `records` to `path` (header first), ordered as given.
void write_step_csv(const std::filesystem::path& path, const std::vector<StepRecord>& records);

/// Per-step totals kept for evaluation windows.
struct StepTotals {
  double throughput_gbps = 0.0;
  double energy_j = 0.0;
  double reward = 0.0;
  bool violated = false;
};

StepTotals totals_of(const StepOutcome& outcome);

/// Mean and standard deviation over episodes of an evaluation window.
struct EvalSummary {
  int episodes = 0;
  int steps = 0;
  double mean_throughput = 0.0;  // Gb/s per step
  double std_throughput = 0.0;
  double mean_energy = 0.0;      // J per step
  double std_energy = 0.0;
  double lambda = 0.0;           // sum T / sum E, Gb/s per kJ
  double std_lambda = 0.0;
  double violation_rate = 0.0;
  double std_violation_rate = 0.0;
  double mean_reward = 0.0;
  double total_energy = 0.0;     // J over the window
};

/// Splits `window` into consecutive episodes of `episode_steps` (a short tail
/// forms its own episode). Standard deviations are population values.
EvalSummary summarize(const std::vector<StepTotals>& window, int episode_steps);

std::string summary_csv_header();
std::string summary_csv_row(const std::string& label, std::int64_t step, const EvalSummary& s);

struct ReplayStatsRow {
  std::int64_t learner_step = 0;
  ReplayStats stats;
};

void write_replay_stats_csv(const std::filesystem::path& path, const std::vector<ReplayStatsRow>& rows);

}  // namespace nfvs
