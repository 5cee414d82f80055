#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "nfvs/baselines.hpp"
#include "nfvs/config.hpp"
#include "nfvs/ddpg.hpp"
#include "nfvs/metrics.hpp"

namespace nfvs {

/// Non-finite reward, observation or training loss. Maps to exit code 2.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, std::int64_t step) : std::runtime_error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// Greedy controller around a trained actor network.
class DdpgController final : public Controller {
 public:
  DdpgController(const EnvConfig& env, nn::MlpD actor);
  std::string name() const override { return "ddpg"; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<DdpgController>(*this); }
  ResourceAllocation decide(const Observations& obs) override;

 private:
  KnobRanges ranges_;
  std::size_t chains_;
  StateScale scale_;
  nn::MlpD actor_;
};

/// Controller for a non-DDPG scheduler kind.
std::unique_ptr<Controller> make_baseline(const ExperimentConfig& cfg);

/// Stable per-purpose seed derived from the experiment seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seed of the environment used for every evaluation window.
std::uint64_t eval_seed(const ExperimentConfig& cfg);

/// Run `controller` for `steps` control steps starting at step label `first_step`,
/// feeding every outcome back. Appends CSV records when `records` is non-null.
std::vector<StepTotals> run_controller(Controller& controller, Environment& env, int steps,
                                       std::int64_t first_step = 0, std::vector<StepRecord>* records = nullptr);

/// Greedy evaluation of a copy of `controller` on a freshly reset evaluation environment.
EvalSummary evaluate_controller(const Controller& controller, const ExperimentConfig& cfg, int steps,
                                std::vector<StepRecord>* records = nullptr);

struct RunResult {
  std::string scheduler;
  std::string status = "ok";
  std::int64_t env_steps = 0;
  std::int64_t learner_steps = 0;
  double training_energy_j = 0.0;  // simulated energy spent while training
  EvalSummary final_summary;
  std::vector<std::pair<std::int64_t, EvalSummary>> periodic;
  std::filesystem::path output;
};

/// Train (or run, for baselines) per the config and write under cfg.output:
/// train_metrics.csv, eval_metrics.csv, eval_summaries.csv, replay_stats.csv,
/// checkpoint/ and summary.json. Throws NumericAbort after writing a
/// diagnostic summary.json when a non-finite value appears.
RunResult train(const ExperimentConfig& cfg);

/// Greedy rollout of a saved DDPG checkpoint for `episodes` episodes.
/// Throws std::invalid_argument on a checkpoint/scenario dimension mismatch.
EvalSummary evaluate(const std::filesystem::path& checkpoint, const ExperimentConfig& cfg, int episodes);

struct BenchRow {
  double value = 0.0;
  double total_throughput_gbps = 0.0;
  double total_energy_j = 0.0;
  double chain_throughput_gbps = 0.0;
  double miss_rate = 0.0;  // of the swept chain
};

/// Hold every chain at its static-baseline knobs and sweep one knob of `chain`
/// (cores | freq | llc | dma | batch) over `values` at nominal arrival rates.
/// For llc the swept chain gets the value and the others split the rest evenly.
/// Throws std::domain_error for a value outside the knob's range.
std::vector<BenchRow> bench_sweep(const ExperimentConfig& cfg, const std::string& knob,
                                  const std::vector<double>& values, std::size_t chain = 0);

void write_bench_csv(const std::filesystem::path& path, const std::string& knob, const std::vector<BenchRow>& rows);

struct CompareRow {
  std::string label;
  std::string scheduler;
  EvalSummary summary;
  double throughput_vs_static = 0.0;
  double lambda_vs_static = 0.0;
  double energy_saving = 0.0;  // literal (E_nf + E_t - E_b) / (E_nf + E_t) against the static baseline
  int rank = 0;                // by mean SLA reward, 1 = best
};

/// Train and evaluate every config on one shared scenario. Throws ConfigError
/// when scenarios or seeds differ. Each run writes into out/<index>_<scheduler>.
std::vector<CompareRow> compare(const std::vector<ExperimentConfig>& configs, const std::filesystem::path& out);

void write_compare_csv(const std::filesystem::path& path, const std::vector<CompareRow>& rows);
std::string format_compare_table(const std::vector<CompareRow>& rows);

}  // namespace nfvs
