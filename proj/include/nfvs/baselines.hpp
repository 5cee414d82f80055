#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nfvs/simenv.hpp"

namespace nfvs {

/// A scheduler attached to one environment: picks an allocation from the
/// last observations and learns (or adapts) from the step outcome.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual ResourceAllocation decide(const Observations& obs) = 0;
  virtual void feedback(const Observations& /*before*/, const ResourceAllocation& /*applied*/,
                        const StepOutcome& /*outcome*/) {}
  /// Disable exploration / learning for evaluation.
  virtual void set_greedy(bool /*greedy*/) {}
  virtual std::unique_ptr<Controller> clone() const = 0;
};

/// Performance governor (max frequency), even LLC split, default knobs otherwise.
ResourceAllocation static_allocation(const EnvConfig& env, const std::vector<ChainKnobs>& defaults);

class StaticController final : public Controller {
 public:
  StaticController(const EnvConfig& env, const std::vector<ChainKnobs>& defaults)
      : alloc_(static_allocation(env, defaults)) {}
  std::string name() const override { return "static_baseline"; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<StaticController>(*this); }
  ResourceAllocation decide(const Observations&) override { return alloc_; }

 private:
  ResourceAllocation alloc_;
};

// ---- threshold heuristic --------------------------------------------------

struct HeuristicConfig {
  double threshold1_fraction = 0.5;   // of the running best efficiency
  double threshold2_fraction = 0.75;
  std::optional<double> threshold1;   // absolute overrides, Gb/s per kJ
  std::optional<double> threshold2;
};

struct HeuristicState {
  ResourceAllocation alloc;
  std::vector<std::size_t> freq_index;
  double threshold1 = 0.0;
  double threshold2 = 0.0;
  double best_lambda = 0.0;
  HeuristicConfig cfg;
};

/// One core per chain at the lower-median frequency, batch 2, LLC in
/// proportion to arrival rate, DMA = llc_bytes / (packet_size * batch).
HeuristicState heuristic_init(const std::vector<FlowSpec>& flows, const KnobRanges& ranges,
                              HeuristicConfig cfg = {});

/// lambda = total throughput / total energy. Below threshold1 every chain
/// steps one frequency level down, otherwise one up; below threshold2 batch
/// grows by one, otherwise shrinks by one. All moves clamp at range ends.
const ResourceAllocation& heuristic_adjust(HeuristicState& state, const Observations& obs,
                                           const KnobRanges& ranges);

class HeuristicController final : public Controller {
 public:
  HeuristicController(const EnvConfig& env, HeuristicConfig cfg = {});
  std::string name() const override { return "heuristic"; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<HeuristicController>(*this); }
  ResourceAllocation decide(const Observations&) override { return state_.alloc; }
  void feedback(const Observations&, const ResourceAllocation&, const StepOutcome& out) override;
  const HeuristicState& state() const { return state_; }

 private:
  KnobRanges ranges_;
  HeuristicState state_;
};

// ---- tabular Q-learning ------------------------------------------------------

/// Dense (state, action) table with the one-step Q-learning update.
class QTable {
 public:
  QTable(std::size_t num_states, std::size_t num_actions, double learning_rate, double discount);

  std::size_t num_states() const { return states_; }
  std::size_t num_actions() const { return actions_; }
  double value(std::size_t s, std::size_t a) const { return table_[s * actions_ + a]; }
  void set(std::size_t s, std::size_t a, double v) { table_[s * actions_ + a] = v; }

  /// Q(s,a) += lr * (r + discount * max_a' Q(s',a') - Q(s,a))
  void update(std::size_t s, std::size_t a, double r, std::size_t s_next);

  /// Highest-valued action; ties go to the lowest index.
  std::size_t greedy(std::size_t s) const;
  double max_value(std::size_t s) const;

  /// Uniform random action with probability epsilon, else greedy.
  std::size_t select(std::size_t s, double epsilon, std::mt19937_64& rng) const;

 private:
  std::size_t states_, actions_;
  double lr_, discount_;
  std::vector<double> table_;
};

struct QLearningConfig {
  int action_levels = 5;  // per knob
  int state_bins = 4;     // per observed feature
  double epsilon = 0.1;
  double epsilon_decay = 0.9995;
  double learning_rate = 0.1;
  double discount = 0.9;
};

/// Raw action level j of k maps to -1 + 2j/(k-1).
double level_to_raw(int level, int levels);

/// One independent table per chain over that chain's four binned features
/// and its five discretized knobs, all trained on the shared reward.
class QLearningController final : public Controller {
 public:
  QLearningController(const EnvConfig& env, QLearningConfig cfg, std::uint64_t seed);
  std::string name() const override { return "qlearning"; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<QLearningController>(*this); }
  ResourceAllocation decide(const Observations& obs) override;
  void feedback(const Observations& before, const ResourceAllocation& applied,
                const StepOutcome& out) override;
  void set_greedy(bool greedy) override { greedy_ = greedy; }
  double epsilon() const { return epsilon_; }

 private:
  std::size_t state_index(const Observations& obs, std::size_t chain) const;

  EnvConfig env_;
  QLearningConfig cfg_;
  StateScale scale_;
  std::vector<QTable> tables_;
  std::vector<std::size_t> last_actions_;
  std::mt19937_64 rng_;
  double epsilon_;
  bool greedy_ = false;
};

// ---- EE-Pstate with double exponential smoothing ----------------------------

struct DesPredictor {
  double alpha = 0.5;
  double beta = 0.3;
  double level = 0.0;
  double trend = 0.0;
  bool primed = false;

  /// Feed one observation; returns the one-step forecast level + trend.
  double update(double x);
  double forecast() const { return level + trend; }
};

/// Update the predictor with `observed_rate` and return the lowest frequency
/// level whose service capacity at the other knobs covers the forecast
/// (the maximum level when none does).
double ee_pstate_step(DesPredictor& predictor, double observed_rate, const ChainKnobs& knobs,
                      const FlowSpec& flow, const KnobRanges& ranges, const ModelConstants& model);

class EePstateController final : public Controller {
 public:
  EePstateController(const EnvConfig& env, const std::vector<ChainKnobs>& defaults,
                     double alpha = 0.5, double beta = 0.3);
  std::string name() const override { return "ee_pstate"; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<EePstateController>(*this); }
  ResourceAllocation decide(const Observations& obs) override;

 private:
  EnvConfig env_;
  ResourceAllocation alloc_;
  std::vector<DesPredictor> predictors_;
};

}  // namespace nfvs
