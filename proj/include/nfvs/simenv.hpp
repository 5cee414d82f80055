#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>

#include <Eigen/Dense>

#include "nfvs/sla.hpp"
#include "nfvs/types.hpp"

namespace nfvs {

/// Number of knobs per chain in the action vector: cores, freq, llc, dma, batch.
inline constexpr int kKnobsPerChain = 5;
/// Number of observed features per chain: T, E, util, arrival.
inline constexpr int kFeaturesPerChain = 4;

struct EnvConfig {
  std::vector<FlowSpec> flows;
  KnobRanges ranges;
  PowerParams power;
  ModelConstants model;
  double dt = 1.0;  // seconds per control interval
  bool jitter = false;
  double jitter_fraction = 0.1;  // multiplicative uniform +-fraction on arrivals
  std::optional<sla::SlaSpec> sla;

  void validate() const;
  std::size_t num_chains() const { return flows.size(); }
};

/// Throws std::domain_error when `alloc` breaks KnobRanges or the shared-resource budgets.
void validate_allocation(const ResourceAllocation& alloc, const KnobRanges& ranges,
                         std::size_t num_chains);

double cache_miss_rate(const ChainKnobs& knobs, const FlowSpec& flow, const KnobRanges& ranges,
                       const ModelConstants& model = {});

double cycles_per_packet(const ChainKnobs& knobs, const FlowSpec& flow, double miss_rate,
                         const ModelConstants& model = {});

/// Packets/s the chain's cores can process, ignoring arrival and line rate.
double service_capacity(const ChainKnobs& knobs, const FlowSpec& flow, double miss_rate,
                        const ModelConstants& model = {});

/// Delivered packets/s: capacity capped by arrival rate and line rate.
double service_rate(const ChainKnobs& knobs, const FlowSpec& flow, double miss_rate,
                    const KnobRanges& ranges, const ModelConstants& model = {});

/// Nonlinear server power model P(u) = (P_max - P_idle)(2u - u^h) + P_idle.
double power(double utilization, const PowerParams& params);

/// Snap to the nearest frequency level; ties resolve to the lower level.
double snap_frequency(double hz, const KnobRanges& ranges);

/// Map a raw action in [-1, 1]^(5n) onto a valid allocation.
/// Over-subscribed cores and LLC are rescaled proportionally.
ResourceAllocation project_action(std::span<const double> raw, const KnobRanges& ranges,
                                  std::size_t num_chains);

/// Inverse of project_action for allocations that need no rescaling.
Eigen::VectorXd allocation_to_action(const ResourceAllocation& alloc, const KnobRanges& ranges);

/// Maxima used to scale each observation feature into [0, 1].
struct StateScale {
  double throughput_gbps = 10.0;
  double energy_j = 250.0;
  double arrival_pps = 20e6;

  static StateScale from(const EnvConfig& cfg);
};

Eigen::VectorXd normalize_state(const Observations& obs, const StateScale& scale);

/// Simulated server hosting one NF chain per flow.
class Environment {
 public:
  explicit Environment(EnvConfig cfg, std::uint64_t seed = 0);

  const EnvConfig& config() const { return cfg_; }
  std::size_t num_chains() const { return cfg_.num_chains(); }

  /// Reinitialize state and the jitter stream. Returns observations with zero
  /// throughput / energy / utilization and the current arrival rates.
  Observations reset(std::uint64_t seed);

  /// Apply `alloc` for one control interval. Throws std::domain_error on an
  /// invalid allocation, leaving the environment untouched.
  StepOutcome step(const ResourceAllocation& alloc);

  /// Evaluate `alloc` against the given arrival rates without touching state.
  StepOutcome evaluate(const ResourceAllocation& alloc, std::span<const double> arrivals) const;

  const std::vector<double>& current_arrivals() const { return arrivals_; }
  const Observations& last_observations() const { return last_obs_; }
  std::uint64_t steps() const { return steps_; }

 private:
  void draw_arrivals();

  EnvConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<double> arrivals_;
  Observations last_obs_;
  std::uint64_t steps_ = 0;
};

}  // namespace nfvs
