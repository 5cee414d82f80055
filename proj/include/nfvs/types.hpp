#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace nfvs {

/// Bounds of the five per-chain resource knobs on one server.
struct KnobRanges {
  double cores_max = 16.0;
  std::vector<double> freq_levels = {1.2e9, 1.3e9, 1.4e9, 1.5e9, 1.6e9,
                                     1.7e9, 1.8e9, 1.9e9, 2.0e9, 2.1e9};
  double llc_total = 20.0 * 1024 * 1024;  // bytes
  double llc_ddio_reserved = 0.1;         // fraction of llc_total kept for DDIO
  int dma_min = 64;
  int dma_max = 16384;
  int batch_min = 1;
  int batch_max = 256;
  double line_rate = 10e9;  // bits/s, per chain

  double freq_min() const { return freq_levels.front(); }
  double freq_max() const { return freq_levels.back(); }

  /// Throws std::invalid_argument when the ranges are inconsistent.
  void validate() const;
};

/// One chain's setting of the five knobs.
struct ChainKnobs {
  double cores = 1.0;     // fractional core count
  double freq_hz = 2.1e9; // one of KnobRanges::freq_levels
  double llc_frac = 0.0;  // share of usable LLC
  int dma = 512;          // descriptors
  int batch = 32;         // packets per batch
};

/// Per-chain action vector for all chains on the server.
struct ResourceAllocation {
  std::vector<ChainKnobs> chains;

  std::size_t size() const { return chains.size(); }
  double total_cores() const;
  double total_llc() const;
};

struct FlowSpec {
  double arrival_rate = 1e6;  // packets/s
  double packet_size = 1518;  // bytes
  int chain_length = 3;       // NFs in the chain

  void validate() const;
};

/// What a controller sees about one chain after a control interval.
struct ChainObservation {
  double throughput_gbps = 0.0;
  double energy_j = 0.0;
  double cpu_util = 0.0;
  double arrival_pps = 0.0;
};

using Observations = std::vector<ChainObservation>;

double total_throughput(const Observations& obs);
double total_energy(const Observations& obs);

struct PowerParams {
  double p_idle = 100.0;
  double p_max = 250.0;
  double h = 1.4;

  void validate() const;
};

/// Constants of the throughput / cache model.
struct ModelConstants {
  double c_base = 300.0;        // cycles per NF per packet
  double kappa_miss = 4.0;      // cycle inflation per unit miss rate
  double c_call = 40000.0;      // cycles per batch invocation
  double m_min = 0.01;          // miss-rate floor
  double freq_power_exp = 2.0;  // busy-cycle weighting (f / f_max)^exp in utilization
};

struct StepOutcome {
  Observations observations;
  std::vector<double> miss_rates;
  bool sla_violated = false;
  double reward = 0.0;
};

}  // namespace nfvs
