#pragma once

#include <string>
#include <variant>

#include "nfvs/types.hpp"

namespace nfvs::sla {

/// Maximize total throughput while total energy per interval stays under the cap.
struct MaxThroughput {
  double energy_cap_j = 2000.0;
};

/// Minimize energy while total throughput stays at or above the floor.
struct MinEnergy {
  double throughput_floor_gbps = 7.5;
  // Reward normalizer: (e_ref - E) / e_ref, clamped to [0, 1].
  double energy_ref_j = 250.0;
};

/// Maximize throughput per unit energy; reward in Gb/s per kJ.
struct EnergyEfficiency {};

using SlaSpec = std::variant<MaxThroughput, MinEnergy, EnergyEfficiency>;

/// Throws std::invalid_argument for non-positive caps / floors / references.
void validate(const SlaSpec& spec);

double reward(const SlaSpec& spec, const Observations& obs);
bool is_violation(const SlaSpec& spec, const Observations& obs);

/// Energy efficiency in Gb/s per kJ; 0 on an idle step with zero energy.
double efficiency(double throughput_gbps, double energy_j);

/// E_s = (E_nf + E_t - E_b) / (E_nf + E_t), evaluated literally.
/// Negative when the baseline consumes more energy than the scheduler.
double energy_saving(double e_nf, double e_train, double e_baseline);

std::string name(const SlaSpec& spec);

}  // namespace nfvs::sla
