#include "nfvs/sla.hpp"

#include <algorithm>
#include <stdexcept>

namespace nfvs::sla {

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

void validate(const SlaSpec& spec) {
  std::visit(overloaded{
                 [](const MaxThroughput& s) {
                   if (!(s.energy_cap_j > 0.0))
                     throw std::invalid_argument("energy cap must be positive");
                 },
                 [](const MinEnergy& s) {
                   if (!(s.throughput_floor_gbps > 0.0))
                     throw std::invalid_argument("throughput floor must be positive");
                   if (!(s.energy_ref_j > 0.0))
                     throw std::invalid_argument("energy reference must be positive");
                 },
                 [](const EnergyEfficiency&) {},
             },
             spec);
}

double efficiency(double throughput_gbps, double energy_j) {
  if (energy_j <= 0.0) return 0.0;
  return throughput_gbps / (energy_j / 1000.0);
}

double reward(const SlaSpec& spec, const Observations& obs) {
  const double t = total_throughput(obs);
  const double e = total_energy(obs);
  return std::visit(overloaded{
                        [&](const MaxThroughput& s) { return e <= s.energy_cap_j ? t : 0.0; },
                        [&](const MinEnergy& s) {
                          if (t < s.throughput_floor_gbps) return 0.0;
                          return std::clamp((s.energy_ref_j - e) / s.energy_ref_j, 0.0, 1.0);
                        },
                        [&](const EnergyEfficiency&) { return efficiency(t, e); },
                    },
                    spec);
}

bool is_violation(const SlaSpec& spec, const Observations& obs) {
  return std::visit(overloaded{
                        [&](const MaxThroughput& s) { return total_energy(obs) > s.energy_cap_j; },
                        [&](const MinEnergy& s) {
                          return total_throughput(obs) < s.throughput_floor_gbps;
                        },
                        [](const EnergyEfficiency&) { return false; },
                    },
                    spec);
}

double energy_saving(double e_nf, double e_train, double e_baseline) {
  const double denom = e_nf + e_train;
  if (denom == 0.0) throw std::domain_error("energy_saving: E_nf + E_t is zero");
  return (e_nf + e_train - e_baseline) / denom;
}

std::string name(const SlaSpec& spec) {
  return std::visit(overloaded{
                        [](const MaxThroughput&) { return std::string("max_throughput"); },
                        [](const MinEnergy&) { return std::string("min_energy"); },
                        [](const EnergyEfficiency&) { return std::string("energy_efficiency"); },
                    },
                    spec);
}

}  // namespace nfvs::sla
