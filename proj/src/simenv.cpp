#include "nfvs/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/core.h>

namespace nfvs {

namespace {

constexpr double kBudgetSlack = 1e-9;

double unit_interval(double a) { return (std::clamp(a, -1.0, 1.0) + 1.0) * 0.5; }

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

bool is_frequency_level(double hz, const KnobRanges& ranges) {
  return std::any_of(ranges.freq_levels.begin(), ranges.freq_levels.end(),
                     [hz](double level) { return std::abs(level - hz) <= 1e-6 * level; });
}

}  // namespace

void KnobRanges::validate() const {
  if (!(cores_max > 0.0)) throw std::invalid_argument("cores_max must be positive");
  if (freq_levels.empty()) throw std::invalid_argument("freq_levels is empty");
  for (std::size_t i = 0; i < freq_levels.size(); ++i) {
    if (!(freq_levels[i] > 0.0)) throw std::invalid_argument("frequency levels must be positive");
    if (i > 0 && !(freq_levels[i] > freq_levels[i - 1]))
      throw std::invalid_argument("freq_levels must be strictly increasing");
  }
  if (!(llc_total > 0.0)) throw std::invalid_argument("llc_total must be positive");
  if (!(llc_ddio_reserved > 0.0 && llc_ddio_reserved < 1.0))
    throw std::invalid_argument("llc_ddio_reserved must lie in (0, 1)");
  if (dma_min < 1 || dma_max < dma_min) throw std::invalid_argument("bad dma range");
  if (batch_min < 1 || batch_max < batch_min) throw std::invalid_argument("bad batch range");
  if (!(line_rate > 0.0)) throw std::invalid_argument("line_rate must be positive");
}

double ResourceAllocation::total_cores() const {
  return std::accumulate(chains.begin(), chains.end(), 0.0,
                         [](double s, const ChainKnobs& k) { return s + k.cores; });
}

double ResourceAllocation::total_llc() const {
  return std::accumulate(chains.begin(), chains.end(), 0.0,
                         [](double s, const ChainKnobs& k) { return s + k.llc_frac; });
}

void FlowSpec::validate() const {
  if (!(arrival_rate > 0.0)) throw std::invalid_argument("arrival_rate must be positive");
  if (!(packet_size >= 64.0 && packet_size <= 1518.0))
    throw std::invalid_argument("packet_size must lie in [64, 1518]");
  if (chain_length < 1) throw std::invalid_argument("chain_length must be >= 1");
}

double total_throughput(const Observations& obs) {
  return std::accumulate(obs.begin(), obs.end(), 0.0,
                         [](double s, const ChainObservation& o) { return s + o.throughput_gbps; });
}

double total_energy(const Observations& obs) {
  return std::accumulate(obs.begin(), obs.end(), 0.0,
                         [](double s, const ChainObservation& o) { return s + o.energy_j; });
}

void PowerParams::validate() const {
  if (!(p_idle > 0.0 && p_idle < p_max)) throw std::invalid_argument("need 0 < p_idle < p_max");
  if (!(h > 1.0 && h <= 2.0)) throw std::invalid_argument("need 1 < h <= 2");
}

void EnvConfig::validate() const {
  if (flows.empty()) throw std::invalid_argument("scenario has no flows");
  for (const auto& f : flows) f.validate();
  ranges.validate();
  power.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(jitter_fraction >= 0.0 && jitter_fraction < 1.0))
    throw std::invalid_argument("jitter_fraction must lie in [0, 1)");
  if (sla) sla::validate(*sla);
}

void validate_allocation(const ResourceAllocation& alloc, const KnobRanges& ranges,
                         std::size_t num_chains) {
  if (alloc.size() != num_chains)
    throw std::domain_error(
        fmt::format("allocation has {} chains, expected {}", alloc.size(), num_chains));
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    const auto& k = alloc.chains[i];
    if (!std::isfinite(k.cores) || k.cores < 0.0 || k.cores > ranges.cores_max)
      throw std::domain_error(fmt::format("chain {}: cores {} out of range", i, k.cores));
    if (!is_frequency_level(k.freq_hz, ranges))
      throw std::domain_error(fmt::format("chain {}: {} Hz is not a frequency level", i, k.freq_hz));
    if (!std::isfinite(k.llc_frac) || k.llc_frac < 0.0 || k.llc_frac > 1.0)
      throw std::domain_error(fmt::format("chain {}: llc fraction {} out of range", i, k.llc_frac));
    if (k.dma < ranges.dma_min || k.dma > ranges.dma_max)
      throw std::domain_error(fmt::format("chain {}: dma {} out of range", i, k.dma));
    if (k.batch < ranges.batch_min || k.batch > ranges.batch_max)
      throw std::domain_error(fmt::format("chain {}: batch {} out of range", i, k.batch));
  }
  if (alloc.total_llc() > 1.0 + kBudgetSlack)
    throw std::domain_error("LLC shares sum above 1");
  if (alloc.total_cores() > ranges.cores_max * (1.0 + kBudgetSlack))
    throw std::domain_error("cores sum above cores_max");
}

double cache_miss_rate(const ChainKnobs& knobs, const FlowSpec& flow, const KnobRanges& ranges,
                       const ModelConstants& model) {
  const double usable = knobs.llc_frac * (1.0 - ranges.llc_ddio_reserved) * ranges.llc_total;
  const double working_set =
      static_cast<double>(knobs.batch) * flow.packet_size + static_cast<double>(knobs.dma) * flow.packet_size;
  if (working_set <= 0.0) return model.m_min;
  const double overflow = std::clamp(1.0 - usable / working_set, 0.0, 1.0);
  return model.m_min + (1.0 - model.m_min) * overflow;
}

double cycles_per_packet(const ChainKnobs& knobs, const FlowSpec& flow, double miss_rate,
                         const ModelConstants& model) {
  return model.c_base * flow.chain_length * (1.0 + model.kappa_miss * miss_rate) +
         model.c_call / static_cast<double>(knobs.batch);
}

double service_capacity(const ChainKnobs& knobs, const FlowSpec& flow, double miss_rate,
                        const ModelConstants& model) {
  return knobs.cores * knobs.freq_hz / cycles_per_packet(knobs, flow, miss_rate, model);
}

double service_rate(const ChainKnobs& knobs, const FlowSpec& flow, double miss_rate,
                    const KnobRanges& ranges, const ModelConstants& model) {
  const double line_pps = ranges.line_rate / (flow.packet_size * 8.0);
  return std::min({service_capacity(knobs, flow, miss_rate, model), flow.arrival_rate, line_pps});
}

double power(double utilization, const PowerParams& params) {
  if (!(utilization >= 0.0 && utilization <= 1.0))
    throw std::domain_error(fmt::format("utilization {} outside [0, 1]", utilization));
  return (params.p_max - params.p_idle) * (2.0 * utilization - std::pow(utilization, params.h)) +
         params.p_idle;
}

double snap_frequency(double hz, const KnobRanges& ranges) {
  const auto& levels = ranges.freq_levels;
  auto hi = std::lower_bound(levels.begin(), levels.end(), hz);
  if (hi == levels.begin()) return levels.front();
  if (hi == levels.end()) return levels.back();
  auto lo = std::prev(hi);
  return (hz - *lo) <= (*hi - hz) ? *lo : *hi;
}

ResourceAllocation project_action(std::span<const double> raw, const KnobRanges& ranges,
                                  std::size_t num_chains) {
  if (raw.size() != num_chains * kKnobsPerChain)
    throw std::domain_error(fmt::format("action has {} entries, expected {}", raw.size(),
                                        num_chains * kKnobsPerChain));
  for (double a : raw)
    if (!std::isfinite(a)) throw std::domain_error("non-finite action component");

  ResourceAllocation alloc;
  alloc.chains.resize(num_chains);
  for (std::size_t i = 0; i < num_chains; ++i) {
    const auto a = raw.subspan(i * kKnobsPerChain, kKnobsPerChain);
    auto& k = alloc.chains[i];
    k.cores = unit_interval(a[0]) * ranges.cores_max;
    k.freq_hz = snap_frequency(
        ranges.freq_min() + unit_interval(a[1]) * (ranges.freq_max() - ranges.freq_min()), ranges);
    k.llc_frac = unit_interval(a[2]);
    k.dma = std::clamp(
        round_half_up(ranges.dma_min + unit_interval(a[3]) * (ranges.dma_max - ranges.dma_min)),
        ranges.dma_min, ranges.dma_max);
    k.batch = std::clamp(round_half_up(ranges.batch_min +
                                       unit_interval(a[4]) * (ranges.batch_max - ranges.batch_min)),
                         ranges.batch_min, ranges.batch_max);
  }

  if (const double total = alloc.total_cores(); total > ranges.cores_max) {
    const double scale = ranges.cores_max / total;
    for (auto& k : alloc.chains) k.cores = std::min(k.cores * scale, ranges.cores_max);
  }
  if (const double total = alloc.total_llc(); total > 1.0) {
    for (auto& k : alloc.chains) k.llc_frac = std::min(k.llc_frac / total, 1.0);
  }
  return alloc;
}

Eigen::VectorXd allocation_to_action(const ResourceAllocation& alloc, const KnobRanges& ranges) {
  auto to_raw = [](double x, double lo, double hi) {
    return hi > lo ? std::clamp(2.0 * (x - lo) / (hi - lo) - 1.0, -1.0, 1.0) : -1.0;
  };
  Eigen::VectorXd a(static_cast<Eigen::Index>(alloc.size() * kKnobsPerChain));
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    const auto& k = alloc.chains[i];
    const auto base = static_cast<Eigen::Index>(i * kKnobsPerChain);
    a[base + 0] = to_raw(k.cores, 0.0, ranges.cores_max);
    a[base + 1] = to_raw(k.freq_hz, ranges.freq_min(), ranges.freq_max());
    a[base + 2] = to_raw(k.llc_frac, 0.0, 1.0);
    a[base + 3] = to_raw(k.dma, ranges.dma_min, ranges.dma_max);
    a[base + 4] = to_raw(k.batch, ranges.batch_min, ranges.batch_max);
  }
  return a;
}

StateScale StateScale::from(const EnvConfig& cfg) {
  StateScale s;
  s.throughput_gbps = cfg.ranges.line_rate / 1e9;
  s.energy_j = cfg.power.p_max * cfg.dt;
  double peak = 0.0;
  for (const auto& f : cfg.flows) peak = std::max(peak, f.arrival_rate);
  s.arrival_pps = peak * (1.0 + (cfg.jitter ? cfg.jitter_fraction : 0.0));
  return s;
}

Eigen::VectorXd normalize_state(const Observations& obs, const StateScale& scale) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(obs.size() * kFeaturesPerChain));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto base = static_cast<Eigen::Index>(i * kFeaturesPerChain);
    x[base + 0] = std::clamp(obs[i].throughput_gbps / scale.throughput_gbps, 0.0, 1.0);
    x[base + 1] = std::clamp(obs[i].energy_j / scale.energy_j, 0.0, 1.0);
    x[base + 2] = std::clamp(obs[i].cpu_util, 0.0, 1.0);
    x[base + 3] = std::clamp(obs[i].arrival_pps / scale.arrival_pps, 0.0, 1.0);
  }
  return x;
}

Environment::Environment(EnvConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  reset(seed);
}

void Environment::draw_arrivals() {
  arrivals_.resize(cfg_.flows.size());
  std::uniform_real_distribution<double> jitter(-cfg_.jitter_fraction, cfg_.jitter_fraction);
  for (std::size_t i = 0; i < cfg_.flows.size(); ++i) {
    double rate = cfg_.flows[i].arrival_rate;
    if (cfg_.jitter) rate *= 1.0 + jitter(rng_);
    arrivals_[i] = rate;
  }
}

Observations Environment::reset(std::uint64_t seed) {
  rng_.seed(seed);
  steps_ = 0;
  draw_arrivals();
  last_obs_.assign(cfg_.flows.size(), ChainObservation{});
  for (std::size_t i = 0; i < last_obs_.size(); ++i) last_obs_[i].arrival_pps = arrivals_[i];
  return last_obs_;
}

StepOutcome Environment::evaluate(const ResourceAllocation& alloc,
                                  std::span<const double> arrivals) const {
  validate_allocation(alloc, cfg_.ranges, cfg_.num_chains());
  const auto n = cfg_.num_chains();
  const auto& ranges = cfg_.ranges;
  const auto& model = cfg_.model;

  StepOutcome out;
  out.observations.resize(n);
  out.miss_rates.resize(n);

  double weighted_busy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& k = alloc.chains[i];
    FlowSpec flow = cfg_.flows[i];
    const double offered = arrivals[i];

    const double m = cache_miss_rate(k, flow, ranges, model);
    const double cpp = cycles_per_packet(k, flow, m, model);
    const double line_pps = ranges.line_rate / (flow.packet_size * 8.0);
    const double reachable = std::min(offered, line_pps);
    const double available = k.cores * k.freq_hz;
    const double delivered = std::min(reachable, available / cpp);

    double util = 0.0;
    if (available > 0.0) util = std::min(1.0, reachable * cpp / available);

    auto& o = out.observations[i];
    o.throughput_gbps = delivered * flow.packet_size * 8.0 / 1e9;
    o.cpu_util = util;
    o.arrival_pps = offered;
    out.miss_rates[i] = m;

    weighted_busy += k.cores * util * std::pow(k.freq_hz / ranges.freq_max(), model.freq_power_exp);
  }

  const double u = std::clamp(weighted_busy / ranges.cores_max, 0.0, 1.0);
  const double server_energy = power(u, cfg_.power) * cfg_.dt;
  const double core_total = alloc.total_cores();
  for (std::size_t i = 0; i < n; ++i) {
    const double share = core_total > 0.0 ? alloc.chains[i].cores / core_total
                                          : 1.0 / static_cast<double>(n);
    out.observations[i].energy_j = server_energy * share;
  }

  if (cfg_.sla) {
    out.reward = sla::reward(*cfg_.sla, out.observations);
    out.sla_violated = sla::is_violation(*cfg_.sla, out.observations);
  }
  return out;
}

StepOutcome Environment::step(const ResourceAllocation& alloc) {
  StepOutcome out = evaluate(alloc, arrivals_);
  last_obs_ = out.observations;
  ++steps_;
  draw_arrivals();
  return out;
}

}  // namespace nfvs
