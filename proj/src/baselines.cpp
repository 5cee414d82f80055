#include "nfvs/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nfvs {

ResourceAllocation static_allocation(const EnvConfig& env, const std::vector<ChainKnobs>& defaults) {
  const auto n = env.num_chains();
  if (defaults.size() != n) throw std::invalid_argument("need one default knob set per chain");
  ResourceAllocation alloc;
  alloc.chains = defaults;
  for (auto& k : alloc.chains) {
    k.freq_hz = env.ranges.freq_max();
    k.llc_frac = 1.0 / static_cast<double>(n);
  }
  validate_allocation(alloc, env.ranges, n);
  return alloc;
}

// ---- heuristic ----------------------------------------------------------------

HeuristicState heuristic_init(const std::vector<FlowSpec>& flows, const KnobRanges& ranges,
                              HeuristicConfig cfg) {
  if (flows.empty()) throw std::invalid_argument("heuristic_init: no flows");
  const auto n = flows.size();
  HeuristicState st;
  st.cfg = cfg;
  st.alloc.chains.resize(n);
  st.freq_index.assign(n, (ranges.freq_levels.size() - 1) / 2);

  const double rate_sum = std::accumulate(flows.begin(), flows.end(), 0.0,
                                          [](double s, const FlowSpec& f) { return s + f.arrival_rate; });
  const double usable_llc = (1.0 - ranges.llc_ddio_reserved) * ranges.llc_total;
  const double cores = std::min(1.0, ranges.cores_max / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    auto& k = st.alloc.chains[i];
    k.cores = cores;
    k.freq_hz = ranges.freq_levels[st.freq_index[i]];
    k.batch = std::clamp(2, ranges.batch_min, ranges.batch_max);
    k.llc_frac = flows[i].arrival_rate / rate_sum;
    const double llc_bytes = k.llc_frac * usable_llc;
    const double dma = std::floor(llc_bytes / (flows[i].packet_size * k.batch));
    k.dma = static_cast<int>(std::clamp(dma, static_cast<double>(ranges.dma_min),
                                        static_cast<double>(ranges.dma_max)));
  }
  st.threshold1 = cfg.threshold1.value_or(0.0);
  st.threshold2 = cfg.threshold2.value_or(0.0);
  return st;
}

const ResourceAllocation& heuristic_adjust(HeuristicState& st, const Observations& obs,
                                           const KnobRanges& ranges) {
  const double lambda = sla::efficiency(total_throughput(obs), total_energy(obs));
  st.best_lambda = std::max(st.best_lambda, lambda);
  st.threshold1 = st.cfg.threshold1.value_or(st.cfg.threshold1_fraction * st.best_lambda);
  st.threshold2 = st.cfg.threshold2.value_or(st.cfg.threshold2_fraction * st.best_lambda);

  const std::size_t top = ranges.freq_levels.size() - 1;
  for (std::size_t i = 0; i < st.alloc.size(); ++i) {
    auto& k = st.alloc.chains[i];
    auto& fi = st.freq_index[i];
    if (lambda < st.threshold1) {
      if (fi > 0) --fi;
    } else if (fi < top) {
      ++fi;
    }
    k.freq_hz = ranges.freq_levels[fi];

    if (lambda < st.threshold2) {
      k.batch = std::min(k.batch + 1, ranges.batch_max);
    } else {
      k.batch = std::max(k.batch - 1, ranges.batch_min);
    }
  }
  return st.alloc;
}

HeuristicController::HeuristicController(const EnvConfig& env, HeuristicConfig cfg)
    : ranges_(env.ranges), state_(heuristic_init(env.flows, env.ranges, cfg)) {}

void HeuristicController::feedback(const Observations&, const ResourceAllocation&, const StepOutcome& out) {
  heuristic_adjust(state_, out.observations, ranges_);
}

// ---- Q-learning ---------------------------------------------------------------

QTable::QTable(std::size_t num_states, std::size_t num_actions, double learning_rate, double discount)
    : states_(num_states), actions_(num_actions), lr_(learning_rate), discount_(discount),
      table_(num_states * num_actions, 0.0) {
  if (num_states == 0 || num_actions == 0) throw std::invalid_argument("QTable needs states and actions");
  if (learning_rate < 0.0 || learning_rate > 1.0) throw std::invalid_argument("learning rate outside [0, 1]");
  if (discount < 0.0 || discount > 1.0) throw std::invalid_argument("discount outside [0, 1]");
}

double QTable::max_value(std::size_t s) const {
  const auto row = table_.begin() + static_cast<std::ptrdiff_t>(s * actions_);
  return *std::max_element(row, row + static_cast<std::ptrdiff_t>(actions_));
}

std::size_t QTable::greedy(std::size_t s) const {
  const auto row = table_.begin() + static_cast<std::ptrdiff_t>(s * actions_);
  return static_cast<std::size_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(actions_)) - row);
}

void QTable::update(std::size_t s, std::size_t a, double r, std::size_t s_next) {
  if (s >= states_ || s_next >= states_ || a >= actions_) throw std::out_of_range("QTable index");
  double& q = table_[s * actions_ + a];
  q += lr_ * (r + discount_ * max_value(s_next) - q);
}

std::size_t QTable::select(std::size_t s, double epsilon, std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, actions_ - 1);
    return pick(rng);
  }
  return greedy(s);
}

double level_to_raw(int level, int levels) {
  if (levels < 2) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(level) / static_cast<double>(levels - 1);
}

namespace {
std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}
}  // namespace

QLearningController::QLearningController(const EnvConfig& env, QLearningConfig cfg, std::uint64_t seed)
    : env_(env), cfg_(cfg), scale_(StateScale::from(env)), rng_(seed), epsilon_(cfg.epsilon) {
  if (cfg_.action_levels < 2 || cfg_.state_bins < 1) throw std::invalid_argument("bad Q-learning discretization");
  const auto states = ipow(static_cast<std::size_t>(cfg_.state_bins), kFeaturesPerChain);
  const auto actions = ipow(static_cast<std::size_t>(cfg_.action_levels), kKnobsPerChain);
  tables_.assign(env_.num_chains(), QTable(states, actions, cfg_.learning_rate, cfg_.discount));
  last_actions_.assign(env_.num_chains(), 0);
}

std::size_t QLearningController::state_index(const Observations& obs, std::size_t chain) const {
  const Eigen::VectorXd x = normalize_state(obs, scale_);
  std::size_t idx = 0;
  for (int f = 0; f < kFeaturesPerChain; ++f) {
    const double v = x[static_cast<Eigen::Index>(chain * kFeaturesPerChain + f)];
    const int bin = std::min(cfg_.state_bins - 1, static_cast<int>(v * cfg_.state_bins));
    idx = idx * static_cast<std::size_t>(cfg_.state_bins) + static_cast<std::size_t>(bin);
  }
  return idx;
}

ResourceAllocation QLearningController::decide(const Observations& obs) {
  const auto n = env_.num_chains();
  std::vector<double> raw(n * kKnobsPerChain);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = state_index(obs, i);
    const auto a = tables_[i].select(s, greedy_ ? 0.0 : epsilon_, rng_);
    last_actions_[i] = a;
    auto code = a;
    for (int k = kKnobsPerChain - 1; k >= 0; --k) {
      const int level = static_cast<int>(code % static_cast<std::size_t>(cfg_.action_levels));
      code /= static_cast<std::size_t>(cfg_.action_levels);
      raw[i * kKnobsPerChain + static_cast<std::size_t>(k)] = level_to_raw(level, cfg_.action_levels);
    }
  }
  return project_action(raw, env_.ranges, n);
}

void QLearningController::feedback(const Observations& before, const ResourceAllocation&,
                                   const StepOutcome& out) {
  if (greedy_) return;
  for (std::size_t i = 0; i < env_.num_chains(); ++i)
    tables_[i].update(state_index(before, i), last_actions_[i], out.reward, state_index(out.observations, i));
  epsilon_ *= cfg_.epsilon_decay;
}

// ---- EE-Pstate ------------------------------------------------------------------

double DesPredictor::update(double x) {
  if (!primed) {
    level = x;
    trend = 0.0;
    primed = true;
    return forecast();
  }
  const double prev = level;
  level = alpha * x + (1.0 - alpha) * (level + trend);
  trend = beta * (level - prev) + (1.0 - beta) * trend;
  return forecast();
}

double ee_pstate_step(DesPredictor& predictor, double observed_rate, const ChainKnobs& knobs,
                      const FlowSpec& flow, const KnobRanges& ranges, const ModelConstants& model) {
  if (observed_rate < 0.0) throw std::invalid_argument("observed rate must be >= 0");
  const double target = predictor.update(observed_rate);
  const double m = cache_miss_rate(knobs, flow, ranges, model);
  for (double level : ranges.freq_levels) {
    ChainKnobs trial = knobs;
    trial.freq_hz = level;
    if (service_capacity(trial, flow, m, model) >= target) return level;
  }
  return ranges.freq_max();
}

EePstateController::EePstateController(const EnvConfig& env, const std::vector<ChainKnobs>& defaults,
                                       double alpha, double beta)
    : env_(env), alloc_(static_allocation(env, defaults)), predictors_(env.num_chains()) {
  for (auto& p : predictors_) {
    p.alpha = alpha;
    p.beta = beta;
  }
}

ResourceAllocation EePstateController::decide(const Observations& obs) {
  for (std::size_t i = 0; i < alloc_.size(); ++i) {
    alloc_.chains[i].freq_hz = ee_pstate_step(predictors_[i], obs[i].arrival_pps, alloc_.chains[i],
                                              env_.flows[i], env_.ranges, env_.model);
  }
  return alloc_;
}

}  // namespace nfvs
