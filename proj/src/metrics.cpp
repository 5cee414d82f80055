#include "nfvs/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "nfvs/sla.hpp"

namespace nfvs {

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(var / static_cast<double>(xs.size()));
  return r;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

}  // namespace

void append_records(std::vector<StepRecord>& out, std::int64_t step, const ResourceAllocation& applied,
                    const StepOutcome& outcome) {
  for (std::size_t i = 0; i < applied.size(); ++i) {
    StepRecord r;
    r.step = step;
    r.chain_id = i;
    r.obs = outcome.observations[i];
    r.miss_rate = outcome.miss_rates[i];
    r.knobs = applied.chains[i];
    r.reward = outcome.reward;
    r.sla_violated = outcome.sla_violated;
    out.push_back(r);
  }
}

std::string step_csv_header() {
  return "step,chain_id,T_gbps,E_joules,util,miss_rate,cores,freq_hz,llc_frac,dma,batch,reward,sla_violated";
}

std::string step_csv_row(const StepRecord& r) {
  return fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{},{},{:.9g},{}", r.step, r.chain_id,
                     r.obs.throughput_gbps, r.obs.energy_j, r.obs.cpu_util, r.miss_rate, r.knobs.cores,
                     r.knobs.freq_hz, r.knobs.llc_frac, r.knobs.dma, r.knobs.batch, r.reward,
                     r.sla_violated ? 1 : 0);
}

void write_step_csv(const std::filesystem::path& path, const std::vector<StepRecord>& records) {
  auto os = open_out(path);
  os << step_csv_header() << '\n';
  for (const auto& r : records) os << step_csv_row(r) << '\n';
}

StepTotals totals_of(const StepOutcome& outcome) {
  return {total_throughput(outcome.observations), total_energy(outcome.observations), outcome.reward,
          outcome.sla_violated};
}

EvalSummary summarize(const std::vector<StepTotals>& window, int episode_steps) {
  if (episode_steps < 1) throw std::invalid_argument("episode_steps must be >= 1");
  EvalSummary s;
  s.steps = static_cast<int>(window.size());
  if (window.empty()) return s;

  std::vector<double> t, e, lam, viol;
  double sum_t = 0.0, sum_e = 0.0, sum_r = 0.0, sum_v = 0.0;
  for (std::size_t begin = 0; begin < window.size(); begin += static_cast<std::size_t>(episode_steps)) {
    const std::size_t end = std::min(window.size(), begin + static_cast<std::size_t>(episode_steps));
    double et = 0.0, ee = 0.0, ev = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      et += window[i].throughput_gbps;
      ee += window[i].energy_j;
      ev += window[i].violated ? 1.0 : 0.0;
      sum_r += window[i].reward;
    }
    const auto len = static_cast<double>(end - begin);
    t.push_back(et / len);
    e.push_back(ee / len);
    lam.push_back(sla::efficiency(et, ee));
    viol.push_back(ev / len);
    sum_t += et;
    sum_e += ee;
    sum_v += ev;
  }
  const auto n = static_cast<double>(window.size());
  s.episodes = static_cast<int>(t.size());
  s.mean_throughput = sum_t / n;
  s.std_throughput = mean_std(t).std;
  s.mean_energy = sum_e / n;
  s.std_energy = mean_std(e).std;
  s.lambda = sla::efficiency(sum_t, sum_e);
  s.std_lambda = mean_std(lam).std;
  s.violation_rate = sum_v / n;
  s.std_violation_rate = mean_std(viol).std;
  s.mean_reward = sum_r / n;
  s.total_energy = sum_e;
  return s;
}

std::string summary_csv_header() {
  return "label,step,episodes,steps,mean_T_gbps,std_T_gbps,mean_E_joules,std_E_joules,lambda,std_lambda,"
         "violation_rate,std_violation_rate,mean_reward";
}

std::string summary_csv_row(const std::string& label, std::int64_t step, const EvalSummary& s) {
  return fmt::format("{},{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}", label, step,
                     s.episodes, s.steps, s.mean_throughput, s.std_throughput, s.mean_energy, s.std_energy,
                     s.lambda, s.std_lambda, s.violation_rate, s.std_violation_rate, s.mean_reward);
}

void write_replay_stats_csv(const std::filesystem::path& path, const std::vector<ReplayStatsRow>& rows) {
  auto os = open_out(path);
  os << "learner_step,size,root_priority,evictions,flushes,stored\n";
  for (const auto& r : rows)
    os << fmt::format("{},{},{:.9g},{},{},{}\n", r.learner_step, r.stats.size, r.stats.root_priority,
                      r.stats.evictions, r.stats.flushes, r.stats.stored);
}

}  // namespace nfvs
