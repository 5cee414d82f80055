// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/core.h>

#include "nfvs/config.hpp"
#include "nfvs/ddpg.hpp"
#include "nfvs/harness.hpp"
#include "nfvs/replay.hpp"
#include "oracles.hpp"

using namespace nfvs;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int n, const std::string& title, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!v.pass) ++failures;
  std::cout << fmt::format("{} criterion {}: {} ({}; {:.1f} s)", v.pass ? "PASS" : "FAIL", n, title, v.detail, secs)
            << std::endl;
}

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "nfvs_acceptance";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig acceptance_config(const std::string& name) {
  auto cfg = load_config(fs::path(NFVS_CONFIG_DIR) / name);
  cfg.deterministic = true;
  return cfg;
}

struct Baselines {
  EvalSummary ddpg, stat, heuristic;
};

Baselines run_scenario(const std::string& name) {
  auto cfg = acceptance_config(name + ".ini");
  Baselines b;
  cfg.output = work_dir() / (name + "_ddpg");
  b.ddpg = train(cfg).final_summary;

  auto st = cfg;
  st.scheduler = SchedulerKind::StaticBaseline;
  b.stat = evaluate_controller(*make_baseline(st), st, st.eval_steps);

  auto he = cfg;
  he.scheduler = SchedulerKind::Heuristic;
  he.output = work_dir() / (name + "_heuristic");
  b.heuristic = train(he).final_summary;
  return b;
}

Verdict gradient_check() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<int> depth(0, 3), width(1, 16);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<int> sizes{width(rng)};
    const int hidden = depth(rng);
    for (int i = 0; i < hidden; ++i) sizes.push_back(width(rng));
    sizes.push_back(width(rng));
    const auto net = nn::MlpD::random(sizes, t % 2 ? nn::OutputActivation::Tanh : nn::OutputActivation::Identity, rng);
    Eigen::MatrixXd x(net.input_size(), 1 + t % 4), g(net.output_size(), 1 + t % 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n01(rng);
    const auto grads = nn::backward(net, x, g);
    const Eigen::VectorXd fd = oracle::fd_param_gradient(net, x, g);
    for (Eigen::Index i = 0; i < fd.size(); ++i) worst = std::max(worst, oracle::rel_error(grads.params[i], fd[i]));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-4 && secs < 60.0, fmt::format("max rel err {:.3g}, {:.2f} s", worst, secs)};
}

Verdict policy_gradient_check() {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.5, 2.0);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int ds = 2 + t % 4, da = 1 + t % 3;
    const auto actor = nn::MlpD::random({ds, 8, 8, da}, nn::OutputActivation::Tanh, rng);
    oracle::QuadraticCritic q{Eigen::MatrixXd(da, ds), Eigen::VectorXd(da), Eigen::VectorXd(da)};
    for (Eigen::Index i = 0; i < q.m.size(); ++i) q.m.data()[i] = 0.5 * u(rng);
    for (Eigen::Index i = 0; i < da; ++i) {
      q.d[i] = pos(rng);
      q.c[i] = 0.2 * u(rng);
    }
    const Eigen::MatrixXd states = Eigen::MatrixXd::Random(ds, 16);
    const Eigen::VectorXd grad = ddpg::policy_gradient(
        actor, states, [&](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) { return q.action_gradient(s, a); });
    const Eigen::VectorXd fd = oracle::fd_objective_gradient(actor, states, q);
    for (Eigen::Index i = 0; i < fd.size(); ++i) worst = std::max(worst, oracle::rel_error(grad[i], fd[i]));
  }
  return {worst < 1e-4, fmt::format("max rel err {:.3g} over 20 actors", worst)};
}

Verdict power_check() {
  bool ok = true;
  for (double h : {1.1, 1.4, 2.0}) {
    PowerParams p;
    p.h = h;
    ok = ok && power(0.0, p) == p.p_idle && power(1.0, p) == p.p_max;
    double prev = power(0.0, p);
    for (int i = 1; i <= 1000; ++i) {
      const double cur = power(i / 1000.0, p);
      ok = ok && cur > prev;
      prev = cur;
    }
  }
  return {ok, "endpoints exact, strictly increasing for h in {1.1, 1.4, 2.0}"};
}

Verdict replay_check() {
  ReplayConfig rc;
  rc.capacity = 4;
  rc.alpha = 1.0;
  PrioritizedBuffer buf(rc, 2);
  auto tagged = [](double tag) {
    Transition t;
    t.state = Eigen::VectorXd::Constant(2, tag);
    t.action = Eigen::VectorXd::Constant(1, tag);
    t.reward = tag;
    t.next_state = t.state;
    return t;
  };
  for (int i = 0; i < 4; ++i) buf.store(tagged(i));
  for (int i = 0; i < 4; ++i) buf.set_priority(buf.slot_of_age(static_cast<std::size_t>(i)), i + 1.0);
  constexpr int kDraws = 100000;
  std::vector<double> freq(4, 0.0);
  for (int i = 0; i < kDraws; ++i) freq[buf.sample(1, 1.0).slots[0].index] += 1.0 / kDraws;
  double dev = 0.0;
  for (int i = 0; i < 4; ++i)
    dev = std::max(dev, std::abs(freq[buf.slot_of_age(static_cast<std::size_t>(i)).index] - 0.1 * (i + 1)));

  rc.alpha = 0.0;
  PrioritizedBuffer flat(rc, 3);
  for (int i = 0; i < 4; ++i) flat.store(tagged(i));
  for (int i = 0; i < 4; ++i) flat.set_priority(flat.slot_of_age(static_cast<std::size_t>(i)), (i + 1) * 10.0);
  std::vector<double> counts(4, 0.0);
  for (int i = 0; i < kDraws; ++i) counts[flat.sample(1, 1.0).slots[0].index] += 1.0;
  double stat = 0.0;
  for (double c : counts) stat += std::pow(c - kDraws / 4.0, 2) / (kDraws / 4.0);
  const double p = boost::math::gamma_q(1.5, stat / 2.0);

  rc.capacity = 64;
  rc.alpha = 0.6;
  PrioritizedBuffer fuzz(rc, 9);
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> op(0, 9);
  std::uniform_real_distribution<double> pr(0.0, 10.0), keep(0.3, 1.0);
  std::vector<SlotRef> last;
  double worst = 0.0, tag = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const int o = op(rng);
    if (o < 4) {
      fuzz.store(tagged(tag++));
    } else if (o < 6 && fuzz.size() >= 4) {
      last = fuzz.sample(4, 0.5).slots;
    } else if (o == 7 && !last.empty()) {
      Eigen::VectorXd td(static_cast<Eigen::Index>(last.size()));
      for (auto& x : td) x = pr(rng);
      fuzz.update_priorities(last, td);
    } else if (o == 8 && i % 50 == 0) {
      fuzz.evict_old(keep(rng));
    } else if (o == 9 && fuzz.size() > 0) {
      fuzz.set_priority(fuzz.slot_of_age(0), pr(rng) + 1e-3);
    }
    worst = std::max(worst, std::abs(fuzz.root() - fuzz.leaf_sum()) / std::max(1e-300, fuzz.leaf_sum()));
  }
  return {dev <= 0.02 && p > 0.01 && worst <= 1e-9,
          fmt::format("max freq dev {:.4f}, uniform p {:.3f}, tree rel err {:.2g}", dev, p, worst)};
}

Verdict simulator_shapes() {
  const auto two = load_config(fs::path(NFVS_CONFIG_DIR) / "two_chain_llc.ini");
  const auto split = bench_sweep(two, "llc", {0.9, 0.7, 0.4, 0.2}, 0);
  bool llc = true;
  for (std::size_t i = 1; i < split.size(); ++i) llc = llc && split[0].total_energy_j < split[i].total_energy_j;

  bool freq = true;
  const auto fr = bench_sweep(two, "freq", two.scenario.env.ranges.freq_levels, 1);
  for (std::size_t i = 1; i < fr.size(); ++i) freq = freq && fr[i].chain_throughput_gbps >= fr[i - 1].chain_throughput_gbps;

  EnvConfig one;
  FlowSpec f;
  f.arrival_rate = 20e6;
  f.packet_size = 512;
  one.flows = {f};
  one.sla = sla::EnergyEfficiency{};
  Environment env(one, 0);
  std::vector<double> t;
  for (int b = 1; b <= 256; ++b) {
    ResourceAllocation a;
    ChainKnobs k;
    k.cores = 1.0;
    k.freq_hz = 2.1e9;
    k.llc_frac = 0.01;
    k.dma = 512;
    k.batch = b;
    a.chains = {k};
    t.push_back(env.step(a).observations[0].throughput_gbps);
  }
  int peaks = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if ((i == 0 || t[i] > t[i - 1]) && (i + 1 == t.size() || t[i] >= t[i + 1])) ++peaks;

  bool capped = true;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pps(1e4, 2e7), pkt(64, 1518);
  const KnobRanges r;
  for (int trial = 0; trial < 500; ++trial) {
    EnvConfig cfg;
    for (int i = 0; i < 3; ++i) {
      FlowSpec g;
      g.arrival_rate = pps(rng);
      g.packet_size = pkt(rng);
      cfg.flows.push_back(g);
    }
    cfg.jitter = true;
    Environment e(cfg, static_cast<std::uint64_t>(trial));
    std::vector<double> raw(15);
    for (auto& x : raw) x = u(rng);
    const auto arrivals = e.current_arrivals();
    const auto out = e.step(project_action(raw, r, 3));
    for (std::size_t i = 0; i < 3; ++i) {
      const double cap = std::min(arrivals[i] * cfg.flows[i].packet_size * 8 / 1e9, r.line_rate / 1e9);
      capped = capped && out.observations[i].throughput_gbps <= cap * (1 + 1e-12);
    }
  }
  return {llc && freq && peaks == 1 && capped,
          fmt::format("90/10 energy {:.1f} J vs {:.1f}/{:.1f}/{:.1f}; freq monotone {}; batch peaks {}; capped {}",
                      split[0].total_energy_j, split[1].total_energy_j, split[2].total_energy_j,
                      split[3].total_energy_j, freq, peaks, capped)};
}

Verdict baseline_oracles() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> nflows(1, 5), fidx(0, 9), bat(1, 256), steps(1, 20);
  std::uniform_real_distribution<double> tput(0.0, 20.0), energy(0.0, 3000.0), frac(0.1, 0.9);
  const KnobRanges r;
  int matched = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = nflows(rng);
    std::vector<FlowSpec> flows(static_cast<std::size_t>(n));
    for (auto& f : flows) {
      f.arrival_rate = 1e6;
      f.packet_size = 512;
    }
    HeuristicConfig hc;
    hc.threshold1_fraction = frac(rng);
    hc.threshold2_fraction = frac(rng);
    auto st = heuristic_init(flows, r, hc);
    oracle::Alg1 ref;
    for (std::size_t i = 0; i < flows.size(); ++i) {
      st.freq_index[i] = static_cast<std::size_t>(fidx(rng));
      st.alloc.chains[i].batch = bat(rng);
      ref.freq_idx.push_back(static_cast<int>(st.freq_index[i]));
      ref.batch.push_back(st.alloc.chains[i].batch);
    }
    bool same = true;
    const int k = steps(rng);
    for (int s = 0; s < k; ++s) {
      Observations obs(flows.size());
      double tt = 0.0, ee = 0.0;
      for (auto& o : obs) {
        o.throughput_gbps = tput(rng) / n;
        o.energy_j = energy(rng) / n;
        tt += o.throughput_gbps;
        ee += o.energy_j;
      }
      heuristic_adjust(st, obs, r);
      oracle::alg1_periodic(ref, tt, ee, hc.threshold1_fraction, hc.threshold2_fraction,
                            static_cast<int>(r.freq_levels.size()), r.batch_min, r.batch_max);
      for (std::size_t i = 0; i < flows.size(); ++i)
        same = same && static_cast<int>(st.freq_index[i]) == ref.freq_idx[i] && st.alloc.chains[i].batch == ref.batch[i];
      same = same && st.best_lambda == ref.best;
    }
    if (same) ++matched;
  }
  const oracle::ToyEnv toy;
  const auto best = toy.brute_force_best();
  const auto learned = oracle::train_toy_q(toy, 5);
  return {matched == 100 && learned == best,
          fmt::format("heuristic matched {}/100; q greedy {} vs brute force {}", matched, learned, best)};
}

Verdict reproducibility() {
  auto a = acceptance_config("acceptance_maxth.ini");
  a.total_steps = 3000;
  a.eval_every = 1000;
  a.output = work_dir() / "repro_a";
  auto b = a;
  b.output = work_dir() / "repro_b";
  fs::remove_all(a.output);
  fs::remove_all(b.output);
  train(a);
  train(b);
  bool same = true;
  for (const char* f : {"train_metrics.csv", "eval_metrics.csv", "eval_summaries.csv", "replay_stats.csv"}) {
    const auto x = slurp(a.output / f);
    same = same && !x.empty() && x == slurp(b.output / f);
  }
  const auto agent = ddpg::Agent::load_checkpoint(a.output / "checkpoint");
  const auto tmp = work_dir() / "repro_ckpt";
  fs::remove_all(tmp);
  agent.save_checkpoint(tmp);
  const auto back = ddpg::Agent::load_checkpoint(tmp);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(agent.state_dim(), 64);
  const Eigen::MatrixXd ya = nn::forward(agent.actor(), x), yb = nn::forward(back.actor(), x);
  const Eigen::MatrixXd qa = nn::forward(agent.critic(), Eigen::MatrixXd::Random(agent.critic().input_size(), 8));
  const bool exact = std::memcmp(ya.data(), yb.data(), sizeof(double) * static_cast<std::size_t>(ya.size())) == 0 &&
                     back.critic().params() == agent.critic().params() && qa.allFinite();
  return {same && exact, fmt::format("csv identical {}; forward bit-exact {}", same, exact)};
}

}  // namespace

int main() {
  report(1, "gradient correctness", gradient_check);
  report(2, "actor policy gradient", policy_gradient_check);
  report(3, "power model", power_check);
  report(4, "prioritized sampling", replay_check);
  report(5, "simulator shapes", simulator_shapes);
  report(6, "baseline oracles", baseline_oracles);
  report(7, "max-throughput SLA end to end", [] {
    const auto b = run_scenario("acceptance_maxth");
    const double vs_static = b.ddpg.mean_throughput / b.stat.mean_throughput;
    const double vs_heur = b.ddpg.mean_throughput / b.heuristic.mean_throughput;
    return Verdict{b.ddpg.violation_rate < 0.05 && vs_static >= 1.5 && vs_heur >= 1.1,
                   fmt::format("violations {:.3f}, T {:.2f} Gb/s = {:.2f}x static, {:.2f}x heuristic",
                               b.ddpg.violation_rate, b.ddpg.mean_throughput, vs_static, vs_heur)};
  });
  report(8, "min-energy SLA end to end", [] {
    const auto b = run_scenario("acceptance_mine");
    const double met = 1.0 - b.ddpg.violation_rate;
    const double e_ratio = b.ddpg.mean_energy / b.heuristic.mean_energy;
    const bool tput = b.ddpg.mean_throughput >= b.heuristic.mean_throughput;
    return Verdict{met >= 0.95 && e_ratio <= 0.8 && tput,
                   fmt::format("floor met {:.3f}, E {:.1f} J = {:.3f}x heuristic, T {:.2f} vs {:.2f} Gb/s", met,
                               b.ddpg.mean_energy, e_ratio, b.ddpg.mean_throughput, b.heuristic.mean_throughput)};
  });
  report(9, "energy-efficiency SLA end to end", [] {
    auto cfg = acceptance_config("acceptance_ee.ini");
    cfg.output = work_dir() / "acceptance_ee_ddpg";
    const auto ddpg = train(cfg).final_summary;
    auto st = cfg;
    st.scheduler = SchedulerKind::StaticBaseline;
    const auto stat = evaluate_controller(*make_baseline(st), st, st.eval_steps);
    const double ratio = ddpg.lambda / stat.lambda;
    return Verdict{ratio >= 1.3, fmt::format("lambda {:.3f} vs static {:.3f} = {:.2f}x", ddpg.lambda, stat.lambda, ratio)};
  });
  report(10, "reproducibility", reproducibility);
  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
