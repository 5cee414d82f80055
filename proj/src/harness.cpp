#include "nfvs/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <fmt/core.h>
#include <json.hpp>

namespace nfvs {

namespace {

constexpr std::uint64_t kEvalStream = 1;
constexpr std::uint64_t kAgentStream = 2;
constexpr std::uint64_t kReplayStream = 3;
constexpr std::uint64_t kBaselineStream = 4;
constexpr std::uint64_t kActorEnvStream = 100;
constexpr std::uint64_t kActorNoiseStream = 200;

bool finite_outcome(const StepOutcome& out) {
  if (!std::isfinite(out.reward)) return false;
  for (const auto& o : out.observations)
    if (!std::isfinite(o.throughput_gbps) || !std::isfinite(o.energy_j) || !std::isfinite(o.cpu_util)) return false;
  return std::isfinite(total_energy(out.observations)) && std::isfinite(total_throughput(out.observations));
}

nlohmann::json summary_json(const EvalSummary& s) {
  return {{"episodes", s.episodes},          {"steps", s.steps},
          {"mean_T_gbps", s.mean_throughput}, {"std_T_gbps", s.std_throughput},
          {"mean_E_joules", s.mean_energy},   {"std_E_joules", s.std_energy},
          {"lambda", s.lambda},               {"std_lambda", s.std_lambda},
          {"violation_rate", s.violation_rate}, {"std_violation_rate", s.std_violation_rate},
          {"mean_reward", s.mean_reward}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void write_summaries(const std::filesystem::path& path, const RunResult& r, bool with_final) {
  std::string text = summary_csv_header() + "\n";
  for (const auto& [step, s] : r.periodic) text += summary_csv_row("periodic", step, s) + "\n";
  if (with_final) text += summary_csv_row("final", r.env_steps, r.final_summary) + "\n";
  write_text(path, text);
}

void write_run_json(const std::filesystem::path& path, const RunResult& r, const ExperimentConfig& cfg,
                    const std::string& reason = {}, std::int64_t abort_step = -1) {
  nlohmann::json j;
  j["scheduler"] = r.scheduler;
  j["status"] = r.status;
  j["seed"] = cfg.seed;
  j["deterministic"] = cfg.deterministic;
  j["num_actors"] = cfg.num_actors;
  j["total_steps"] = cfg.total_steps;
  j["env_steps"] = r.env_steps;
  j["learner_steps"] = r.learner_steps;
  j["training_energy_joules"] = r.training_energy_j;
  if (r.status == "ok") j["final"] = summary_json(r.final_summary);
  if (!reason.empty()) {
    j["reason"] = reason;
    j["abort_step"] = abort_step;
  }
  write_text(path, j.dump(2) + "\n");
}

// One NF-controller loop: its own environment, noise stream, local buffer and parameter snapshot.
struct ActorWorker {
  ActorWorker(const ExperimentConfig& cfg, std::size_t index)
      : env(cfg.scenario.env, derive_seed(cfg.seed, kActorEnvStream + index)),
        scale(StateScale::from(cfg.scenario.env)),
        rng(derive_seed(cfg.seed, kActorNoiseStream + index)),
        sigma(cfg.ddpg.agent.sigma0),
        state(normalize_state(env.last_observations(), scale)) {}

  void refresh(const ParamServer& server) { snapshot = server.fetch(); }

  void step(std::int64_t global_step, const ExperimentConfig& cfg, PrioritizedBuffer& central,
            const ParamServer& server, std::vector<StepRecord>& records) {
    const auto n = env.num_chains();
    const Eigen::VectorXd action = ddpg::policy_action(snapshot->actor, state, sigma, rng);
    const auto alloc = project_action(std::span<const double>(action.data(), static_cast<std::size_t>(action.size())),
                                      env.config().ranges, n);
    const StepOutcome out = env.step(alloc);
    if (!finite_outcome(out)) throw NumericAbort("non-finite reward or observation", global_step);
    append_records(records, global_step, alloc, out);
    energy += total_energy(out.observations);

    const double scaled = out.reward * cfg.ddpg.reward_scale;
    if (!std::isfinite(scaled)) throw NumericAbort("non-finite scaled reward", global_step);
    Eigen::VectorXd next = normalize_state(out.observations, scale);
    local.push({state, action, scaled, next, false});
    state = std::move(next);

    ++own_steps;
    if (own_steps % cfg.replay.flush_every == 0) local.flush(central);
    if (own_steps % cfg.replay.refresh_every == 0) refresh(server);
    if (own_steps % cfg.episode_steps == 0) {
      const auto& a = cfg.ddpg.agent;
      sigma = std::max(a.sigma_min, sigma * a.sigma_decay);
    }
  }

  Environment env;
  StateScale scale;
  std::mt19937_64 rng;
  double sigma;
  Eigen::VectorXd state;
  LocalBuffer local;
  std::shared_ptr<const ParamSnapshot> snapshot;
  std::int64_t own_steps = 0;
  double energy = 0.0;
};

struct Learner {
  Learner(const ExperimentConfig& cfg, ddpg::Agent& agent, PrioritizedBuffer& buffer, ParamServer& server)
      : cfg(cfg), agent(agent), buffer(buffer), server(server) {}

  bool ready() const {
    const auto need = std::max<std::size_t>(static_cast<std::size_t>(cfg.ddpg.learning_starts),
                                            static_cast<std::size_t>(cfg.ddpg.batch_size));
    return buffer.size() >= need;
  }

  // One sample -> train -> reprioritize -> publish cycle. Returns false when not enough data.
  bool step(std::int64_t env_step) {
    if (!ready()) return false;
    const double progress =
        std::min(1.0, static_cast<double>(steps) / static_cast<double>(std::max<std::int64_t>(1, cfg.total_steps)));
    const double beta = cfg.replay.beta0 + (cfg.replay.beta1 - cfg.replay.beta0) * progress;
    const Minibatch batch = buffer.sample(static_cast<std::size_t>(cfg.ddpg.batch_size), beta);
    const auto result = agent.train_step(batch);
    if (result.aborted) throw NumericAbort("non-finite critic loss or gradient", env_step);
    buffer.update_priorities(batch.slots, result.td_errors);
    server.publish(agent.actor());
    ++steps;
    if (steps % cfg.replay.evict_every == 0) buffer.evict_old(cfg.replay.evict_keep);
    if (steps % cfg.replay.stats_every == 0) stats.push_back({steps, buffer.stats()});
    return true;
  }

  const ExperimentConfig& cfg;
  ddpg::Agent& agent;
  PrioritizedBuffer& buffer;
  ParamServer& server;
  std::int64_t steps = 0;
  std::vector<ReplayStatsRow> stats;
};

void periodic_eval(const ExperimentConfig& cfg, const ddpg::Agent& agent, std::int64_t step, RunResult& result) {
  agent.save_checkpoint(cfg.output / "checkpoint");
  DdpgController controller(cfg.scenario.env, agent.actor());
  result.periodic.emplace_back(step, evaluate_controller(controller, cfg, cfg.periodic_eval_steps));
}

void train_ddpg(const ExperimentConfig& cfg, RunResult& result, std::vector<StepRecord>& records,
                std::vector<ReplayStatsRow>& stats, std::unique_ptr<Controller>& final_controller) {
  const auto n = static_cast<int>(cfg.scenario.env.num_chains());
  ddpg::Agent agent(n * kFeaturesPerChain, n * kKnobsPerChain, cfg.ddpg.agent, derive_seed(cfg.seed, kAgentStream));
  PrioritizedBuffer buffer(cfg.replay.buffer, derive_seed(cfg.seed, kReplayStream));
  ParamServer server;
  server.publish(agent.actor());

  std::vector<ActorWorker> workers;
  workers.reserve(static_cast<std::size_t>(cfg.num_actors));
  for (int k = 0; k < cfg.num_actors; ++k) {
    workers.emplace_back(cfg, static_cast<std::size_t>(k));
    workers.back().refresh(server);
  }
  Learner learner(cfg, agent, buffer, server);

  auto collect = [&] {
    result.learner_steps = learner.steps;
    stats = learner.stats;
    result.training_energy_j = 0.0;
    for (const auto& w : workers) result.training_energy_j += w.energy;
  };

  try {
    if (cfg.deterministic) {
      for (std::int64_t s = 0; s < cfg.total_steps; ++s) {
        auto& w = workers[static_cast<std::size_t>(s % cfg.num_actors)];
        w.step(s, cfg, buffer, server, records);
        result.env_steps = s + 1;
        learner.step(s);
        if ((s + 1) % cfg.eval_every == 0) periodic_eval(cfg, agent, s + 1, result);
      }
    } else {
      std::atomic<std::int64_t> next_step{0};
      std::atomic<bool> stop{false};
      std::atomic<int> running{cfg.num_actors};
      std::mutex error_mutex;
      std::exception_ptr error;
      std::vector<std::vector<StepRecord>> per_actor(workers.size());

      auto fail = [&](std::exception_ptr e) {
        std::lock_guard lock(error_mutex);
        if (!error) error = e;
        stop = true;
      };

      std::vector<std::thread> threads;
      for (std::size_t k = 0; k < workers.size(); ++k) {
        threads.emplace_back([&, k] {
          try {
            while (!stop) {
              const std::int64_t s = next_step.fetch_add(1);
              if (s >= cfg.total_steps) break;
              workers[k].step(s, cfg, buffer, server, per_actor[k]);
            }
            workers[k].local.flush(buffer);
          } catch (...) {
            fail(std::current_exception());
          }
          --running;
        });
      }
      try {
        std::int64_t next_eval = cfg.eval_every;
        while (running > 0 && !stop) {
          if (learner.steps >= cfg.total_steps || !learner.step(std::min(next_step.load(), cfg.total_steps))) {
            std::this_thread::yield();
            continue;
          }
          if (learner.steps >= next_eval) {
            periodic_eval(cfg, agent, learner.steps, result);
            next_eval += cfg.eval_every;
          }
        }
      } catch (...) {
        fail(std::current_exception());
      }
      for (auto& t : threads) t.join();

      for (auto& part : per_actor) records.insert(records.end(), part.begin(), part.end());
      std::sort(records.begin(), records.end(), [](const StepRecord& a, const StepRecord& b) {
        return a.step != b.step ? a.step < b.step : a.chain_id < b.chain_id;
      });
      result.env_steps = std::min(next_step.load(), cfg.total_steps);
      if (error) std::rethrow_exception(error);
    }
  } catch (...) {
    collect();
    throw;
  }

  collect();
  agent.save_checkpoint(cfg.output / "checkpoint");
  final_controller = std::make_unique<DdpgController>(cfg.scenario.env, agent.actor());
}

void train_baseline(const ExperimentConfig& cfg, RunResult& result, std::vector<StepRecord>& records,
                    std::unique_ptr<Controller>& final_controller) {
  auto controller = make_baseline(cfg);
  Environment env(cfg.scenario.env, derive_seed(cfg.seed, kActorEnvStream));
  std::int64_t s = 0;
  while (s < cfg.total_steps) {
    const auto chunk = std::min(cfg.eval_every - s % cfg.eval_every, cfg.total_steps - s);
    for (const auto& t : run_controller(*controller, env, static_cast<int>(chunk), s, &records))
      result.training_energy_j += t.energy_j;
    s += chunk;
    result.env_steps = s;
    if (s % cfg.eval_every == 0)
      result.periodic.emplace_back(s, evaluate_controller(*controller, cfg, cfg.periodic_eval_steps));
  }
  final_controller = std::move(controller);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t eval_seed(const ExperimentConfig& cfg) { return derive_seed(cfg.seed, kEvalStream); }

DdpgController::DdpgController(const EnvConfig& env, nn::MlpD actor)
    : ranges_(env.ranges), chains_(env.num_chains()), scale_(StateScale::from(env)), actor_(std::move(actor)) {
  if (actor_.input_size() != static_cast<int>(chains_) * kFeaturesPerChain ||
      actor_.output_size() != static_cast<int>(chains_) * kKnobsPerChain)
    throw std::invalid_argument("actor dimensions do not match the scenario");
}

ResourceAllocation DdpgController::decide(const Observations& obs) {
  const Eigen::VectorXd a = nn::forward(actor_, normalize_state(obs, scale_));
  return project_action(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())), ranges_, chains_);
}

std::unique_ptr<Controller> make_baseline(const ExperimentConfig& cfg) {
  const auto& env = cfg.scenario.env;
  switch (cfg.scheduler) {
    case SchedulerKind::Heuristic: return std::make_unique<HeuristicController>(env, cfg.heuristic);
    case SchedulerKind::QLearning:
      return std::make_unique<QLearningController>(env, cfg.qlearning, derive_seed(cfg.seed, kBaselineStream));
    case SchedulerKind::EePstate:
      return std::make_unique<EePstateController>(env, cfg.scenario.defaults, cfg.des_alpha, cfg.des_beta);
    case SchedulerKind::StaticBaseline: return std::make_unique<StaticController>(env, cfg.scenario.defaults);
    case SchedulerKind::Ddpg: break;
  }
  throw std::invalid_argument("make_baseline: ddpg is not a baseline");
}

std::vector<StepTotals> run_controller(Controller& controller, Environment& env, int steps, std::int64_t first_step,
                                       std::vector<StepRecord>* records) {
  std::vector<StepTotals> totals;
  totals.reserve(static_cast<std::size_t>(std::max(0, steps)));
  Observations obs = env.last_observations();
  for (int i = 0; i < steps; ++i) {
    const auto alloc = controller.decide(obs);
    const StepOutcome out = env.step(alloc);
    if (!finite_outcome(out)) throw NumericAbort("non-finite reward or observation", first_step + i);
    controller.feedback(obs, alloc, out);
    if (records) append_records(*records, first_step + i, alloc, out);
    totals.push_back(totals_of(out));
    obs = out.observations;
  }
  return totals;
}

EvalSummary evaluate_controller(const Controller& controller, const ExperimentConfig& cfg, int steps,
                                std::vector<StepRecord>* records) {
  auto copy = controller.clone();
  copy->set_greedy(true);
  Environment env(cfg.scenario.env, eval_seed(cfg));
  return summarize(run_controller(*copy, env, steps, 0, records), cfg.episode_steps);
}

RunResult train(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output);

  RunResult result;
  result.scheduler = scheduler_name(cfg.scheduler);
  result.output = cfg.output;

  std::vector<StepRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.total_steps) * cfg.scenario.env.num_chains());
  std::vector<ReplayStatsRow> stats;
  std::unique_ptr<Controller> final_controller;

  try {
    if (cfg.scheduler == SchedulerKind::Ddpg) {
      train_ddpg(cfg, result, records, stats, final_controller);
    } else {
      train_baseline(cfg, result, records, final_controller);
    }
  } catch (const NumericAbort& e) {
    result.status = "aborted";
    write_step_csv(cfg.output / "train_metrics.csv", records);
    write_replay_stats_csv(cfg.output / "replay_stats.csv", stats);
    write_summaries(cfg.output / "eval_summaries.csv", result, false);
    write_run_json(cfg.output / "summary.json", result, cfg, e.what(), e.step());
    throw;
  }

  write_step_csv(cfg.output / "train_metrics.csv", records);
  write_replay_stats_csv(cfg.output / "replay_stats.csv", stats);

  std::vector<StepRecord> eval_records;
  result.final_summary = evaluate_controller(*final_controller, cfg, cfg.eval_steps, &eval_records);
  write_step_csv(cfg.output / "eval_metrics.csv", eval_records);
  write_summaries(cfg.output / "eval_summaries.csv", result, true);
  write_run_json(cfg.output / "summary.json", result, cfg);
  return result;
}

EvalSummary evaluate(const std::filesystem::path& checkpoint, const ExperimentConfig& cfg, int episodes) {
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  const auto agent = ddpg::Agent::load_checkpoint(checkpoint);
  const auto n = static_cast<int>(cfg.scenario.env.num_chains());
  if (agent.state_dim() != n * kFeaturesPerChain || agent.action_dim() != n * kKnobsPerChain)
    throw std::invalid_argument(fmt::format("checkpoint expects {} state / {} action dims, scenario has {} / {}",
                                            agent.state_dim(), agent.action_dim(), n * kFeaturesPerChain,
                                            n * kKnobsPerChain));
  DdpgController controller(cfg.scenario.env, agent.actor());
  return evaluate_controller(controller, cfg, episodes * cfg.episode_steps);
}

std::vector<BenchRow> bench_sweep(const ExperimentConfig& cfg, const std::string& knob,
                                  const std::vector<double>& values, std::size_t chain) {
  const auto& env_cfg = cfg.scenario.env;
  const auto n = env_cfg.num_chains();
  if (chain >= n) throw std::invalid_argument(fmt::format("chain {} out of range (scenario has {})", chain, n));
  if (knob != "cores" && knob != "freq" && knob != "llc" && knob != "dma" && knob != "batch")
    throw std::invalid_argument("unknown knob '" + knob + "'");

  const auto& r = env_cfg.ranges;
  const Environment env(env_cfg, cfg.seed);
  std::vector<double> arrivals;
  for (const auto& f : env_cfg.flows) arrivals.push_back(f.arrival_rate);
  const ResourceAllocation base = static_allocation(env_cfg, cfg.scenario.defaults);

  auto integral = [&](double v, int lo, int hi) {
    if (v != std::floor(v) || v < lo || v > hi)
      throw std::domain_error(fmt::format("{} value {} outside [{}, {}] or not an integer", knob, v, lo, hi));
    return static_cast<int>(v);
  };

  std::vector<BenchRow> rows;
  for (double v : values) {
    ResourceAllocation alloc = base;
    auto& k = alloc.chains[chain];
    if (knob == "cores") {
      k.cores = v;
    } else if (knob == "freq") {
      k.freq_hz = v;
    } else if (knob == "llc") {
      if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error(fmt::format("llc value {} outside [0, 1]", v));
      for (std::size_t i = 0; i < n; ++i)
        alloc.chains[i].llc_frac = i == chain ? v : (1.0 - v) / static_cast<double>(n - 1);
    } else if (knob == "dma") {
      k.dma = integral(v, r.dma_min, r.dma_max);
    } else {
      k.batch = integral(v, r.batch_min, r.batch_max);
    }
    const StepOutcome out = env.evaluate(alloc, arrivals);
    rows.push_back({v, total_throughput(out.observations), total_energy(out.observations),
                    out.observations[chain].throughput_gbps, out.miss_rates[chain]});
  }
  return rows;
}

void write_bench_csv(const std::filesystem::path& path, const std::string& knob, const std::vector<BenchRow>& rows) {
  std::string text = fmt::format("{},T_gbps,E_joules,chain_T_gbps,miss_rate\n", knob);
  for (const auto& r : rows)
    text += fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.value, r.total_throughput_gbps, r.total_energy_j,
                        r.chain_throughput_gbps, r.miss_rate);
  write_text(path, text);
}

std::vector<CompareRow> compare(const std::vector<ExperimentConfig>& configs, const std::filesystem::path& out) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  const auto fingerprint = scenario_fingerprint(configs.front().scenario);
  for (const auto& c : configs) {
    if (scenario_fingerprint(c.scenario) != fingerprint) throw ConfigError("compared configs use different scenarios");
    if (c.seed != configs.front().seed) throw ConfigError("compared configs use different seeds");
  }

  const auto& ref = configs.front();
  const StaticController static_ctrl(ref.scenario.env, ref.scenario.defaults);
  const EvalSummary baseline = evaluate_controller(static_ctrl, ref, ref.eval_steps);

  std::vector<CompareRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig c = configs[i];
    c.output = out / fmt::format("{}_{}", i, scheduler_name(c.scheduler));
    const RunResult r = train(c);
    CompareRow row;
    row.label = c.output.filename().string();
    row.scheduler = r.scheduler;
    row.summary = r.final_summary;
    row.throughput_vs_static =
        baseline.mean_throughput > 0.0 ? r.final_summary.mean_throughput / baseline.mean_throughput : 0.0;
    row.lambda_vs_static = baseline.lambda > 0.0 ? r.final_summary.lambda / baseline.lambda : 0.0;
    row.energy_saving = sla::energy_saving(r.final_summary.total_energy, c.training_energy_j, baseline.total_energy);
    rows.push_back(row);
  }

  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rows[a].summary.mean_reward > rows[b].summary.mean_reward;
  });
  for (std::size_t r = 0; r < order.size(); ++r) rows[order[r]].rank = static_cast<int>(r + 1);

  write_compare_csv(out / "compare.csv", rows);
  write_text(out / "compare.txt", format_compare_table(rows));
  return rows;
}

void write_compare_csv(const std::filesystem::path& path, const std::vector<CompareRow>& rows) {
  std::string text =
      "rank,label,scheduler,mean_T_gbps,mean_E_joules,lambda,violation_rate,mean_reward,T_vs_static,"
      "lambda_vs_static,E_s,saving\n";
  for (const auto& r : rows)
    text += fmt::format("{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.rank, r.label,
                        r.scheduler, r.summary.mean_throughput, r.summary.mean_energy, r.summary.lambda,
                        r.summary.violation_rate, r.summary.mean_reward, r.throughput_vs_static, r.lambda_vs_static,
                        r.energy_saving, std::abs(r.energy_saving));
  write_text(path, text);
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::string text = fmt::format("{:>4}  {:<20} {:<16} {:>9} {:>10} {:>9} {:>6} {:>8} {:>8} {:>8}\n", "rank", "run",
                                 "scheduler", "T Gb/s", "E J", "lambda", "viol", "T/stat", "E_s", "saving");
  for (const auto& r : rows)
    text += fmt::format("{:>4}  {:<20} {:<16} {:>9.3f} {:>10.1f} {:>9.3f} {:>6.3f} {:>8.3f} {:>8.3f} {:>8.3f}\n",
                        r.rank, r.label, r.scheduler, r.summary.mean_throughput, r.summary.mean_energy,
                        r.summary.lambda, r.summary.violation_rate, r.throughput_vs_static, r.energy_saving,
                        std::abs(r.energy_saving));
  return text;
}

}  // namespace nfvs
