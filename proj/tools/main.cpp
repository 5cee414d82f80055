#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "nfvs/harness.hpp"

namespace {

struct Options {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
  std::string checkpoint;
  int episodes = 5;
  std::string knob;
  std::vector<double> values;
  std::size_t chain = 0;
};

nfvs::ExperimentConfig load(const Options& o, const std::string& path) {
  auto cfg = nfvs::load_config(path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.deterministic) cfg.deterministic = true;
  if (!o.out.empty()) cfg.output = o.out;
  return cfg;
}

const std::string& single_config(const Options& o) {
  if (o.configs.size() != 1) throw nfvs::ConfigError("exactly one --config is required");
  return o.configs.front();
}

void print_summary(const nfvs::EvalSummary& s) {
  fmt::print("episodes={} steps={}\n", s.episodes, s.steps);
  fmt::print("mean_T_gbps={:.4f} (std {:.4f})\n", s.mean_throughput, s.std_throughput);
  fmt::print("mean_E_joules={:.2f} (std {:.2f})\n", s.mean_energy, s.std_energy);
  fmt::print("lambda={:.4f} (std {:.4f})\n", s.lambda, s.std_lambda);
  fmt::print("violation_rate={:.4f} (std {:.4f})\n", s.violation_rate, s.std_violation_rate);
}

int run_train(const Options& o) {
  const auto cfg = load(o, single_config(o));
  const auto r = nfvs::train(cfg);
  fmt::print("{} finished: {} env steps, {} learner steps, output {}\n", r.scheduler, r.env_steps, r.learner_steps,
             r.output.string());
  print_summary(r.final_summary);
  return 0;
}

int run_eval(const Options& o) {
  const auto cfg = load(o, single_config(o));
  const std::filesystem::path ckpt = o.checkpoint.empty() ? cfg.output / "checkpoint" : std::filesystem::path(o.checkpoint);
  const auto s = nfvs::evaluate(ckpt, cfg, o.episodes);
  print_summary(s);
  if (!o.out.empty()) {
    std::filesystem::create_directories(cfg.output);
    std::ofstream os(cfg.output / "eval_summary.csv");
    os << nfvs::summary_csv_header() << '\n' << nfvs::summary_csv_row("checkpoint", 0, s) << '\n';
  }
  return 0;
}

int run_bench(const Options& o) {
  const auto cfg = load(o, single_config(o));
  const auto rows = nfvs::bench_sweep(cfg, o.knob, o.values, o.chain);
  fmt::print("{:>12} {:>10} {:>10} {:>10} {:>10}\n", o.knob, "T Gb/s", "E J", "chain T", "miss");
  for (const auto& r : rows)
    fmt::print("{:>12.6g} {:>10.4f} {:>10.2f} {:>10.4f} {:>10.4f}\n", r.value, r.total_throughput_gbps,
               r.total_energy_j, r.chain_throughput_gbps, r.miss_rate);
  if (!o.out.empty()) nfvs::write_bench_csv(std::filesystem::path(o.out) / ("bench_" + o.knob + ".csv"), o.knob, rows);
  return 0;
}

int run_compare(const Options& o) {
  if (o.configs.empty()) throw nfvs::ConfigError("compare needs at least one --config");
  std::vector<nfvs::ExperimentConfig> cfgs;
  for (const auto& path : o.configs) cfgs.push_back(load(o, path));
  const std::filesystem::path out = o.out.empty() ? std::filesystem::path("compare_out") : std::filesystem::path(o.out);
  const auto rows = nfvs::compare(cfgs, out);
  std::cout << nfvs::format_compare_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-aware NF chain scheduler"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub, bool many_configs) {
    if (many_configs)
      sub->add_option("--config", o.configs, "Experiment config (repeat for each scheduler)")->required();
    else
      sub->add_option("--config", o.configs, "Experiment config")->required()->expected(1);
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_flag("--deterministic", o.deterministic, "Single-threaded round-robin actors and learner");
    sub->add_option("--out", o.out, "Output directory");
  };

  auto* train = app.add_subcommand("train", "Train a scheduler and evaluate it greedily");
  common(train, false);
  auto* eval = app.add_subcommand("eval", "Evaluate a saved DDPG checkpoint");
  common(eval, false);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint directory (default <output>/checkpoint)");
  eval->add_option("--episodes", o.episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  auto* bench = app.add_subcommand("bench", "Sweep one knob with the others at their defaults");
  common(bench, false);
  bench->add_option("--knob", o.knob, "cores | freq | llc | dma | batch")
      ->required()
      ->check(CLI::IsMember({"cores", "freq", "llc", "dma", "batch"}));
  bench->add_option("--values", o.values, "Comma-separated knob values")->required()->delimiter(',');
  bench->add_option("--chain", o.chain, "Chain whose knob is swept");
  auto* cmp = app.add_subcommand("compare", "Train and rank several schedulers on one scenario");
  common(cmp, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*bench) return run_bench(o);
    return run_compare(o);
  } catch (const nfvs::NumericAbort& e) {
    fmt::print(stderr, "numeric abort at step {}: {}\n", e.step(), e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}
