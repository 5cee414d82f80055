#include "nfvs/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/core.h>
#include <fmt/ranges.h>

namespace nfvs {

namespace pt = boost::property_tree;

namespace {

class Section {
 public:
  Section(std::string name, const pt::ptree* tree, std::set<std::string> allowed)
      : name_(std::move(name)), tree_(tree), allowed_(std::move(allowed)) {
    if (!tree_) return;
    for (const auto& [key, _] : *tree_)
      if (!allowed_.count(key)) throw ConfigError(fmt::format("[{}]: unknown key '{}'", name_, key));
  }

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    const auto text = tree_->get<std::string>(pt::ptree::path_type(key, '\0'));
    if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
      if (text == "false" || text == "0" || text == "no" || text == "off") return false;
      throw ConfigError(fmt::format("[{}] {}: expected a boolean, got '{}'", name_, key, text));
    } else if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else {
      std::istringstream is(text);
      double v;
      is >> v;
      if (!is || !(is >> std::ws).eof())
        throw ConfigError(fmt::format("[{}] {}: expected a number, got '{}'", name_, key, text));
      if constexpr (std::is_integral_v<T>) {
        if (v != static_cast<double>(static_cast<T>(v)))
          throw ConfigError(fmt::format("[{}] {}: expected an integer, got '{}'", name_, key, text));
      }
      return static_cast<T>(v);
    }
  }

  std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    std::string text = get<std::string>(key, "");
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream is(text);
    double v;
    while (is >> v) out.push_back(v);
    if (!(is >> std::ws).eof()) throw ConfigError(fmt::format("[{}] {}: bad number list", name_, key));
    return out;
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> allowed_;
};

const pt::ptree* child(const pt::ptree& root, const std::string& name) {
  auto it = root.find(name);
  return it == root.not_found() ? nullptr : &it->second;
}

std::vector<int> to_ints(const std::vector<double>& v) {
  std::vector<int> out;
  for (double x : v) out.push_back(static_cast<int>(x));
  return out;
}

}  // namespace

SchedulerKind parse_scheduler(const std::string& name) {
  if (name == "ddpg") return SchedulerKind::Ddpg;
  if (name == "heuristic") return SchedulerKind::Heuristic;
  if (name == "qlearning") return SchedulerKind::QLearning;
  if (name == "ee_pstate") return SchedulerKind::EePstate;
  if (name == "static_baseline" || name == "static") return SchedulerKind::StaticBaseline;
  throw ConfigError("unknown scheduler '" + name + "'");
}

std::string scheduler_name(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::Ddpg: return "ddpg";
    case SchedulerKind::Heuristic: return "heuristic";
    case SchedulerKind::QLearning: return "qlearning";
    case SchedulerKind::EePstate: return "ee_pstate";
    case SchedulerKind::StaticBaseline: return "static_baseline";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  try {
    scenario.env.validate();
    ddpg.agent.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (scenario.defaults.size() != scenario.env.num_chains())
    throw ConfigError("need one default knob set per flow");
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (num_actors < 1) throw ConfigError("num_actors must be >= 1");
  if (eval_every <= 0) throw ConfigError("eval_every must be positive");
  if (episode_steps <= 0 || eval_steps <= 0 || periodic_eval_steps <= 0)
    throw ConfigError("episode and evaluation lengths must be positive");
  if (ddpg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (replay.buffer.capacity < static_cast<std::size_t>(ddpg.batch_size))
    throw ConfigError("replay capacity smaller than the batch size");
  if (replay.flush_every < 1 || replay.refresh_every < 1 || replay.evict_every < 1 || replay.stats_every < 1)
    throw ConfigError("replay periods must be >= 1");
  if (!(replay.evict_keep > 0.0 && replay.evict_keep <= 1.0)) throw ConfigError("evict_keep must lie in (0, 1]");
  if (!scenario.env.sla) throw ConfigError("no [sla] section");
}

ExperimentConfig parse_config(std::istream& is) {
  pt::ptree root;
  try {
    pt::read_ini(is, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  ExperimentConfig cfg;
  auto& env = cfg.scenario.env;

  std::set<std::string> known_sections = {"scenario", "ranges", "power", "model", "defaults", "sla",
                                          "run", "ddpg", "replay", "heuristic", "qlearning", "ee_pstate"};
  for (const auto& [name, _] : root)
    if (!known_sections.count(name) && name.rfind("flow", 0) != 0)
      throw ConfigError("unknown section [" + name + "]");

  try {
    Section scenario("scenario", child(root, "scenario"), {"dt", "jitter", "jitter_fraction", "seed"});
    env.dt = scenario.get("dt", env.dt);
    env.jitter = scenario.get("jitter", env.jitter);
    env.jitter_fraction = scenario.get("jitter_fraction", env.jitter_fraction);
    cfg.seed = scenario.get<std::uint64_t>("seed", cfg.seed);

    Section ranges("ranges", child(root, "ranges"),
                   {"cores_max", "freq_levels", "freq_min", "freq_max", "freq_step", "llc_total",
                    "llc_ddio_reserved", "dma_min", "dma_max", "batch_min", "batch_max", "line_rate"});
    auto& r = env.ranges;
    r.cores_max = ranges.get("cores_max", r.cores_max);
    if (ranges.has("freq_levels")) {
      r.freq_levels = ranges.get_list("freq_levels");
    } else if (ranges.has("freq_min") || ranges.has("freq_max") || ranges.has("freq_step")) {
      const double lo = ranges.get("freq_min", r.freq_min());
      const double hi = ranges.get("freq_max", r.freq_max());
      const double step = ranges.get("freq_step", 0.1e9);
      if (!(step > 0.0) || hi < lo) throw ConfigError("[ranges]: bad frequency grid");
      r.freq_levels.clear();
      for (int i = 0; lo + i * step <= hi * (1 + 1e-12); ++i) r.freq_levels.push_back(lo + i * step);
    }
    r.llc_total = ranges.get("llc_total", r.llc_total);
    r.llc_ddio_reserved = ranges.get("llc_ddio_reserved", r.llc_ddio_reserved);
    r.dma_min = ranges.get("dma_min", r.dma_min);
    r.dma_max = ranges.get("dma_max", r.dma_max);
    r.batch_min = ranges.get("batch_min", r.batch_min);
    r.batch_max = ranges.get("batch_max", r.batch_max);
    r.line_rate = ranges.get("line_rate", r.line_rate);

    Section power("power", child(root, "power"), {"p_idle", "p_max", "h"});
    env.power.p_idle = power.get("p_idle", env.power.p_idle);
    env.power.p_max = power.get("p_max", env.power.p_max);
    env.power.h = power.get("h", env.power.h);

    Section model("model", child(root, "model"), {"c_base", "kappa_miss", "c_call", "m_min", "freq_power_exp"});
    env.model.c_base = model.get("c_base", env.model.c_base);
    env.model.kappa_miss = model.get("kappa_miss", env.model.kappa_miss);
    env.model.c_call = model.get("c_call", env.model.c_call);
    env.model.m_min = model.get("m_min", env.model.m_min);
    env.model.freq_power_exp = model.get("freq_power_exp", env.model.freq_power_exp);

    const std::set<std::string> knob_keys = {"cores", "batch", "dma"};
    Section defaults("defaults", child(root, "defaults"), knob_keys);
    ChainKnobs base;
    base.cores = defaults.get("cores", base.cores);
    base.batch = defaults.get("batch", base.batch);
    base.dma = defaults.get("dma", base.dma);

    for (const auto& [name, tree] : root) {
      if (name.rfind("flow", 0) != 0) continue;
      Section flow(name, &tree, {"arrival_rate", "packet_size", "chain_length", "cores", "batch", "dma"});
      FlowSpec f;
      if (!flow.has("arrival_rate") || !flow.has("packet_size"))
        throw ConfigError("[" + name + "]: arrival_rate and packet_size are required");
      f.arrival_rate = flow.get("arrival_rate", f.arrival_rate);
      f.packet_size = flow.get("packet_size", f.packet_size);
      f.chain_length = flow.get("chain_length", f.chain_length);
      env.flows.push_back(f);
      ChainKnobs k = base;
      k.cores = flow.get("cores", k.cores);
      k.batch = flow.get("batch", k.batch);
      k.dma = flow.get("dma", k.dma);
      cfg.scenario.defaults.push_back(k);
    }

    Section sla("sla", child(root, "sla"), {"type", "energy_cap", "throughput_floor", "energy_ref"});
    const auto type = sla.get<std::string>("type", "max_throughput");
    if (type == "max_throughput") {
      env.sla = sla::MaxThroughput{sla.get("energy_cap", 2000.0)};
    } else if (type == "min_energy") {
      env.sla = sla::MinEnergy{sla.get("throughput_floor", 7.5),
                               sla.get("energy_ref", env.power.p_max * env.dt)};
    } else if (type == "energy_efficiency") {
      env.sla = sla::EnergyEfficiency{};
    } else {
      throw ConfigError("[sla]: unknown type '" + type + "'");
    }

    Section run("run", child(root, "run"),
                {"scheduler", "num_actors", "total_steps", "eval_every", "deterministic", "output",
                 "episode_steps", "eval_steps", "periodic_eval_steps", "training_energy_j"});
    cfg.scheduler = parse_scheduler(run.get<std::string>("scheduler", "ddpg"));
    cfg.num_actors = run.get("num_actors", cfg.num_actors);
    cfg.total_steps = run.get("total_steps", cfg.total_steps);
    cfg.eval_every = run.get("eval_every", cfg.eval_every);
    cfg.deterministic = run.get("deterministic", cfg.deterministic);
    cfg.output = run.get<std::string>("output", cfg.output.string());
    cfg.episode_steps = run.get("episode_steps", cfg.episode_steps);
    cfg.eval_steps = run.get("eval_steps", cfg.eval_steps);
    cfg.periodic_eval_steps = run.get("periodic_eval_steps", cfg.periodic_eval_steps);
    cfg.training_energy_j = run.get("training_energy_j", cfg.training_energy_j);

    Section dd("ddpg", child(root, "ddpg"),
               {"hidden", "actor_lr", "critic_lr", "gamma", "tau", "sigma0", "sigma_decay", "sigma_min",
                "batch_size", "learning_starts", "reward_scale"});
    auto& a = cfg.ddpg.agent;
    if (dd.has("hidden")) a.hidden = to_ints(dd.get_list("hidden"));
    a.actor_lr = dd.get("actor_lr", a.actor_lr);
    a.critic_lr = dd.get("critic_lr", a.critic_lr);
    a.gamma = dd.get("gamma", a.gamma);
    a.tau = dd.get("tau", a.tau);
    a.sigma0 = dd.get("sigma0", a.sigma0);
    a.sigma_decay = dd.get("sigma_decay", a.sigma_decay);
    a.sigma_min = dd.get("sigma_min", a.sigma_min);
    cfg.ddpg.batch_size = dd.get("batch_size", cfg.ddpg.batch_size);
    cfg.ddpg.learning_starts = dd.get("learning_starts", cfg.ddpg.learning_starts);
    cfg.ddpg.reward_scale = dd.get("reward_scale", cfg.ddpg.reward_scale);

    Section rp("replay", child(root, "replay"),
               {"capacity", "alpha", "beta0", "beta1", "priority_eps", "flush_every", "refresh_every",
                "evict_every", "evict_keep", "stats_every"});
    auto& rs = cfg.replay;
    rs.buffer.capacity = rp.get<std::size_t>("capacity", rs.buffer.capacity);
    rs.buffer.alpha = rp.get("alpha", rs.buffer.alpha);
    rs.buffer.priority_eps = rp.get("priority_eps", rs.buffer.priority_eps);
    rs.beta0 = rp.get("beta0", rs.beta0);
    rs.beta1 = rp.get("beta1", rs.beta1);
    rs.flush_every = rp.get("flush_every", rs.flush_every);
    rs.refresh_every = rp.get("refresh_every", rs.refresh_every);
    rs.evict_every = rp.get("evict_every", rs.evict_every);
    rs.evict_keep = rp.get("evict_keep", rs.evict_keep);
    rs.stats_every = rp.get("stats_every", rs.stats_every);

    Section he("heuristic", child(root, "heuristic"),
               {"threshold1_fraction", "threshold2_fraction", "threshold1", "threshold2"});
    cfg.heuristic.threshold1_fraction = he.get("threshold1_fraction", cfg.heuristic.threshold1_fraction);
    cfg.heuristic.threshold2_fraction = he.get("threshold2_fraction", cfg.heuristic.threshold2_fraction);
    if (he.has("threshold1")) cfg.heuristic.threshold1 = he.get("threshold1", 0.0);
    if (he.has("threshold2")) cfg.heuristic.threshold2 = he.get("threshold2", 0.0);

    Section ql("qlearning", child(root, "qlearning"),
               {"action_levels", "state_bins", "epsilon", "epsilon_decay", "learning_rate", "discount"});
    auto& q = cfg.qlearning;
    q.action_levels = ql.get("action_levels", q.action_levels);
    q.state_bins = ql.get("state_bins", q.state_bins);
    q.epsilon = ql.get("epsilon", q.epsilon);
    q.epsilon_decay = ql.get("epsilon_decay", q.epsilon_decay);
    q.learning_rate = ql.get("learning_rate", q.learning_rate);
    q.discount = ql.get("discount", q.discount);

    Section ee("ee_pstate", child(root, "ee_pstate"), {"alpha", "beta"});
    cfg.des_alpha = ee.get("alpha", cfg.des_alpha);
    cfg.des_beta = ee.get("beta", cfg.des_beta);
  } catch (const pt::ptree_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  return parse_config(is);
}

std::string scenario_fingerprint(const Scenario& s) {
  const auto& e = s.env;
  std::string out = fmt::format("dt={} jitter={} jf={}\n", e.dt, e.jitter, e.jitter_fraction);
  out += fmt::format("ranges {} [{}] {} {} {} {} {} {} {}\n", e.ranges.cores_max, fmt::join(e.ranges.freq_levels, ","),
                     e.ranges.llc_total, e.ranges.llc_ddio_reserved, e.ranges.dma_min, e.ranges.dma_max,
                     e.ranges.batch_min, e.ranges.batch_max, e.ranges.line_rate);
  out += fmt::format("power {} {} {}\n", e.power.p_idle, e.power.p_max, e.power.h);
  out += fmt::format("model {} {} {} {} {}\n", e.model.c_base, e.model.kappa_miss, e.model.c_call, e.model.m_min,
                     e.model.freq_power_exp);
  for (std::size_t i = 0; i < e.flows.size(); ++i) {
    const auto& f = e.flows[i];
    const auto& d = s.defaults[i];
    out += fmt::format("flow {} {} {} | {} {} {}\n", f.arrival_rate, f.packet_size, f.chain_length, d.cores,
                       d.batch, d.dma);
  }
  if (e.sla) {
    out += "sla " + sla::name(*e.sla);
    if (auto* m = std::get_if<sla::MaxThroughput>(&*e.sla)) out += fmt::format(" {}", m->energy_cap_j);
    if (auto* m = std::get_if<sla::MinEnergy>(&*e.sla))
      out += fmt::format(" {} {}", m->throughput_floor_gbps, m->energy_ref_j);
    out += "\n";
  }
  return out;
}

}  // namespace nfvs
