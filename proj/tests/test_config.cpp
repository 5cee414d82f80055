#include <doctest.h>

#include <sstream>

#include "nfvs/config.hpp"

using namespace nfvs;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

const std::string kMinimal = R"(
[flow.a]
arrival_rate = 1e6
packet_size = 512

[sla]
type = max_throughput
energy_cap = 1500
)";

}  // namespace

TEST_CASE("minimal config gets defaults") {
  const auto cfg = parse(kMinimal);
  REQUIRE(cfg.scenario.env.flows.size() == 1);
  CHECK(cfg.scenario.env.flows[0].arrival_rate == 1e6);
  CHECK(cfg.scenario.defaults.size() == 1);
  CHECK(cfg.scheduler == SchedulerKind::Ddpg);
  CHECK(cfg.deterministic);
  CHECK(std::get<sla::MaxThroughput>(*cfg.scenario.env.sla).energy_cap_j == 1500.0);
  const auto bare = parse("[flow.a]\narrival_rate = 1e6\npacket_size = 64\n");
  CHECK(std::get<sla::MaxThroughput>(*bare.scenario.env.sla).energy_cap_j == 2000.0);
}

TEST_CASE("shipped configs parse and validate") {
  for (const char* name : {"two_chain_llc.ini", "acceptance_maxth.ini", "acceptance_mine.ini", "acceptance_ee.ini"}) {
    CAPTURE(name);
    const auto cfg = load_config(std::filesystem::path(NFVS_CONFIG_DIR) / name);
    CHECK_NOTHROW(cfg.validate());
  }
  const auto ee = load_config(std::filesystem::path(NFVS_CONFIG_DIR) / "acceptance_ee.ini");
  CHECK(ee.scenario.env.flows.size() == 5);
  CHECK(ee.scenario.env.dt == 10.0);
  CHECK(std::holds_alternative<sla::EnergyEfficiency>(*ee.scenario.env.sla));
}

TEST_CASE("sla variants") {
  auto cfg = parse(R"(
[flow.a]
arrival_rate = 1e6
packet_size = 512
[sla]
type = min_energy
throughput_floor = 3
)");
  const auto& m = std::get<sla::MinEnergy>(*cfg.scenario.env.sla);
  CHECK(m.throughput_floor_gbps == 3.0);
  CHECK(m.energy_ref_j == doctest::Approx(cfg.scenario.env.power.p_max * cfg.scenario.env.dt));
  CHECK_THROWS_AS(parse("[flow.a]\narrival_rate=1\npacket_size=64\n[sla]\ntype=fastest\n"), ConfigError);
}

TEST_CASE("frequency grid from bounds") {
  const auto cfg = parse(kMinimal + "[ranges]\nfreq_min = 1.0e9\nfreq_max = 1.4e9\nfreq_step = 0.2e9\n");
  const auto& f = cfg.scenario.env.ranges.freq_levels;
  REQUIRE(f.size() == 3);
  CHECK(f[2] == doctest::Approx(1.4e9));
  const auto listed = parse(kMinimal + "[ranges]\nfreq_levels = 1e9, 2e9\n");
  CHECK(listed.scenario.env.ranges.freq_levels == std::vector<double>{1e9, 2e9});
}

TEST_CASE("errors are config errors") {
  CHECK_THROWS_AS(parse(kMinimal + "[run]\ntotal_step = 5\n"), ConfigError);
  CHECK_THROWS_AS(parse(kMinimal + "[bogus]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse(kMinimal + "[run]\ntotal_steps = many\n"), ConfigError);
  CHECK_THROWS_AS(parse(kMinimal + "[run]\ntotal_steps = 2.5\n"), ConfigError);
  CHECK_THROWS_AS(parse(kMinimal + "[run]\ndeterministic = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse(kMinimal + "[run]\nscheduler = magic\n"), ConfigError);
  CHECK_THROWS_AS(parse("[flow.a]\narrival_rate = 1e6\n[sla]\ntype = max_throughput\n"), ConfigError);
  CHECK_THROWS_AS(parse(kMinimal + "[ddpg]\ngamma = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[flow.a\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("scheduler names round trip") {
  for (auto k : {SchedulerKind::Ddpg, SchedulerKind::Heuristic, SchedulerKind::QLearning, SchedulerKind::EePstate,
                 SchedulerKind::StaticBaseline})
    CHECK(parse_scheduler(scheduler_name(k)) == k);
}

TEST_CASE("scenario fingerprint ignores run settings only") {
  const auto a = parse(kMinimal);
  const auto b = parse(kMinimal + "[run]\nscheduler = heuristic\ntotal_steps = 10\n");
  const auto c = parse(kMinimal + "[power]\np_max = 300\n");
  CHECK(scenario_fingerprint(a.scenario) == scenario_fingerprint(b.scenario));
  CHECK(scenario_fingerprint(a.scenario) != scenario_fingerprint(c.scenario));
}
