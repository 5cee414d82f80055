#include <doctest.h>

#include <atomic>
#include <chrono>
#include <random>
#include <set>
#include <thread>

#include <boost/math/special_functions/gamma.hpp>

#include "nfvs/replay.hpp"

using namespace nfvs;

namespace {

Transition tagged(double tag) {
  Transition t;
  t.state = Eigen::VectorXd::Constant(2, tag);
  t.action = Eigen::VectorXd::Constant(1, tag);
  t.reward = tag;
  t.next_state = Eigen::VectorXd::Constant(2, tag);
  return t;
}

ReplayConfig config(std::size_t capacity, double alpha) {
  ReplayConfig c;
  c.capacity = capacity;
  c.alpha = alpha;
  return c;
}

std::vector<double> draw_frequencies(PrioritizedBuffer& buf, int draws) {
  std::vector<double> counts(buf.config().capacity, 0.0);
  for (int i = 0; i < draws; ++i) {
    const auto b = buf.sample(1, 1.0);
    for (const auto& s : b.slots) counts[s.index] += 1.0;
  }
  for (auto& c : counts) c /= draws;
  return counts;
}

double chi_square_p(const std::vector<double>& freq, int draws) {
  const double expected = static_cast<double>(draws) / static_cast<double>(freq.size());
  double stat = 0.0;
  for (double f : freq) stat += std::pow(f * draws - expected, 2) / expected;
  return boost::math::gamma_q((static_cast<double>(freq.size()) - 1) / 2.0, stat / 2.0);
}

}  // namespace

TEST_CASE("store uses the max-priority rule") {
  PrioritizedBuffer buf(config(4, 1.0), 1);
  buf.store(tagged(0));
  CHECK(buf.size() == 1);
  CHECK(buf.root() == doctest::Approx(1.0));
  CHECK(buf.set_priority(buf.slot_of_age(0), 2.5));
  buf.store(tagged(1));
  CHECK(buf.priority(buf.slot_of_age(1).index) == doctest::Approx(2.5));
}

TEST_CASE("ring eviction when full") {
  PrioritizedBuffer buf(config(4, 0.6), 1);
  for (int i = 0; i < 5; ++i) buf.store(tagged(i));
  CHECK(buf.size() == 4);
  CHECK(buf.stats().evictions == 1);
  std::set<double> seen;
  for (int i = 0; i < 4; ++i) seen.insert(buf.at(buf.slot_of_age(static_cast<std::size_t>(i)).index).reward);
  CHECK(seen == std::set<double>{1, 2, 3, 4});
}

TEST_CASE("proportional sampling frequencies") {
  PrioritizedBuffer buf(config(4, 1.0), 2);
  for (int i = 0; i < 4; ++i) buf.store(tagged(i));
  for (int i = 0; i < 4; ++i) buf.set_priority(buf.slot_of_age(static_cast<std::size_t>(i)), i + 1.0);
  const auto freq = draw_frequencies(buf, 100000);
  for (int i = 0; i < 4; ++i) {
    const auto idx = buf.slot_of_age(static_cast<std::size_t>(i)).index;
    CHECK(std::abs(freq[idx] - 0.1 * (i + 1)) <= 0.02);
  }
}

TEST_CASE("alpha zero samples uniformly") {
  PrioritizedBuffer buf(config(4, 0.0), 3);
  for (int i = 0; i < 4; ++i) buf.store(tagged(i));
  for (int i = 0; i < 4; ++i) buf.set_priority(buf.slot_of_age(static_cast<std::size_t>(i)), (i + 1) * 10.0);
  CHECK(chi_square_p(draw_frequencies(buf, 100000), 100000) > 0.01);
}

TEST_CASE("importance weights") {
  CHECK(importance_weight(4, 0.4, 1.0) == doctest::Approx(0.625));
  CHECK(importance_weight(4, 0.25, 0.7) == doctest::Approx(1.0));

  PrioritizedBuffer buf(config(4, 1.0), 4);
  for (int i = 0; i < 4; ++i) buf.store(tagged(i));
  for (int i = 0; i < 4; ++i) buf.set_priority(buf.slot_of_age(static_cast<std::size_t>(i)), i + 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const auto b = buf.sample(4, 1.0);
    double max_raw = 0.0;
    for (const auto& s : b.slots) max_raw = std::max(max_raw, importance_weight(4, buf.priority(s.index) / 10.0, 1.0));
    for (std::size_t j = 0; j < 4; ++j) {
      const double raw = importance_weight(4, buf.priority(b.slots[j].index) / 10.0, 1.0);
      CHECK(b.weights[static_cast<Eigen::Index>(j)] == doctest::Approx(raw / max_raw));
    }
    CHECK(b.weights.maxCoeff() == doctest::Approx(1.0));
    CHECK(b.rewards.size() == 4);
  }
}

TEST_CASE("sampling more than stored throws") {
  PrioritizedBuffer buf(config(8, 0.6), 5);
  buf.store(tagged(1));
  CHECK_THROWS_AS(buf.sample(2, 0.4), std::length_error);
}

TEST_CASE("priority floor and tree identity") {
  PrioritizedBuffer buf(config(4, 1.0), 6);
  for (int i = 0; i < 4; ++i) buf.store(tagged(i));
  const auto slot = buf.slot_of_age(2);
  const double before = buf.root();
  const double old = buf.priority(slot.index);
  buf.set_priority(slot, 3.0);
  CHECK(buf.root() == doctest::Approx(before + (3.0 - old)));
  buf.update_priorities({slot}, Eigen::VectorXd::Zero(1));
  CHECK(buf.priority(slot.index) == buf.config().priority_eps);
  CHECK(buf.priority(slot.index) > 0.0);
}

TEST_CASE("stale slots are skipped") {
  PrioritizedBuffer buf(config(2, 1.0), 7);
  buf.store(tagged(0));
  buf.store(tagged(1));
  const auto batch = buf.sample(2, 1.0);  // two equal strata: one draw per slot
  const auto fresh = buf.slot_of_age(1);
  buf.store(tagged(2));                   // overwrites the slot holding tag 0
  const auto replaced = buf.slot_of_age(1);
  buf.update_priorities(batch.slots, Eigen::VectorXd::Constant(2, 50.0));
  CHECK(buf.priority(replaced.index) == doctest::Approx(1.0));
  CHECK(buf.priority(fresh.index) == doctest::Approx(50.0 + buf.config().priority_eps));
  CHECK_FALSE(buf.set_priority({replaced.index, replaced.generation - 1}, 5.0));
  CHECK(buf.set_priority(replaced, 5.0));
}

TEST_CASE("evict_old keeps the newest entries") {
  PrioritizedBuffer buf(config(128, 0.6), 8);
  for (int i = 0; i < 100; ++i) buf.store(tagged(i));
  buf.evict_old(0.5);
  CHECK(buf.size() == 50);
  for (std::size_t age = 0; age < 50; ++age) CHECK(buf.at(buf.slot_of_age(age).index).reward == 50.0 + age);
  CHECK(buf.root() == doctest::Approx(buf.leaf_sum()).epsilon(1e-9));
  for (int rep = 0; rep < 100; ++rep)
    for (const auto r : buf.sample(8, 0.4).rewards) CHECK(r >= 50.0);
}

TEST_CASE("fuzzed operations keep the tree consistent and never return stale data") {
  PrioritizedBuffer buf(config(64, 0.6), 9);
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> op(0, 9);
  std::uniform_real_distribution<double> pr(0.0, 10.0), keep(0.3, 1.0);
  double tag = 0.0;
  double worst = 0.0;
  std::vector<SlotRef> last;
  for (int i = 0; i < 100000; ++i) {
    switch (op(rng)) {
      case 0:
      case 1:
      case 2:
      case 3: buf.store(tagged(tag++)); break;
      case 4: {
        std::vector<Transition> items;
        for (int k = 0; k < 3; ++k) items.push_back(tagged(tag++));
        buf.store_batch(std::move(items));
        break;
      }
      case 5:
      case 6:
        if (buf.size() >= 4) {
          const auto b = buf.sample(4, 0.5);
          // Live entries only: every sampled reward is one of the newest `size` tags.
          for (const auto r : b.rewards) CHECK(r >= tag - static_cast<double>(buf.stats().size) - 0.5);
          last = b.slots;
        }
        break;
      case 7:
        if (!last.empty()) {
          Eigen::VectorXd td(static_cast<Eigen::Index>(last.size()));
          for (auto& x : td) x = pr(rng);
          buf.update_priorities(last, td);
        }
        break;
      case 8:
        if (i % 50 == 0) buf.evict_old(keep(rng));
        break;
      default:
        if (buf.size() > 0) buf.set_priority(buf.slot_of_age(0), pr(rng) + 1e-3);
    }
    worst = std::max(worst, std::abs(buf.root() - buf.leaf_sum()) / std::max(1e-300, buf.leaf_sum()));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("local buffers flush everything exactly once under concurrency") {
  PrioritizedBuffer buf(config(100000, 0.6), 11);
  constexpr int kActors = 4, kPerActor = 5000;
  std::atomic<bool> done{false};
  std::thread learner([&] {
    std::mt19937_64 rng(1);
    while (!done) {
      if (buf.size() >= 32) {
        const auto b = buf.sample(32, 0.4);
        buf.update_priorities(b.slots, Eigen::VectorXd::Random(32).cwiseAbs());
      }
    }
  });
  std::vector<std::thread> actors;
  for (int a = 0; a < kActors; ++a)
    actors.emplace_back([&, a] {
      LocalBuffer local;
      for (int i = 0; i < kPerActor; ++i) {
        local.push(tagged(a * kPerActor + i));
        if (local.size() == 100) local.flush(buf);
      }
      local.flush(buf);
      CHECK(local.empty());
    });
  for (auto& t : actors) t.join();
  done = true;
  learner.join();

  CHECK(buf.size() == kActors * kPerActor);
  CHECK(buf.stats().stored == kActors * kPerActor);
  CHECK(buf.stats().flushes == kActors * kPerActor / 100);
  std::set<double> tags;
  for (std::size_t age = 0; age < buf.size(); ++age) tags.insert(buf.at(buf.slot_of_age(age).index).reward);
  CHECK(tags.size() == kActors * kPerActor);
  CHECK(buf.root() == doctest::Approx(buf.leaf_sum()).epsilon(1e-9));
}

TEST_CASE("parameter server versions and snapshots") {
  ParamServer server;
  CHECK(server.fetch() == nullptr);
  CHECK(server.version() == 0);
  nn::MlpD net({2, 3, 1}, nn::OutputActivation::Identity);
  std::uint64_t prev = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto v = server.publish(net);
    CHECK(v > prev);
    prev = v;
  }
  CHECK(server.fetch()->version == 1000);
}

TEST_CASE("concurrent fetches never see torn snapshots and finish promptly") {
  ParamServer server;
  nn::MlpD net({4, 32, 4}, nn::OutputActivation::Tanh);
  net.params().setConstant(0.0);
  server.publish(net);
  std::atomic<bool> stop{false};
  std::atomic<int> torn{0};
  std::atomic<long> slowest_us{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 3; ++r)
    readers.emplace_back([&] {
      while (!stop) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto snap = server.fetch();
        const auto us = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0).count();
        long cur = slowest_us.load();
        while (us > cur && !slowest_us.compare_exchange_weak(cur, us)) {}
        const auto& p = snap->actor.params();
        // Every parameter of version v equals v - 1.
        if ((p.array() != static_cast<double>(snap->version - 1)).any()) ++torn;
      }
    });
  for (int v = 1; v <= 2000; ++v) {
    net.params().setConstant(static_cast<double>(v));
    server.publish(net);
  }
  stop = true;
  for (auto& t : readers) t.join();
  CHECK(torn == 0);
  CHECK(slowest_us < 2000000);
}
