#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "nfvs/nn.hpp"

namespace nfvs {

/// One experience tuple (x_i, a_i, r_i, x_{i+1}).
struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool terminal = false;
};

/// Identifies a buffer slot at the time it was sampled. A slot that has since
/// been overwritten or evicted carries a newer generation.
struct SlotRef {
  std::size_t index = 0;
  std::uint64_t generation = 0;
};

/// N transitions packed column-wise, with importance weights.
struct Minibatch {
  Eigen::MatrixXd states;       // state_dim x N
  Eigen::MatrixXd actions;      // action_dim x N
  Eigen::VectorXd rewards;      // N
  Eigen::MatrixXd next_states;  // state_dim x N
  Eigen::VectorXd terminal;     // N, 1.0 where the bootstrap is masked
  Eigen::VectorXd weights;      // N, max-normalized importance weights
  std::vector<SlotRef> slots;

  Eigen::Index size() const { return rewards.size(); }
};

/// Unnormalized importance weight (size * P(i))^-beta.
double importance_weight(std::size_t size, double probability, double beta);

/// Pack transitions into a minibatch with unit importance weights.
Minibatch make_minibatch(const std::vector<Transition>& items);

/// Binary tree of partial sums (and maxima) over a fixed number of leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t leaves);

  std::size_t leaves() const { return leaves_; }
  double total() const { return sum_[1]; }
  double max() const { return max_[1]; }
  double leaf(std::size_t i) const { return sum_[base_ + i]; }

  void set(std::size_t i, double value);

  /// Leaf whose cumulative range contains `mass`, for mass in [0, total()).
  /// Never returns a zero-valued leaf while total() > 0.
  std::size_t find(double mass) const;

 private:
  std::size_t leaves_;
  std::size_t base_;  // power of two >= leaves_
  std::vector<double> sum_;
  std::vector<double> max_;
};

struct ReplayConfig {
  std::size_t capacity = 100000;
  double alpha = 0.6;           // prioritization exponent
  double priority_eps = 1e-6;   // floor added to |td error|
};

struct ReplayStats {
  std::size_t size = 0;
  double root_priority = 0.0;
  std::uint64_t evictions = 0;
  std::uint64_t flushes = 0;
  std::uint64_t stored = 0;
};

/// Central prioritized replay: ring storage plus a sum tree over p^alpha.
/// All public operations are serialized by an internal mutex.
class PrioritizedBuffer {
 public:
  PrioritizedBuffer(ReplayConfig cfg, std::uint64_t seed);

  const ReplayConfig& config() const { return cfg_; }

  /// Insert with the current maximum raw priority (1.0 when empty); when
  /// full the oldest entry is overwritten.
  void store(Transition t);

  /// Insert a whole batch under one lock (one flush).
  void store_batch(std::vector<Transition> items);

  /// Stratified proportional sample of n transitions with importance weights
  /// w_i = (size * P(i))^-beta / max_j w_j. Throws std::length_error when
  /// fewer than n entries are stored.
  Minibatch sample(std::size_t n, double beta);

  /// Set raw priorities |td| + eps for the sampled slots; stale slots are skipped.
  void update_priorities(const std::vector<SlotRef>& slots, const Eigen::VectorXd& td_errors);

  /// Set one slot's raw priority directly. Returns false for a stale slot.
  bool set_priority(const SlotRef& slot, double priority);

  /// Drop the oldest (1 - keep_fraction) share of stored entries.
  void evict_old(double keep_fraction);

  std::size_t size() const;
  ReplayStats stats() const;
  double root() const;
  /// Sum of leaves computed directly, for consistency checks.
  double leaf_sum() const;
  /// Raw (un-exponentiated) priority of a live slot.
  double priority(std::size_t index) const;
  /// Slot reference of the i-th oldest live entry.
  SlotRef slot_of_age(std::size_t age) const;
  const Transition& at(std::size_t index) const;

 private:
  void store_locked(Transition t);
  double max_raw_priority_locked() const;
  void set_raw_locked(std::size_t index, double raw);

  ReplayConfig cfg_;
  mutable std::mutex mutex_;
  std::mt19937_64 rng_;
  std::vector<Transition> items_;
  std::vector<std::uint64_t> generation_;
  std::vector<bool> live_;
  SumTree weighted_;  // leaves hold p^alpha
  SumTree raw_;       // leaves hold p (for the max-priority rule)
  std::size_t oldest_ = 0;
  std::size_t size_ = 0;
  std::uint64_t evictions_ = 0;
  std::uint64_t flushes_ = 0;
  std::uint64_t stored_ = 0;
};

/// Per-actor queue that is periodically moved into the central buffer.
class LocalBuffer {
 public:
  void push(Transition t) { items_.push_back(std::move(t)); }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  /// Move everything into `central` in one atomic batch; leaves this empty.
  void flush(PrioritizedBuffer& central);

 private:
  std::vector<Transition> items_;
};

/// Immutable actor-parameter snapshot published by the learner.
struct ParamSnapshot {
  std::uint64_t version = 0;
  nn::MlpD actor;
};

/// Single-writer / many-reader parameter distribution. Readers load a
/// shared pointer to an immutable snapshot, so a fetch never sees a torn
/// update and never waits for a publish to finish building its snapshot.
class ParamServer {
 public:
  /// Returns the new version number.
  std::uint64_t publish(const nn::MlpD& actor);

  /// Null before the first publish.
  std::shared_ptr<const ParamSnapshot> fetch() const;

  std::uint64_t version() const;

 private:
  std::shared_ptr<const ParamSnapshot> current_;
  std::uint64_t next_version_ = 1;  // writer-only
};

}  // namespace nfvs
