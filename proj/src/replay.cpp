#include "nfvs/replay.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace nfvs {

double importance_weight(std::size_t size, double probability, double beta) {
  return std::pow(static_cast<double>(size) * probability, -beta);
}

Minibatch make_minibatch(const std::vector<Transition>& items) {
  Minibatch b;
  if (items.empty()) return b;
  const auto n = static_cast<Eigen::Index>(items.size());
  const auto ds = items.front().state.size();
  const auto da = items.front().action.size();
  b.states.resize(ds, n);
  b.actions.resize(da, n);
  b.rewards.resize(n);
  b.next_states.resize(ds, n);
  b.terminal.resize(n);
  b.weights = Eigen::VectorXd::Ones(n);
  b.slots.resize(items.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = items[static_cast<std::size_t>(j)];
    if (t.state.size() != ds || t.next_state.size() != ds || t.action.size() != da)
      throw std::invalid_argument("make_minibatch: inconsistent transition dimensions");
    b.states.col(j) = t.state;
    b.actions.col(j) = t.action;
    b.rewards[j] = t.reward;
    b.next_states.col(j) = t.next_state;
    b.terminal[j] = t.terminal ? 1.0 : 0.0;
  }
  return b;
}

// ---- SumTree ----------------------------------------------------------------

SumTree::SumTree(std::size_t leaves) : leaves_(leaves), base_(1) {
  if (leaves == 0) throw std::invalid_argument("SumTree needs at least one leaf");
  while (base_ < leaves_) base_ <<= 1;
  sum_.assign(2 * base_, 0.0);
  max_.assign(2 * base_, 0.0);
}

void SumTree::set(std::size_t i, double value) {
  std::size_t node = base_ + i;
  sum_[node] = value;
  max_[node] = value;
  for (node >>= 1; node >= 1; node >>= 1) {
    sum_[node] = sum_[2 * node] + sum_[2 * node + 1];
    max_[node] = std::max(max_[2 * node], max_[2 * node + 1]);
  }
}

std::size_t SumTree::find(double mass) const {
  std::size_t node = 1;
  while (node < base_) {
    const double left = sum_[2 * node];
    const double right = sum_[2 * node + 1];
    if (mass < left || right <= 0.0) {
      node = 2 * node;
    } else {
      mass -= left;
      node = 2 * node + 1;
    }
  }
  return node - base_;
}

// ---- PrioritizedBuffer --------------------------------------------------------

PrioritizedBuffer::PrioritizedBuffer(ReplayConfig cfg, std::uint64_t seed)
    : cfg_(cfg),
      rng_(seed),
      items_(cfg.capacity),
      generation_(cfg.capacity, 0),
      live_(cfg.capacity, false),
      weighted_(cfg.capacity),
      raw_(cfg.capacity) {
  if (cfg_.alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  if (!(cfg_.priority_eps > 0.0)) throw std::invalid_argument("priority_eps must be positive");
}

double PrioritizedBuffer::max_raw_priority_locked() const {
  return size_ == 0 ? 1.0 : raw_.max();
}

void PrioritizedBuffer::set_raw_locked(std::size_t index, double raw) {
  raw_.set(index, raw);
  weighted_.set(index, raw > 0.0 ? std::pow(raw, cfg_.alpha) : 0.0);
}

void PrioritizedBuffer::store_locked(Transition t) {
  const double p = max_raw_priority_locked();
  std::size_t slot;
  if (size_ == cfg_.capacity) {
    slot = oldest_;
    oldest_ = (oldest_ + 1) % cfg_.capacity;
    ++evictions_;
  } else {
    slot = (oldest_ + size_) % cfg_.capacity;
    ++size_;
  }
  items_[slot] = std::move(t);
  ++generation_[slot];
  live_[slot] = true;
  set_raw_locked(slot, p);
  ++stored_;
}

void PrioritizedBuffer::store(Transition t) {
  std::lock_guard lock(mutex_);
  store_locked(std::move(t));
}

void PrioritizedBuffer::store_batch(std::vector<Transition> items) {
  std::lock_guard lock(mutex_);
  for (auto& t : items) store_locked(std::move(t));
  ++flushes_;
}

Minibatch PrioritizedBuffer::sample(std::size_t n, double beta) {
  std::lock_guard lock(mutex_);
  if (n == 0) throw std::invalid_argument("sample size must be positive");
  if (size_ < n)
    throw std::length_error(fmt::format("cannot sample {} from {} stored transitions", n, size_));

  const double total = weighted_.total();
  const double segment = total / static_cast<double>(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::size_t> picked(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double mass = std::min((static_cast<double>(j) + unit(rng_)) * segment, std::nextafter(total, 0.0));
    picked[j] = weighted_.find(mass);
  }

  std::vector<Transition> chosen;
  chosen.reserve(n);
  for (auto idx : picked) chosen.push_back(items_[idx]);
  Minibatch b = make_minibatch(chosen);

  double max_w = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double prob = weighted_.leaf(picked[j]) / total;
    const double w = importance_weight(size_, prob, beta);
    b.weights[static_cast<Eigen::Index>(j)] = w;
    max_w = std::max(max_w, w);
    b.slots[j] = {picked[j], generation_[picked[j]]};
  }
  if (max_w > 0.0) b.weights /= max_w;
  return b;
}

void PrioritizedBuffer::update_priorities(const std::vector<SlotRef>& slots,
                                          const Eigen::VectorXd& td_errors) {
  if (static_cast<Eigen::Index>(slots.size()) != td_errors.size())
    throw std::invalid_argument("update_priorities: size mismatch");
  std::lock_guard lock(mutex_);
  for (std::size_t j = 0; j < slots.size(); ++j) {
    const auto& s = slots[j];
    if (s.index >= cfg_.capacity || !live_[s.index] || generation_[s.index] != s.generation) continue;
    const double delta = td_errors[static_cast<Eigen::Index>(j)];
    if (!std::isfinite(delta)) continue;
    set_raw_locked(s.index, std::abs(delta) + cfg_.priority_eps);
  }
}

bool PrioritizedBuffer::set_priority(const SlotRef& slot, double priority) {
  if (!(priority > 0.0) || !std::isfinite(priority))
    throw std::invalid_argument("priority must be positive and finite");
  std::lock_guard lock(mutex_);
  if (slot.index >= cfg_.capacity || !live_[slot.index] || generation_[slot.index] != slot.generation)
    return false;
  set_raw_locked(slot.index, priority);
  return true;
}

void PrioritizedBuffer::evict_old(double keep_fraction) {
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("keep_fraction must lie in [0, 1]");
  std::lock_guard lock(mutex_);
  const auto keep = static_cast<std::size_t>(std::llround(static_cast<double>(size_) * keep_fraction));
  while (size_ > keep) {
    const std::size_t slot = oldest_;
    set_raw_locked(slot, 0.0);
    live_[slot] = false;
    ++generation_[slot];
    items_[slot] = Transition{};
    oldest_ = (oldest_ + 1) % cfg_.capacity;
    --size_;
    ++evictions_;
  }
}

std::size_t PrioritizedBuffer::size() const {
  std::lock_guard lock(mutex_);
  return size_;
}

ReplayStats PrioritizedBuffer::stats() const {
  std::lock_guard lock(mutex_);
  return {size_, weighted_.total(), evictions_, flushes_, stored_};
}

double PrioritizedBuffer::root() const {
  std::lock_guard lock(mutex_);
  return weighted_.total();
}

double PrioritizedBuffer::leaf_sum() const {
  std::lock_guard lock(mutex_);
  double s = 0.0;
  for (std::size_t i = 0; i < cfg_.capacity; ++i) s += weighted_.leaf(i);
  return s;
}

double PrioritizedBuffer::priority(std::size_t index) const {
  std::lock_guard lock(mutex_);
  return raw_.leaf(index);
}

SlotRef PrioritizedBuffer::slot_of_age(std::size_t age) const {
  std::lock_guard lock(mutex_);
  if (age >= size_) throw std::out_of_range("slot_of_age beyond size");
  const std::size_t idx = (oldest_ + age) % cfg_.capacity;
  return {idx, generation_[idx]};
}

const Transition& PrioritizedBuffer::at(std::size_t index) const {
  std::lock_guard lock(mutex_);
  return items_.at(index);
}

// ---- LocalBuffer / ParamServer ---------------------------------------------

void LocalBuffer::flush(PrioritizedBuffer& central) {
  if (items_.empty()) return;
  central.store_batch(std::move(items_));
  items_.clear();
}

std::uint64_t ParamServer::publish(const nn::MlpD& actor) {
  auto snap = std::make_shared<const ParamSnapshot>(ParamSnapshot{next_version_, actor});
  std::atomic_store_explicit(&current_, std::shared_ptr<const ParamSnapshot>(std::move(snap)),
                             std::memory_order_release);
  return next_version_++;
}

std::shared_ptr<const ParamSnapshot> ParamServer::fetch() const {
  return std::atomic_load_explicit(&current_, std::memory_order_acquire);
}

std::uint64_t ParamServer::version() const {
  auto s = fetch();
  return s ? s->version : 0;
}

}  // namespace nfvs
