#pragma once

// Feed-forward network with rectifier hidden layers, exact reverse-mode
// gradients, soft target updates, an adaptive-moment optimizer and a binary
// parameter format.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nfvs::nn {

enum class OutputActivation : std::uint32_t { Identity = 0, Tanh = 1 };

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Multi-layer perceptron. Parameters live in one flat vector laid out per
/// layer as [W (n_out x n_in, row-major), b (n_out)].
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<int> layer_sizes, OutputActivation head)
      : sizes_(std::move(layer_sizes)), head_(head) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
    Eigen::Index count = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw std::invalid_argument("layer sizes must be >= 1");
      offsets_.push_back(count);
      count += static_cast<Eigen::Index>(sizes_[l] + 1) * sizes_[l + 1];
    }
    params_ = Vec<Scalar>::Zero(count);
  }

  /// Uniform +-1/sqrt(fan_in) initialization.
  template <class Rng>
  static Mlp random(std::vector<int> layer_sizes, OutputActivation head, Rng& rng) {
    Mlp net(std::move(layer_sizes), head);
    for (int l = 0; l < net.num_layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      const Eigen::Index begin = net.offsets_[l];
      const Eigen::Index len = static_cast<Eigen::Index>(net.sizes_[l] + 1) * net.sizes_[l + 1];
      for (Eigen::Index i = begin; i < begin + len; ++i) net.params_[i] = static_cast<Scalar>(dist(rng));
    }
    return net;
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  OutputActivation head() const { return head_; }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  Eigen::Index num_params() const { return params_.size(); }

  Vec<Scalar>& params() { return params_; }
  const Vec<Scalar>& params() const { return params_; }

  Eigen::Map<const RowMat<Scalar>> weights(int layer) const {
    return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
  }
  Eigen::Map<const Vec<Scalar>> bias(int layer) const {
    return {params_.data() + offsets_[layer] + weight_count(layer), sizes_[layer + 1]};
  }
  Eigen::Map<RowMat<Scalar>> weights(int layer) {
    return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
  }
  Eigen::Map<Vec<Scalar>> bias(int layer) {
    return {params_.data() + offsets_[layer] + weight_count(layer), sizes_[layer + 1]};
  }

  Eigen::Index offset(int layer) const { return offsets_[layer]; }
  Eigen::Index weight_count(int layer) const {
    return static_cast<Eigen::Index>(sizes_[layer]) * sizes_[layer + 1];
  }

  bool same_architecture(const Mlp& other) const {
    return sizes_ == other.sizes_ && head_ == other.head_;
  }

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  OutputActivation head_ = OutputActivation::Identity;
  Vec<Scalar> params_;
};

/// Activations kept by a forward pass for the backward pass.
template <typename Scalar>
struct ForwardCache {
  std::vector<Mat<Scalar>> activations;   // activations[0] is the input
  std::vector<Mat<Scalar>> preactivations;
};

namespace detail {

template <typename Scalar>
void check_input(const Mlp<Scalar>& net, Eigen::Index rows) {
  if (rows != net.input_size())
    throw std::invalid_argument("Mlp input has " + std::to_string(rows) + " rows, expected " +
                                std::to_string(net.input_size()));
}

}  // namespace detail

/// Forward pass over a batch; each column of `input` is one sample.
template <typename Scalar, typename Derived>
Mat<Scalar> forward(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& input,
                    ForwardCache<Scalar>* cache = nullptr) {
  detail::check_input(net, input.rows());
  Mat<Scalar> a = input.template cast<Scalar>();
  if (cache) {
    cache->activations.assign(1, a);
    cache->preactivations.clear();
  }
  const int layers = net.num_layers();
  for (int l = 0; l < layers; ++l) {
    Mat<Scalar> z = net.weights(l) * a;
    z.colwise() += net.bias(l);
    if (l + 1 < layers) {
      a = z.cwiseMax(Scalar(0));
    } else if (net.head() == OutputActivation::Tanh) {
      a = z.array().tanh().matrix();
    } else {
      a = z;
    }
    if (cache) {
      cache->preactivations.push_back(std::move(z));
      cache->activations.push_back(a);
    }
  }
  return a;
}

template <typename Scalar>
struct Gradients {
  Vec<Scalar> params;  // summed over the batch
  Mat<Scalar> input;   // one column per sample
};

/// Reverse-mode pass: given dLoss/dOutput per sample, returns dLoss/dParams
/// (summed over samples) and dLoss/dInput (per sample).
template <typename Scalar, typename Derived>
Gradients<Scalar> backward(const Mlp<Scalar>& net, const ForwardCache<Scalar>& cache,
                           const Eigen::MatrixBase<Derived>& output_grad) {
  const int layers = net.num_layers();
  if (static_cast<int>(cache.preactivations.size()) != layers)
    throw std::invalid_argument("forward cache does not match network");
  if (output_grad.rows() != net.output_size() ||
      output_grad.cols() != cache.activations.front().cols())
    throw std::invalid_argument("output gradient shape mismatch");

  Gradients<Scalar> g;
  g.params = Vec<Scalar>::Zero(net.num_params());
  Mat<Scalar> delta = output_grad.template cast<Scalar>();
  if (net.head() == OutputActivation::Tanh) {
    const auto& y = cache.activations.back();
    delta.array() *= (Scalar(1) - y.array().square());
  }
  for (int l = layers - 1; l >= 0; --l) {
    if (l + 1 < layers) {
      delta.array() *= (cache.preactivations[l].array() > Scalar(0)).template cast<Scalar>();
    }
    const auto& a_prev = cache.activations[l];
    Eigen::Map<RowMat<Scalar>> gw(g.params.data() + net.offset(l), net.layer_sizes()[l + 1],
                                  net.layer_sizes()[l]);
    Eigen::Map<Vec<Scalar>> gb(g.params.data() + net.offset(l) + net.weight_count(l),
                               net.layer_sizes()[l + 1]);
    gw.noalias() = delta * a_prev.transpose();
    gb = delta.rowwise().sum();
    delta = net.weights(l).transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

/// Convenience: forward + backward on a batch.
template <typename Scalar, typename DerivedX, typename DerivedG>
Gradients<Scalar> backward(const Mlp<Scalar>& net, const Eigen::MatrixBase<DerivedX>& input,
                           const Eigen::MatrixBase<DerivedG>& output_grad) {
  ForwardCache<Scalar> cache;
  forward(net, input, &cache);
  return backward(net, cache, output_grad);
}

/// target <- tau * online + (1 - tau) * target
template <typename Scalar>
void soft_update(Mlp<Scalar>& target, const Mlp<Scalar>& online, Scalar tau) {
  if (!target.same_architecture(online)) throw std::invalid_argument("soft_update: architecture mismatch");
  if (!(tau >= Scalar(0) && tau <= Scalar(1))) throw std::invalid_argument("soft_update: tau outside [0, 1]");
  target.params() = tau * online.params() + (Scalar(1) - tau) * target.params();
}

/// Adaptive-moment optimizer state for one network.
template <typename Scalar>
struct AdamState {
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
  std::int64_t step = 0;
  Vec<Scalar> m;
  Vec<Scalar> v;

  AdamState() = default;
  AdamState(Eigen::Index n, Scalar lr) : learning_rate(lr), m(Vec<Scalar>::Zero(n)), v(Vec<Scalar>::Zero(n)) {}
};

/// One descent step along `gradient`. Throws std::domain_error on a
/// non-finite gradient without touching the network or the state.
template <typename Scalar, typename Derived>
void apply_update(Mlp<Scalar>& net, AdamState<Scalar>& state, const Eigen::MatrixBase<Derived>& gradient) {
  if (gradient.size() != net.num_params()) throw std::invalid_argument("apply_update: gradient size mismatch");
  if (!gradient.allFinite()) throw std::domain_error("apply_update: non-finite gradient");
  if (state.m.size() != net.num_params()) {
    state.m = Vec<Scalar>::Zero(net.num_params());
    state.v = Vec<Scalar>::Zero(net.num_params());
  }
  ++state.step;
  state.m = state.beta1 * state.m + (Scalar(1) - state.beta1) * gradient;
  state.v = state.beta2 * state.v + (Scalar(1) - state.beta2) * gradient.cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(state.beta1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(state.beta2, static_cast<Scalar>(state.step));
  net.params().array() -= state.learning_rate * (state.m.array() / c1) /
                          ((state.v.array() / c2).sqrt() + state.epsilon);
}

// ---- parameter files -------------------------------------------------------
//
// Layout (all integers and floats little-endian):
//   char[4]  magic "NFMP"
//   u32      format version (1)
//   u32      output activation
//   u32      layer count L, then L x u32 layer sizes
//   u64      parameter count P, then P x f64 parameters

inline constexpr char kParamMagic[4] = {'N', 'F', 'M', 'P'};
inline constexpr std::uint32_t kParamFormatVersion = 1;

namespace detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void write_le(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("parameter file truncated");
  return to_little(v);
}

}  // namespace detail

template <typename Scalar>
void save(std::ostream& os, const Mlp<Scalar>& net) {
  os.write(kParamMagic, sizeof(kParamMagic));
  detail::write_le<std::uint32_t>(os, kParamFormatVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(net.head()));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int s : net.layer_sizes()) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s));
  detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(net.num_params()));
  for (Eigen::Index i = 0; i < net.num_params(); ++i)
    detail::write_le<double>(os, static_cast<double>(net.params()[i]));
  if (!os) throw std::runtime_error("failed writing parameter file");
}

template <typename Scalar>
Mlp<Scalar> load(std::istream& is) {
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kParamMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a parameter file (bad magic)");
  if (detail::read_le<std::uint32_t>(is) != kParamFormatVersion)
    throw std::runtime_error("unsupported parameter file version");
  const auto head = detail::read_le<std::uint32_t>(is);
  if (head > static_cast<std::uint32_t>(OutputActivation::Tanh))
    throw std::runtime_error("unknown output activation in parameter file");
  const auto layer_count = detail::read_le<std::uint32_t>(is);
  if (layer_count < 2 || layer_count > 64) throw std::runtime_error("bad layer count in parameter file");
  std::vector<int> sizes(layer_count);
  for (auto& s : sizes) s = static_cast<int>(detail::read_le<std::uint32_t>(is));
  Mlp<Scalar> net(sizes, static_cast<OutputActivation>(head));
  if (detail::read_le<std::uint64_t>(is) != static_cast<std::uint64_t>(net.num_params()))
    throw std::runtime_error("parameter count does not match architecture");
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    const double v = detail::read_le<double>(is);
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value in parameter file");
    net.params()[i] = static_cast<Scalar>(v);
  }
  return net;
}

template <typename Scalar>
void save_file(const std::filesystem::path& path, const Mlp<Scalar>& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save(os, net);
}

template <typename Scalar>
Mlp<Scalar> load_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return load<Scalar>(is);
}

using MlpD = Mlp<double>;

}  // namespace nfvs::nn
