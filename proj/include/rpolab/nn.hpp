// Dense tanh networks over a flat named parameter store, with exact
// reverse-mode gradients and Adam.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rpolab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown for shape or dimension mismatches between a network and its inputs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat, ordered collection of named tensors. Vectors are stored as n x 1.
///
/// Networks do not own parameters; they hold indices into a store, so the
/// same layout can be reused for gradients and optimizer moments.
class ParameterStore {
 public:
  std::size_t add(std::string name, Matrix value) {
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
    return tensors_.size() - 1;
  }

  std::size_t size() const { return tensors_.size(); }
  Matrix& operator[](std::size_t i) { return tensors_[i]; }
  const Matrix& operator[](std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    throw ConfigError("no parameter named " + name);
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
    return n;
  }

  /// Same names and shapes, every entry zero.
  ParameterStore zeros_like() const {
    ParameterStore out;
    for (std::size_t i = 0; i < size(); ++i)
      out.add(names_[i], Matrix::Zero(tensors_[i].rows(), tensors_[i].cols()));
    return out;
  }

  bool same_shape(const ParameterStore& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (tensors_[i].rows() != other[i].rows() || tensors_[i].cols() != other[i].cols())
        return false;
    return true;
  }

  bool all_finite() const {
    for (const auto& t : tensors_)
      if (!t.allFinite()) return false;
    return true;
  }

  void set_zero() {
    for (auto& t : tensors_) t.setZero();
  }

  /// Bitwise comparison, used for reproducibility checks.
  bool identical(const ParameterStore& other) const {
    if (!same_shape(other)) return false;
    for (std::size_t i = 0; i < size(); ++i)
      for (Eigen::Index k = 0; k < tensors_[i].size(); ++k)
        if (std::memcmp(tensors_[i].data() + k, other[i].data() + k, sizeof(double)) != 0)
          return false;
    return true;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& t : tensors_) s += t.squaredNorm();
    return s;
  }

  void scale(double c) {
    for (auto& t : tensors_) t *= c;
  }

  /// this += c * other
  void add_scaled(const ParameterStore& other, double c) {
    for (std::size_t i = 0; i < size(); ++i) tensors_[i] += c * other[i];
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> tensors_;
};

/// Gradients share the store's layout.
using Gradients = ParameterStore;

/// Random matrix with orthonormal rows (rows <= cols) or columns (rows > cols),
/// multiplied by `gain`. QR of a Gaussian matrix with the sign of R's diagonal
/// folded back into Q, so the result is Haar-distributed.
template <class Rng>
Matrix orthogonal_init(Eigen::Index rows, Eigen::Index cols, double gain, Rng& rng) {
  const Eigen::Index big = std::max(rows, cols);
  const Eigen::Index small = std::min(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(big, small);
  for (Eigen::Index j = 0; j < small; ++j)
    for (Eigen::Index i = 0; i < big; ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(big, small);
  const Matrix r = qr.matrixQR().topLeftCorner(small, small);
  for (Eigen::Index j = 0; j < small; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  if (rows < cols) return gain * q.transpose();
  return gain * q;
}

/// Forward-pass record needed by `Mlp::backward`.
struct MlpCache {
  /// activations[0] is the input batch; activations[k] is the output of layer k.
  std::vector<Matrix> activations;
  std::size_t owner_layers = 0;
};

/// Feed-forward network: tanh on hidden layers, identity (or tanh) on the
/// output layer. Inputs are column-major batches, one sample per column.
class Mlp {
 public:
  struct Layer {
    std::size_t weight;
    std::size_t bias;
  };

  Mlp() = default;

  /// Registers layers named `<prefix>.<k>.weight/bias` in `store`.
  /// `sizes` = {in, hidden..., out}. Hidden layers use `hidden_gain`,
  /// the last layer `output_gain`; biases start at zero.
  template <class Rng>
  static Mlp create(ParameterStore& store, const std::string& prefix,
                    const std::vector<int>& sizes, double hidden_gain, double output_gain,
                    Rng& rng) {
    if (sizes.size() < 2) throw ConfigError("an Mlp needs at least input and output sizes");
    Mlp net;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
      if (sizes[k] < 1 || sizes[k + 1] < 1) throw ConfigError("layer sizes must be positive");
      const bool last = k + 2 == sizes.size();
      const std::string base = prefix + "." + std::to_string(k);
      Layer layer;
      layer.weight = store.add(base + ".weight",
                               orthogonal_init(sizes[k + 1], sizes[k],
                                               last ? output_gain : hidden_gain, rng));
      layer.bias = store.add(base + ".bias", Matrix::Zero(sizes[k + 1], 1));
      net.layers_.push_back(layer);
    }
    return net;
  }

  /// Wraps existing tensors; checks that shapes chain.
  static Mlp from_layers(const ParameterStore& store, std::vector<Layer> layers,
                         bool tanh_output = false) {
    Mlp net;
    net.layers_ = std::move(layers);
    net.tanh_output_ = tanh_output;
    for (std::size_t k = 0; k < net.layers_.size(); ++k) {
      const Matrix& w = store[net.layers_[k].weight];
      const Matrix& b = store[net.layers_[k].bias];
      if (b.rows() != w.rows() || b.cols() != 1) throw ConfigError("bias does not match weight rows");
      if (k > 0 && w.cols() != store[net.layers_[k - 1].weight].rows())
        throw ConfigError("layer shapes do not chain");
    }
    return net;
  }

  const std::vector<Layer>& layers() const { return layers_; }
  Eigen::Index input_dim(const ParameterStore& s) const { return s[layers_.front().weight].cols(); }
  Eigen::Index output_dim(const ParameterStore& s) const { return s[layers_.back().weight].rows(); }

  Matrix forward(const ParameterStore& store, const Matrix& x, MlpCache* cache = nullptr) const {
    if (x.rows() != input_dim(store))
      throw ConfigError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                        std::to_string(input_dim(store)));
    if (cache) {
      cache->activations.clear();
      cache->activations.reserve(layers_.size() + 1);
      cache->activations.push_back(x);
      cache->owner_layers = layers_.size();
    }
    Matrix h = x;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      Matrix z = store[layers_[k].weight] * h;
      z.colwise() += store[layers_[k].bias].col(0);
      if (k + 1 < layers_.size() || tanh_output_) z = z.array().tanh().matrix();
      h = std::move(z);
      if (cache) cache->activations.push_back(h);
    }
    return h;
  }

  /// Accumulates d(sum of grad_out .* output)/d(params) into `grads` and
  /// returns the gradient with respect to the input batch.
  Matrix backward(const ParameterStore& store, const MlpCache& cache, const Matrix& grad_out,
                  Gradients& grads) const {
    if (cache.owner_layers != layers_.size() || cache.activations.size() != layers_.size() + 1)
      throw std::logic_error("Mlp::backward called with a cache from a different network");
    if (grad_out.rows() != output_dim(store) || grad_out.cols() != cache.activations.back().cols())
      throw std::logic_error("Mlp::backward: output gradient shape mismatch");
    Matrix delta = grad_out;
    for (std::size_t kk = layers_.size(); kk-- > 0;) {
      const Matrix& out = cache.activations[kk + 1];
      if (kk + 1 < layers_.size() || tanh_output_)
        delta = (delta.array() * (1.0 - out.array().square())).matrix();
      grads[layers_[kk].weight].noalias() += delta * cache.activations[kk].transpose();
      grads[layers_[kk].bias] += delta.rowwise().sum();
      delta = store[layers_[kk].weight].transpose() * delta;
    }
    return delta;
  }

 private:
  std::vector<Layer> layers_;
  bool tanh_output_ = false;
};

struct AdamState {
  ParameterStore m;
  ParameterStore v;
  long t = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;

  static AdamState for_store(const ParameterStore& store, double learning_rate) {
    AdamState s;
    s.m = store.zeros_like();
    s.v = store.zeros_like();
    s.learning_rate = learning_rate;
    return s;
  }
};

/// One bias-corrected Adam update.
inline void adam_step(ParameterStore& store, AdamState& state, const Gradients& grads) {
  if (!store.same_shape(grads) || !store.same_shape(state.m))
    throw std::logic_error("adam_step: gradient or moment shapes differ from the store");
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const double step = state.learning_rate / c1;
  const double sqrt_c2 = std::sqrt(c2);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto g = grads[i].array();
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    store[i].array() -= step * m / (v.sqrt() / sqrt_c2 + state.eps);
  }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(Gradients& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  const double coef = max_norm / (norm + 1e-6);
  if (coef < 1.0) grads.scale(coef);
  return norm;
}

}  // namespace rpolab
