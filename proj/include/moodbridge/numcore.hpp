#pragma once

// Dense f64 numerics: matrices, ReLU MLPs with manual backprop, Adam, and
// the two distance functions used by the embedding spaces.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "moodbridge/error.hpp"
#include "moodbridge/rng.hpp"

namespace moodbridge {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m;
    m.rows_ = rows.size();
    m.cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
    for (const auto& r : rows) {
      if (r.size() != m.cols_) fail(ErrorKind::Dimension, "ragged matrix literal");
      m.data_.insert(m.data_.end(), r.begin(), r.end());
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::Dimension, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

inline void axpy(std::span<double> y, double alpha, std::span<const double> x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

/// Returns v / ||v||; throws on a zero-norm input.
inline Vector normalized(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n))
    fail(ErrorKind::Numeric, "cannot normalize a zero-norm vector");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

/// 1 - cos(u, v), in [0, 2].
inline double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail(ErrorKind::Dimension, "cosine_distance: length mismatch");
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) fail(ErrorKind::Numeric, "cosine_distance: zero-norm input");
  const double c = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
  return 1.0 - c;
}

inline double euclidean_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail(ErrorKind::Dimension, "euclidean_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// MLP

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Fully connected network; ReLU between layers, identity on the output.
struct MLPParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.empty()) fail(ErrorKind::Dimension, "MLP must have at least one layer");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.bias.size() != l.weight.rows())
        fail(ErrorKind::Dimension, "layer " + std::to_string(k) + ": bias length does not match weight rows");
      if (k > 0 && layers[k - 1].weight.rows() != l.weight.cols())
        fail(ErrorKind::Dimension, "layer " + std::to_string(k) + ": input dim " +
                                       std::to_string(l.weight.cols()) + " does not chain with previous output dim " +
                                       std::to_string(layers[k - 1].weight.rows()));
    }
  }

  friend bool operator==(const MLPParams&, const MLPParams&) = default;
};

/// Glorot-uniform weights, zero biases. `dims` = {in, hidden..., out}.
inline MLPParams make_mlp(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) fail(ErrorKind::InvalidArgument, "make_mlp needs at least input and output dims");
  MLPParams p;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t in = dims[k], out = dims[k + 1];
    if (in == 0 || out == 0) fail(ErrorKind::InvalidArgument, "make_mlp: zero layer width");
    Layer l{Matrix(out, in), Vector(out, 0.0)};
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : l.weight.values()) w = rng.uniform(-a, a);
    p.layers.push_back(std::move(l));
  }
  return p;
}

inline MLPParams make_mlp(std::initializer_list<std::size_t> dims, Rng& rng) {
  return make_mlp(std::span<const std::size_t>(dims.begin(), dims.size()), rng);
}

inline MLPParams zeros_like(const MLPParams& p) {
  MLPParams z;
  for (const auto& l : p.layers)
    z.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), Vector(l.bias.size(), 0.0)});
  return z;
}

inline bool same_shape(const MLPParams& a, const MLPParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (!a.layers[k].weight.same_shape(b.layers[k].weight)) return false;
    if (a.layers[k].bias.size() != b.layers[k].bias.size()) return false;
  }
  return true;
}

template <class Fn>
void for_each_value(MLPParams& p, Fn&& fn) {
  for (auto& l : p.layers) {
    for (double& w : l.weight.values()) fn(w);
    for (double& b : l.bias) fn(b);
  }
}

template <class Fn>
void for_each_value(const MLPParams& p, Fn&& fn) {
  for (const auto& l : p.layers) {
    for (double w : l.weight.values()) fn(w);
    for (double b : l.bias) fn(b);
  }
}

inline void accumulate(MLPParams& into, const MLPParams& g, double scale = 1.0) {
  if (!same_shape(into, g)) fail(ErrorKind::Dimension, "accumulate: shape mismatch");
  for (std::size_t k = 0; k < into.layers.size(); ++k) {
    axpy(into.layers[k].weight.values(), scale, g.layers[k].weight.values());
    axpy(into.layers[k].bias, scale, g.layers[k].bias);
  }
}

/// Per-layer inputs and pre-activations retained for the backward pass.
struct MLPCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre_activations;

  std::size_t batch_size() const { return inputs.empty() ? 0 : inputs.front().rows(); }
};

struct BatchForward {
  Matrix output;
  MLPCache cache;
};

struct Forward {
  Vector output;
  MLPCache cache;
};

struct BatchBackward {
  MLPParams grads;
  Matrix input_grad;
};

/// Forward pass over a batch (one sample per row).
inline BatchForward mlp_forward(const MLPParams& params, const Matrix& x) {
  params.validate();
  BatchForward result;
  Matrix current = x;
  const std::size_t batch = x.rows();
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const Layer& layer = params.layers[k];
    if (current.cols() != layer.weight.cols())
      fail(ErrorKind::Dimension, "layer " + std::to_string(k) + " expects input dim " +
                                     std::to_string(layer.weight.cols()) + ", got " +
                                     std::to_string(current.cols()));
    const std::size_t out = layer.weight.rows();
    const Matrix wt = layer.weight.transposed();
    Matrix z(batch, out);
    for (std::size_t b = 0; b < batch; ++b) {
      auto zrow = z.row(b);
      std::copy(layer.bias.begin(), layer.bias.end(), zrow.begin());
      const auto xrow = current.row(b);
      for (std::size_t i = 0; i < xrow.size(); ++i) {
        if (xrow[i] != 0.0) axpy(zrow, xrow[i], wt.row(i));
      }
    }
    result.cache.inputs.push_back(std::move(current));
    result.cache.pre_activations.push_back(z);
    if (k + 1 < params.layers.size()) {
      for (double& v : z.values()) v = v > 0.0 ? v : 0.0;
    }
    current = std::move(z);
  }
  if (!all_finite(current.values())) fail(ErrorKind::Numeric, "mlp_forward produced a non-finite value");
  result.output = std::move(current);
  return result;
}

inline Forward mlp_forward(const MLPParams& params, std::span<const double> x) {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.row(0).begin());
  BatchForward f = mlp_forward(params, m);
  auto out = f.output.row(0);
  return {Vector(out.begin(), out.end()), std::move(f.cache)};
}

inline BatchBackward mlp_backward(const MLPParams& params, const MLPCache& cache, const Matrix& grad_output) {
  params.validate();
  const std::size_t n_layers = params.layers.size();
  if (cache.inputs.size() != n_layers || cache.pre_activations.size() != n_layers)
    fail(ErrorKind::Dimension, "mlp_backward: cache does not match the network depth (stale cache?)");
  const std::size_t batch = cache.batch_size();
  for (std::size_t k = 0; k < n_layers; ++k) {
    const auto& w = params.layers[k].weight;
    if (cache.inputs[k].cols() != w.cols() || cache.pre_activations[k].cols() != w.rows() ||
        cache.inputs[k].rows() != batch || cache.pre_activations[k].rows() != batch)
      fail(ErrorKind::Dimension, "mlp_backward: cache shape mismatch at layer " + std::to_string(k));
  }
  if (grad_output.rows() != batch || grad_output.cols() != params.output_dim())
    fail(ErrorKind::Dimension, "mlp_backward: grad_output shape does not match the forward batch");

  BatchBackward result{zeros_like(params), {}};
  Matrix delta = grad_output;
  for (std::size_t k = n_layers; k-- > 0;) {
    const Layer& layer = params.layers[k];
    if (k + 1 < n_layers) {
      const auto& pre = cache.pre_activations[k];
      auto dv = delta.values();
      const auto pv = pre.values();
      for (std::size_t i = 0; i < dv.size(); ++i)
        if (!(pv[i] > 0.0)) dv[i] = 0.0;
    }
    Layer& g = result.grads.layers[k];
    const Matrix& input = cache.inputs[k];
    Matrix prev(batch, layer.weight.cols());
    for (std::size_t b = 0; b < batch; ++b) {
      const auto drow = delta.row(b);
      const auto xrow = input.row(b);
      auto prow = prev.row(b);
      for (std::size_t o = 0; o < drow.size(); ++o) {
        const double d = drow[o];
        if (d == 0.0) continue;
        axpy(g.weight.row(o), d, xrow);
        g.bias[o] += d;
        axpy(prow, d, layer.weight.row(o));
      }
    }
    delta = std::move(prev);
  }
  result.input_grad = std::move(delta);
  return result;
}

inline BatchBackward mlp_backward(const MLPParams& params, const MLPCache& cache, std::span<const double> grad_output) {
  Matrix g(1, grad_output.size());
  std::copy(grad_output.begin(), grad_output.end(), g.row(0).begin());
  return mlp_backward(params, cache, g);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<MLPParams> m;
  std::vector<MLPParams> v;
};

inline AdamState make_adam_state(std::span<const MLPParams* const> params, const AdamConfig& config) {
  AdamState s{config, 0, {}, {}};
  for (const MLPParams* p : params) {
    s.m.push_back(zeros_like(*p));
    s.v.push_back(zeros_like(*p));
  }
  return s;
}

/// One bias-corrected Adam update over a list of parameter blocks.
inline void adam_step(std::span<MLPParams* const> params, std::span<const MLPParams> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    fail(ErrorKind::Dimension, "adam_step: parameter/gradient/state block counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!same_shape(*params[i], grads[i]) || !same_shape(*params[i], state.m[i]))
      fail(ErrorKind::Dimension, "adam_step: shape mismatch in block " + std::to_string(i));
  }
  const AdamConfig& c = state.config;
  if (c.lr < 0.0) fail(ErrorKind::InvalidArgument, "adam_step: negative learning rate");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i]->layers.size(); ++k) {
      Layer& p = params[i]->layers[k];
      const Layer& g = grads[i].layers[k];
      update(p.weight.values(), g.weight.values(), state.m[i].layers[k].weight.values(),
             state.v[i].layers[k].weight.values());
      update(p.bias, g.bias, state.m[i].layers[k].bias, state.v[i].layers[k].bias);
    }
  }
}

inline void adam_step(MLPParams& params, const MLPParams& grads, AdamState& state) {
  MLPParams* p[] = {&params};
  adam_step(std::span<MLPParams* const>(p), std::span<const MLPParams>(&grads, 1), state);
}

}  // namespace moodbridge
