#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pcotta/common.hpp"
#include "pcotta/tensor.hpp"

namespace pcotta {

/// A named learnable (or frozen) array. Gradients accumulate across backward
/// passes until the optimizer consumes and zeroes them.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape), trainable(train) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

template <typename T>
class Tape;

/// Handle to a tape node. Cheap to copy; valid for the tape's lifetime.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& val() const { return tape->value(id); }
  T scalar() const { return val().data.at(0); }
};

/// Reverse-mode tape. Records differentiable operations in execution order;
/// backward() replays them in exact reverse. Single-writer: one training or
/// adaptation step owns a tape exclusively.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool needs_grad = false;
    Parameter<T>* param = nullptr;
    std::function<void(Tape&, int)> back;  // (tape, own node id)
  };

  Var<T> push(Tensor<T> value, bool needs_grad, std::function<void(Tape&, int)> back,
              Parameter<T>* param = nullptr) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.param = param;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var<T>{this, int(nodes_.size()) - 1};
  }

  const Tensor<T>& value(int id) const { return nodes_[size_t(id)].value; }
  Node& node(int id) { return nodes_[size_t(id)]; }
  size_t node_count() const { return nodes_.size(); }
  bool needs_grad(int id) const { return nodes_[size_t(id)].needs_grad; }

  /// Gradient buffer of a node, or nullptr when it does not need gradients.
  Tensor<T>* grad_target(int id) {
    Node& n = nodes_[size_t(id)];
    if (!n.needs_grad) return nullptr;
    ensure_grad(n);
    return &n.grad;
  }

  const Tensor<T>& grad(int id) {
    Node& n = nodes_[size_t(id)];
    ensure_grad(n);
    return n.grad;
  }

  /// Reverse sweep from a scalar loss. Trainable parameters referenced by
  /// leaves receive their gradients; frozen ones are left untouched (zero).
  void backward(Var<T> loss) {
    if (loss.tape != this) throw contract_error("backward: loss from a different tape");
    if (nodes_[size_t(loss.id)].value.size() != 1)
      throw contract_error("backward: loss must be scalar, got shape " +
                           Tensor<T>::shape_str(nodes_[size_t(loss.id)].value.shape));
    if (backward_done_) throw contract_error("backward: tape already consumed; run a new forward");
    backward_done_ = true;

    Node& ln = nodes_[size_t(loss.id)];
    ensure_grad(ln);
    ln.grad.data[0] = T(1);

    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (!n.has_grad || !n.needs_grad) continue;
      if (n.back) n.back(*this, id);
      if (n.param && n.param->trainable) {
        for (size_t i = 0; i < n.grad.data.size(); ++i) n.param->grad.data[i] += n.grad.data[i];
      }
    }
  }

 private:
  void ensure_grad(Node& n) {
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape);
      n.has_grad = true;
    }
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Leaves

template <typename T>
Var<T> leaf(Tape<T>& t, Parameter<T>& p) {
  return t.push(p.value, p.trainable, nullptr, &p);
}

template <typename T>
Var<T> constant(Tape<T>& t, Tensor<T> v) {
  return t.push(std::move(v), false, nullptr);
}

template <typename T>
Var<T> constant_scalar(Tape<T>& t, T v) {
  return constant(t, Tensor<T>::scalar(v));
}

namespace detail {

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a.val().same_shape(b.val()))
    throw shape_error(std::string(op) + ": shape mismatch " + Tensor<T>::shape_str(a.val().shape) +
                      " vs " + Tensor<T>::shape_str(b.val().shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "add");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  if (auto* ga = tp.grad_target(ai))
                    for (size_t i = 0; i < go.data.size(); ++i) ga->data[i] += go.data[i];
                  if (auto* gb = tp.grad_target(bi))
                    for (size_t i = 0; i < go.data.size(); ++i) gb->data[i] += go.data[i];
                });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "sub");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  if (auto* ga = tp.grad_target(ai))
                    for (size_t i = 0; i < go.data.size(); ++i) ga->data[i] += go.data[i];
                  if (auto* gb = tp.grad_target(bi))
                    for (size_t i = 0; i < go.data.size(); ++i) gb->data[i] -= go.data[i];
                });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "mul");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  const Tensor<T>& av = tp.value(ai);
                  const Tensor<T>& bv2 = tp.value(bi);
                  if (auto* ga = tp.grad_target(ai))
                    for (size_t i = 0; i < go.data.size(); ++i)
                      ga->data[i] += go.data[i] * bv2.data[i];
                  if (auto* gb = tp.grad_target(bi))
                    for (size_t i = 0; i < go.data.size(); ++i)
                      gb->data[i] += go.data[i] * av.data[i];
                });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "div");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  const Tensor<T>& bv = b.val();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= bv.data[i];
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  const Tensor<T>& av = tp.value(ai);
                  const Tensor<T>& bv2 = tp.value(bi);
                  if (auto* ga = tp.grad_target(ai))
                    for (size_t i = 0; i < go.data.size(); ++i)
                      ga->data[i] += go.data[i] / bv2.data[i];
                  if (auto* gb = tp.grad_target(bi))
                    for (size_t i = 0; i < go.data.size(); ++i)
                      gb->data[i] -= go.data[i] * av.data[i] / (bv2.data[i] * bv2.data[i]);
                });
}

/// out = a * c for a compile-time-known scalar c.
template <typename T>
Var<T> scale(Var<T> a, T c) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  for (T& v : out.data) v *= c;
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, c](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i) ga->data[i] += go.data[i] * c;
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T c) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  for (T& v : out.data) v += c;
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i) ga->data[i] += go.data[i];
  });
}

template <typename T>
Var<T> neg(Var<T> a) {
  return scale(a, T(-1));
}

/// out = s * a where s is a one-element var (tensor-by-tape-scalar product).
template <typename T>
Var<T> scale_by(Var<T> s, Var<T> a) {
  if (s.val().size() != 1) throw shape_error("scale_by: scale must be one element");
  Tape<T>& t = *a.tape;
  T sv = s.val().data[0];
  Tensor<T> out = a.val();
  for (T& v : out.data) v *= sv;
  int si = s.id, ai = a.id;
  return t.push(std::move(out), t.needs_grad(si) || t.needs_grad(ai),
                [si, ai](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  const Tensor<T>& av = tp.value(ai);
                  T sv2 = tp.value(si).data[0];
                  if (auto* gs = tp.grad_target(si)) {
                    double acc = 0;
                    for (size_t i = 0; i < go.data.size(); ++i)
                      acc += double(go.data[i]) * double(av.data[i]);
                    gs->data[0] += T(acc);
                  }
                  if (auto* ga = tp.grad_target(ai))
                    for (size_t i = 0; i < go.data.size(); ++i) ga->data[i] += go.data[i] * sv2;
                });
}

// ---------------------------------------------------------------------------
// Matrix ops

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.val();
  const Tensor<T>& bv = b.val();
  if (av.cols() != bv.rows())
    throw shape_error("matmul: inner dimensions disagree, " + Tensor<T>::shape_str(av.shape) +
                      " x " + Tensor<T>::shape_str(bv.shape));
  int m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i) {
    const T* arow = &av.data[size_t(i) * k];
    T* orow = &out.data[size_t(i) * n];
    for (int kk = 0; kk < k; ++kk) {
      T aik = arow[kk];
      const T* brow = &bv.data[size_t(kk) * n];
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  Tape<T>& t = *a.tape;
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi, m, k, n](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  const Tensor<T>& av2 = tp.value(ai);
                  const Tensor<T>& bv2 = tp.value(bi);
                  if (auto* ga = tp.grad_target(ai)) {
                    // dA += dC * B^T
                    for (int i = 0; i < m; ++i)
                      for (int j = 0; j < n; ++j) {
                        T g = go.data[size_t(i) * n + j];
                        if (g == T(0)) continue;
                        const T* brow = &bv2.data[0];
                        for (int kk = 0; kk < k; ++kk)
                          ga->data[size_t(i) * k + kk] += g * brow[size_t(kk) * n + j];
                      }
                  }
                  if (auto* gb = tp.grad_target(bi)) {
                    // dB += A^T * dC
                    for (int i = 0; i < m; ++i) {
                      const T* arow = &av2.data[size_t(i) * k];
                      const T* grow = &go.data[size_t(i) * n];
                      for (int kk = 0; kk < k; ++kk) {
                        T aik = arow[kk];
                        if (aik == T(0)) continue;
                        T* gbrow = &gb->data[size_t(kk) * n];
                        for (int j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
                      }
                    }
                  }
                });
}

/// Broadcast-add a length-n row vector to every row of an m-by-n matrix.
template <typename T>
Var<T> add_rowvec(Var<T> x, Var<T> b) {
  const Tensor<T>& xv = x.val();
  const Tensor<T>& bv = b.val();
  int m = xv.rows(), n = xv.cols();
  if (bv.size() != n)
    throw shape_error("add_rowvec: vector length " + std::to_string(bv.size()) +
                      " vs row width " + std::to_string(n));
  Tensor<T> out = xv;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[size_t(i) * n + j] += bv.data[size_t(j)];
  Tape<T>& t = *x.tape;
  int xi = x.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(xi) || t.needs_grad(bi),
                [xi, bi, m, n](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  if (auto* gx = tp.grad_target(xi))
                    for (size_t i = 0; i < go.data.size(); ++i) gx->data[i] += go.data[i];
                  if (auto* gb = tp.grad_target(bi))
                    for (int i = 0; i < m; ++i)
                      for (int j = 0; j < n; ++j) gb->data[size_t(j)] += go.data[size_t(i) * n + j];
                });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <typename T>
Var<T> tanh_op(Var<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  for (T& v : out.data) v = std::tanh(v);
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    const Tensor<T>& y = tp.value(self);
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i)
        ga->data[i] += go.data[i] * (T(1) - y.data[i] * y.data[i]);
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  for (T& v : out.data) {
    // split by sign for stability
    if (v >= T(0)) {
      T e = std::exp(-v);
      v = T(1) / (T(1) + e);
    } else {
      T e = std::exp(v);
      v = e / (T(1) + e);
    }
  }
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    const Tensor<T>& y = tp.value(self);
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i)
        ga->data[i] += go.data[i] * y.data[i] * (T(1) - y.data[i]);
  });
}

template <typename T>
Var<T> exp_op(Var<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  for (T& v : out.data) v = std::exp(v);
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    const Tensor<T>& y = tp.value(self);
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i) ga->data[i] += go.data[i] * y.data[i];
  });
}

template <typename T>
Var<T> log_op(Var<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  for (T& v : out.data) v = std::log(v);
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    const Tensor<T>& x = tp.value(ai);
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i) ga->data[i] += go.data[i] / x.data[i];
  });
}

template <typename T>
Var<T> sqrt_op(Var<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  for (T& v : out.data) v = std::sqrt(v);
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    const Tensor<T>& y = tp.value(self);
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i)
        ga->data[i] += go.data[i] / (T(2) * y.data[i]);
  });
}

/// max(a, c) elementwise; subgradient zero on the clamped side.
template <typename T>
Var<T> clamp_min(Var<T> a, T c) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.val();
  for (T& v : out.data) v = std::max(v, c);
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, c](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    const Tensor<T>& x = tp.value(ai);
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i)
        if (x.data[i] >= c) ga->data[i] += go.data[i];
  });
}

// ---------------------------------------------------------------------------
// Row/last-dimension structured ops

/// Unit-normalize each last-dimension vector; zero vectors stay zero.
template <typename T>
Var<T> normalize_last(Var<T> a) {
  const Tensor<T>& av = a.val();
  int m = av.rows(), n = av.cols();
  Tensor<T> out = av;
  for (int i = 0; i < m; ++i) {
    T* row = &out.data[size_t(i) * n];
    double s = 0;
    for (int j = 0; j < n; ++j) s += double(row[j]) * double(row[j]);
    T norm = T(std::sqrt(s));
    if (norm > T(0))
      for (int j = 0; j < n; ++j) row[j] /= norm;
  }
  Tape<T>& t = *a.tape;
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, m, n](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    const Tensor<T>& y = tp.value(self);
    const Tensor<T>& x = tp.value(ai);
    auto* ga = tp.grad_target(ai);
    if (!ga) return;
    for (int i = 0; i < m; ++i) {
      const T* xr = &x.data[size_t(i) * n];
      const T* yr = &y.data[size_t(i) * n];
      const T* gr = &go.data[size_t(i) * n];
      double s = 0;
      for (int j = 0; j < n; ++j) s += double(xr[j]) * double(xr[j]);
      T norm = T(std::sqrt(s));
      if (norm == T(0)) continue;
      double dot = 0;
      for (int j = 0; j < n; ++j) dot += double(yr[j]) * double(gr[j]);
      for (int j = 0; j < n; ++j)
        ga->data[size_t(i) * n + j] += (gr[j] - yr[j] * T(dot)) / norm;
    }
  });
}

/// Softmax along the last dimension, stabilized by max subtraction.
template <typename T>
Var<T> softmax_last(Var<T> a) {
  const Tensor<T>& av = a.val();
  int m = av.rows(), n = av.cols();
  Tensor<T> out = av;
  for (int i = 0; i < m; ++i) {
    T* row = &out.data[size_t(i) * n];
    T mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (int j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      denom += double(row[j]);
    }
    for (int j = 0; j < n; ++j) row[j] = T(double(row[j]) / denom);
  }
  Tape<T>& t = *a.tape;
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, m, n](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    const Tensor<T>& y = tp.value(self);
    auto* ga = tp.grad_target(ai);
    if (!ga) return;
    for (int i = 0; i < m; ++i) {
      const T* yr = &y.data[size_t(i) * n];
      const T* gr = &go.data[size_t(i) * n];
      double dot = 0;
      for (int j = 0; j < n; ++j) dot += double(yr[j]) * double(gr[j]);
      for (int j = 0; j < n; ++j)
        ga->data[size_t(i) * n + j] += yr[j] * (gr[j] - T(dot));
    }
  });
}

/// Per-row standardization over the last dimension followed by a learned
/// channel scale: out = gamma * (x - mean) / sqrt(var + eps).
template <typename T>
Var<T> layernorm_rows(Var<T> x, Var<T> gamma, T eps = T(1e-5)) {
  const Tensor<T>& xv = x.val();
  int m = xv.rows(), n = xv.cols();
  if (gamma.val().size() != n) throw shape_error("layernorm_rows: gamma width mismatch");
  Tensor<T> out({m, n});
  const Tensor<T>& gv = gamma.val();
  for (int i = 0; i < m; ++i) {
    const T* xr = &xv.data[size_t(i) * n];
    double mean = 0;
    for (int j = 0; j < n; ++j) mean += double(xr[j]);
    mean /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) {
      double d = double(xr[j]) - mean;
      var += d * d;
    }
    var /= n;
    T inv = T(1.0 / std::sqrt(var + double(eps)));
    for (int j = 0; j < n; ++j)
      out.data[size_t(i) * n + j] = gv.data[size_t(j)] * (xr[j] - T(mean)) * inv;
  }
  Tape<T>& t = *x.tape;
  int xi = x.id, gi = gamma.id;
  return t.push(std::move(out), t.needs_grad(xi) || t.needs_grad(gi),
                [xi, gi, m, n, eps](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  const Tensor<T>& xv2 = tp.value(xi);
                  const Tensor<T>& gv2 = tp.value(gi);
                  auto* gx = tp.grad_target(xi);
                  auto* gg = tp.grad_target(gi);
                  for (int i = 0; i < m; ++i) {
                    const T* xr = &xv2.data[size_t(i) * n];
                    const T* gr = &go.data[size_t(i) * n];
                    double mean = 0;
                    for (int j = 0; j < n; ++j) mean += double(xr[j]);
                    mean /= n;
                    double var = 0;
                    for (int j = 0; j < n; ++j) {
                      double d = double(xr[j]) - mean;
                      var += d * d;
                    }
                    var /= n;
                    double inv = 1.0 / std::sqrt(var + double(eps));
                    // xhat and dL/dxhat
                    double sum_g = 0, sum_gx = 0;
                    for (int j = 0; j < n; ++j) {
                      double xh = (double(xr[j]) - mean) * inv;
                      double g = double(gr[j]) * double(gv2.data[size_t(j)]);
                      sum_g += g;
                      sum_gx += g * xh;
                      if (gg) gg->data[size_t(j)] += T(double(gr[j]) * xh);
                    }
                    if (gx) {
                      for (int j = 0; j < n; ++j) {
                        double xh = (double(xr[j]) - mean) * inv;
                        double g = double(gr[j]) * double(gv2.data[size_t(j)]);
                        gx->data[size_t(i) * n + j] +=
                            T(inv * (g - sum_g / n - xh * sum_gx / n));
                      }
                    }
                  }
                });
}

/// Column-wise mean over rows: m-by-n -> 1-by-n.
template <typename T>
Var<T> mean_rows(Var<T> a) {
  const Tensor<T>& av = a.val();
  int m = av.rows(), n = av.cols();
  Tensor<T> out({1, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[size_t(j)] += av.data[size_t(i) * n + j];
  for (int j = 0; j < n; ++j) out.data[size_t(j)] /= T(m);
  Tape<T>& t = *a.tape;
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, m, n](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    if (auto* ga = tp.grad_target(ai))
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ga->data[size_t(i) * n + j] += go.data[size_t(j)] / T(m);
  });
}

/// Repeat a 1-by-n row m times.
template <typename T>
Var<T> broadcast_rows(Var<T> v, int m) {
  const Tensor<T>& vv = v.val();
  int n = int(vv.size());
  Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[size_t(i) * n + j] = vv.data[size_t(j)];
  Tape<T>& t = *v.tape;
  int vi = v.id;
  return t.push(std::move(out), t.needs_grad(vi), [vi, m, n](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    if (auto* gv = tp.grad_target(vi))
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gv->data[size_t(j)] += go.data[size_t(i) * n + j];
  });
}

/// Max-pool blocks of `group` consecutive rows: (m*group)-by-n -> m-by-n.
/// Ties break to the lowest row index.
template <typename T>
Var<T> maxpool_rows(Var<T> a, int group) {
  const Tensor<T>& av = a.val();
  int total = av.rows(), n = av.cols();
  if (group <= 0 || total % group != 0)
    throw shape_error("maxpool_rows: row count " + std::to_string(total) +
                      " not divisible by group " + std::to_string(group));
  int m = total / group;
  Tensor<T> out({m, n});
  for (int p = 0; p < m; ++p)
    for (int j = 0; j < n; ++j) {
      T best = av.data[size_t(p) * group * n + j];
      for (int r = 1; r < group; ++r)
        best = std::max(best, av.data[(size_t(p) * group + r) * n + j]);
      out.data[size_t(p) * n + j] = best;
    }
  Tape<T>& t = *a.tape;
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, m, n, group](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    const Tensor<T>& x = tp.value(ai);
    auto* ga = tp.grad_target(ai);
    if (!ga) return;
    for (int p = 0; p < m; ++p)
      for (int j = 0; j < n; ++j) {
        int arg = 0;
        T best = x.data[size_t(p) * group * n + j];
        for (int r = 1; r < group; ++r) {
          T v = x.data[(size_t(p) * group + r) * n + j];
          if (v > best) {
            best = v;
            arg = r;
          }
        }
        ga->data[(size_t(p) * group + arg) * n + j] += go.data[size_t(p) * n + j];
      }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum_all(Var<T> a) {
  const Tensor<T>& av = a.val();
  double s = 0;
  for (T v : av.data) s += double(v);
  Tape<T>& t = *a.tape;
  int ai = a.id;
  return t.push(Tensor<T>::scalar(T(s)), t.needs_grad(ai), [ai](Tape<T>& tp, int self) {
    T g = tp.node(self).grad.data[0];
    if (auto* ga = tp.grad_target(ai))
      for (T& v : ga->data) v += g;
  });
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  int64_t n = a.val().size();
  return scale(sum_all(a), T(1) / T(n));
}

/// Maximum over all entries; ties break to the lowest flat index.
template <typename T>
Var<T> max_all(Var<T> a) {
  const Tensor<T>& av = a.val();
  int64_t arg = 0;
  T best = av.data[0];
  for (int64_t i = 1; i < av.size(); ++i)
    if (av.data[size_t(i)] > best) {
      best = av.data[size_t(i)];
      arg = i;
    }
  Tape<T>& t = *a.tape;
  int ai = a.id;
  return t.push(Tensor<T>::scalar(best), t.needs_grad(ai), [ai, arg](Tape<T>& tp, int self) {
    T g = tp.node(self).grad.data[0];
    if (auto* ga = tp.grad_target(ai)) ga->data[size_t(arg)] += g;
  });
}

// ---------------------------------------------------------------------------
// Layout ops

template <typename T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
  const Tensor<T>& av = a.val();
  if (Tensor<T>::count(shape) != av.size())
    throw shape_error("reshape: cannot view " + Tensor<T>::shape_str(av.shape) + " as " +
                      Tensor<T>::shape_str(shape));
  Tensor<T> out(shape, av.data);
  Tape<T>& t = *a.tape;
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i) ga->data[i] += go.data[i];
  });
}

template <typename T>
Var<T> slice_rows(Var<T> a, int r0, int nrows) {
  const Tensor<T>& av = a.val();
  int m = av.rows(), n = av.cols();
  if (r0 < 0 || nrows < 0 || r0 + nrows > m)
    throw shape_error("slice_rows: range [" + std::to_string(r0) + "," +
                      std::to_string(r0 + nrows) + ") out of " + std::to_string(m) + " rows");
  Tensor<T> out({nrows, n});
  std::copy(av.data.begin() + size_t(r0) * n, av.data.begin() + size_t(r0 + nrows) * n,
            out.data.begin());
  Tape<T>& t = *a.tape;
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, r0, n](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    if (auto* ga = tp.grad_target(ai))
      for (size_t i = 0; i < go.data.size(); ++i) ga->data[size_t(r0) * n + i] += go.data[i];
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw contract_error("concat_rows: empty input");
  int n = parts[0].val().cols();
  int m = 0;
  bool ng = false;
  for (const auto& p : parts) {
    if (p.val().cols() != n)
      throw shape_error("concat_rows: column mismatch " + std::to_string(p.val().cols()) +
                        " vs " + std::to_string(n));
    m += p.val().rows();
    ng = ng || p.tape->needs_grad(p.id);
  }
  Tensor<T> out({m, n});
  size_t off = 0;
  std::vector<int> ids;
  std::vector<int> row_counts;
  for (const auto& p : parts) {
    const Tensor<T>& pv = p.val();
    std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + off);
    off += pv.data.size();
    ids.push_back(p.id);
    row_counts.push_back(pv.rows());
  }
  Tape<T>& t = *parts[0].tape;
  return t.push(std::move(out), ng, [ids, row_counts, n](Tape<T>& tp, int self) {
    const Tensor<T>& go = tp.node(self).grad;
    size_t off2 = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      size_t cnt = size_t(row_counts[k]) * n;
      if (auto* gp = tp.grad_target(ids[k]))
        for (size_t i = 0; i < cnt; ++i) gp->data[i] += go.data[off2 + i];
      off2 += cnt;
    }
  });
}

/// Replace rows flagged in `mask` with a learned 1-by-n token row.
template <typename T>
Var<T> row_replace(Var<T> x, const std::vector<uint8_t>& mask, Var<T> token) {
  const Tensor<T>& xv = x.val();
  int m = xv.rows(), n = xv.cols();
  if (int(mask.size()) != m)
    throw shape_error("row_replace: mask length " + std::to_string(mask.size()) + " vs " +
                      std::to_string(m) + " rows");
  if (token.val().size() != n) throw shape_error("row_replace: token width mismatch");
  Tensor<T> out = xv;
  const Tensor<T>& tv = token.val();
  for (int i = 0; i < m; ++i)
    if (mask[size_t(i)])
      for (int j = 0; j < n; ++j) out.data[size_t(i) * n + j] = tv.data[size_t(j)];
  Tape<T>& t = *x.tape;
  int xi = x.id, ti = token.id;
  return t.push(std::move(out), t.needs_grad(xi) || t.needs_grad(ti),
                [xi, ti, mask, m, n](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  auto* gx = tp.grad_target(xi);
                  auto* gt = tp.grad_target(ti);
                  for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                      T g = go.data[size_t(i) * n + j];
                      if (mask[size_t(i)]) {
                        if (gt) gt->data[size_t(j)] += g;
                      } else if (gx) {
                        gx->data[size_t(i) * n + j] += g;
                      }
                    }
                });
}

/// Add rows of `y` into `x` only at positions flagged in `mask`.
template <typename T>
Var<T> row_add_masked(Var<T> x, Var<T> y, const std::vector<uint8_t>& mask) {
  detail::check_same_shape(x, y, "row_add_masked");
  const Tensor<T>& xv = x.val();
  int m = xv.rows(), n = xv.cols();
  if (int(mask.size()) != m) throw shape_error("row_add_masked: mask length mismatch");
  Tensor<T> out = xv;
  const Tensor<T>& yv = y.val();
  for (int i = 0; i < m; ++i)
    if (mask[size_t(i)])
      for (int j = 0; j < n; ++j) out.data[size_t(i) * n + j] += yv.data[size_t(i) * n + j];
  Tape<T>& t = *x.tape;
  int xi = x.id, yi = y.id;
  return t.push(std::move(out), t.needs_grad(xi) || t.needs_grad(yi),
                [xi, yi, mask, m, n](Tape<T>& tp, int self) {
                  const Tensor<T>& go = tp.node(self).grad;
                  auto* gx = tp.grad_target(xi);
                  auto* gy = tp.grad_target(yi);
                  for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                      T g = go.data[size_t(i) * n + j];
                      if (gx) gx->data[size_t(i) * n + j] += g;
                      if (gy && mask[size_t(i)]) gy->data[size_t(i) * n + j] += g;
                    }
                });
}

// ---------------------------------------------------------------------------
// Chamfer distance (fused)

/// Squared-distance Chamfer between predicted points (n-by-3, differentiable)
/// and fixed target points (k-by-3). Nearest-neighbor ties break to the
/// lowest index; the assignment is treated as locally constant in backward.
template <typename T>
Var<T> chamfer(Var<T> pred, const Tensor<T>& target) {
  const Tensor<T>& pv = pred.val();
  if (pv.cols() != 3 || target.cols() != 3)
    throw shape_error("chamfer: point arrays must be n-by-3");
  int n = pv.rows(), k = target.rows();
  if (n == 0 || k == 0) throw contract_error("chamfer: empty point cloud");

  std::vector<int> nn_pred(static_cast<size_t>(n));    // nearest target per predicted point
  std::vector<int> nn_target(static_cast<size_t>(k));  // nearest predicted point per target
  double term1 = 0, term2 = 0;
  for (int i = 0; i < n; ++i) {
    const T* p = &pv.data[size_t(i) * 3];
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int j = 0; j < k; ++j) {
      const T* q = &target.data[size_t(j) * 3];
      double dx = double(p[0]) - double(q[0]);
      double dy = double(p[1]) - double(q[1]);
      double dz = double(p[2]) - double(q[2]);
      double d = dx * dx + dy * dy + dz * dz;
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    nn_pred[size_t(i)] = arg;
    term1 += best;
  }
  for (int j = 0; j < k; ++j) {
    const T* q = &target.data[size_t(j) * 3];
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int i = 0; i < n; ++i) {
      const T* p = &pv.data[size_t(i) * 3];
      double dx = double(q[0]) - double(p[0]);
      double dy = double(q[1]) - double(p[1]);
      double dz = double(q[2]) - double(p[2]);
      double d = dx * dx + dy * dy + dz * dz;
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    nn_target[size_t(j)] = arg;
    term2 += best;
  }
  T value = T(term1 / n + term2 / k);

  Tape<T>& t = *pred.tape;
  int pi = pred.id;
  Tensor<T> tgt = target;
  return t.push(Tensor<T>::scalar(value), t.needs_grad(pi),
                [pi, tgt = std::move(tgt), nn_pred = std::move(nn_pred),
                 nn_target = std::move(nn_target), n, k](Tape<T>& tp, int self) {
                  T g = tp.node(self).grad.data[0];
                  auto* gp = tp.grad_target(pi);
                  if (!gp) return;
                  const Tensor<T>& pv2 = tp.value(pi);
                  T c1 = g * T(2) / T(n);
                  for (int i = 0; i < n; ++i) {
                    const T* p = &pv2.data[size_t(i) * 3];
                    const T* q = &tgt.data[size_t(nn_pred[size_t(i)]) * 3];
                    for (int d = 0; d < 3; ++d)
                      gp->data[size_t(i) * 3 + d] += c1 * (p[d] - q[d]);
                  }
                  T c2 = g * T(2) / T(k);
                  for (int j = 0; j < k; ++j) {
                    int i = nn_target[size_t(j)];
                    const T* p = &pv2.data[size_t(i) * 3];
                    const T* q = &tgt.data[size_t(j) * 3];
                    for (int d = 0; d < 3; ++d)
                      gp->data[size_t(i) * 3 + d] += c2 * (p[d] - q[d]);
                  }
                });
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Max relative error between analytic gradients and central finite
/// differences over every entry of every listed parameter. The difference
/// quotient is evaluated in double regardless of T.
template <typename T>
double finite_diff_check(const std::function<Var<T>(Tape<T>&)>& f,
                         const std::vector<Parameter<T>*>& params, double eps) {
  if (eps <= 0) throw contract_error("finite_diff_check: eps must be positive");
  for (auto* p : params) p->zero_grad();
  {
    Tape<T> t;
    Var<T> loss = f(t);
    t.backward(loss);
  }
  std::vector<Tensor<T>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  auto eval = [&]() -> double {
    Tape<T> t;
    return double(f(t).scalar());
  };

  double max_rel = 0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<T>& p = *params[pi];
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      T saved = p.value.data[i];
      p.value.data[i] = T(double(saved) + eps);
      double fp = eval();
      p.value.data[i] = T(double(saved) - eps);
      double fm = eval();
      p.value.data[i] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = double(analytic[pi].data[i]);
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  for (auto* p : params) p->zero_grad();
  return max_rel;
}

}  // namespace pcotta
