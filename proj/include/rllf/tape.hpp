#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rllf/errors.hpp"
#include "rllf/tensor.hpp"

namespace rllf {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using CMapM = Eigen::Map<const EMat>;

inline MapM as_mat(Tensor& t, int64_t rows, int64_t cols) {
  return MapM(t.data(), rows, cols);
}
inline CMapM as_mat(const Tensor& t, int64_t rows, int64_t cols) {
  return CMapM(t.data(), rows, cols);
}
inline MapM grad_mat(Tensor& t, int64_t rows, int64_t cols) {
  return MapM(t.grad().data(), rows, cols);
}

// Reverse-mode tape. Operations append nodes in construction order, which is
// a topological order by definition: an op's inputs exist before its output.
// backward() walks the list once in reverse, summing gradients into shared
// inputs. The tape owns handles to every tensor it touched, so activations
// stay alive until the tape is cleared or destroyed.
class Tape {
 public:
  enum class Mode { Grad, NoGrad };

  explicit Tape(Mode mode = Mode::Grad) : recording_(mode == Mode::Grad) {}

  bool recording() const { return recording_; }
  size_t node_count() const { return nodes_.size(); }

  void record(std::vector<Tensor> involved, std::function<void()> backward_fn) {
    outputs_.insert(involved.back().id());
    nodes_.push_back(Node{std::move(involved), std::move(backward_fn)});
  }

  // Populates grad on every requires_grad tensor recorded on this tape:
  // grads are (re)allocated and zeroed first, then the seed grad 1 flows
  // backward. Tensors that never reached the tape are left untouched.
  void backward(const Tensor& loss) {
    if (!recording_) throw ContractError("backward() on a no-grad tape");
    if (loss.size() != 1)
      throw ContractError("backward() requires a scalar loss, got shape " +
                          shape_str(loss.shape()));
    if (!outputs_.count(loss.id()))
      throw ContractError("backward() loss was not produced on this tape");

    std::unordered_set<const void*> seen;
    for (auto& node : nodes_) {
      for (auto& t : node.tensors) {
        if (!t.requires_grad()) continue;
        if (seen.insert(t.id()).second) {
          t.ensure_grad();
          t.zero_grad();
        }
      }
    }
    Tensor seed = loss;
    seed.grad()[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
  }

  void clear() {
    nodes_.clear();
    outputs_.clear();
  }

 private:
  struct Node {
    std::vector<Tensor> tensors;  // inputs then output
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  std::unordered_set<const void*> outputs_;
  bool recording_;
};

namespace ops {

namespace detail {

inline bool track(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected a 2-d tensor, got " + shape_str(t.shape()));
}

inline void require_3d(const Tensor& t, const char* op) {
  if (t.ndim() != 3)
    throw ShapeError(std::string(op) + ": expected a 3-d tensor, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

inline Tensor matmul(Tape& tape, Tensor a, Tensor b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  as_mat(out, m, n).noalias() = as_mat(a, m, k) * as_mat(b, k, n);
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record({a, b, out}, [a, b, out, m, k, n]() mutable {
      CMapM dc(out.grad().data(), m, n);
      if (a.requires_grad()) grad_mat(a, m, k).noalias() += dc * as_mat(b, k, n).transpose();
      if (b.requires_grad()) grad_mat(b, k, n).noalias() += as_mat(a, m, k).transpose() * dc;
    });
  }
  return out;
}

// a . b^T ; used for tied-embedding logits and attention scores.
inline Tensor matmul_nt(Tape& tape, Tensor a, Tensor b) {
  detail::require_2d(a, "matmul_nt");
  detail::require_2d(b, "matmul_nt");
  if (a.dim(1) != b.dim(1))
    throw ShapeError("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out = Tensor::zeros({m, n});
  as_mat(out, m, n).noalias() = as_mat(a, m, k) * as_mat(b, n, k).transpose();
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record({a, b, out}, [a, b, out, m, k, n]() mutable {
      CMapM dc(out.grad().data(), m, n);
      if (a.requires_grad()) grad_mat(a, m, k).noalias() += dc * as_mat(b, n, k);
      if (b.requires_grad()) grad_mat(b, n, k).noalias() += dc.transpose() * as_mat(a, m, k);
    });
  }
  return out;
}

// Batched products over matching leading dimension.
inline Tensor bmm(Tape& tape, Tensor a, Tensor b) {
  detail::require_3d(a, "bmm");
  detail::require_3d(b, "bmm");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw ShapeError("bmm: incompatible shapes: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int N = a.dim(0), p = a.dim(1), q = a.dim(2), r = b.dim(2);
  Tensor out = Tensor::zeros({N, p, r});
  for (int i = 0; i < N; ++i) {
    CMapM ai(a.data() + static_cast<int64_t>(i) * p * q, p, q);
    CMapM bi(b.data() + static_cast<int64_t>(i) * q * r, q, r);
    MapM ci(out.data() + static_cast<int64_t>(i) * p * r, p, r);
    ci.noalias() = ai * bi;
  }
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record({a, b, out}, [a, b, out, N, p, q, r]() mutable {
      for (int i = 0; i < N; ++i) {
        CMapM dci(out.grad().data() + static_cast<int64_t>(i) * p * r, p, r);
        CMapM ai(a.data() + static_cast<int64_t>(i) * p * q, p, q);
        CMapM bi(b.data() + static_cast<int64_t>(i) * q * r, q, r);
        if (a.requires_grad()) {
          MapM dai(a.grad().data() + static_cast<int64_t>(i) * p * q, p, q);
          dai.noalias() += dci * bi.transpose();
        }
        if (b.requires_grad()) {
          MapM dbi(b.grad().data() + static_cast<int64_t>(i) * q * r, q, r);
          dbi.noalias() += ai.transpose() * dci;
        }
      }
    });
  }
  return out;
}

inline Tensor bmm_nt(Tape& tape, Tensor a, Tensor b) {
  detail::require_3d(a, "bmm_nt");
  detail::require_3d(b, "bmm_nt");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw ShapeError("bmm_nt: incompatible shapes: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int N = a.dim(0), p = a.dim(1), q = a.dim(2), r = b.dim(1);
  Tensor out = Tensor::zeros({N, p, r});
  for (int i = 0; i < N; ++i) {
    CMapM ai(a.data() + static_cast<int64_t>(i) * p * q, p, q);
    CMapM bi(b.data() + static_cast<int64_t>(i) * r * q, r, q);
    MapM ci(out.data() + static_cast<int64_t>(i) * p * r, p, r);
    ci.noalias() = ai * bi.transpose();
  }
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record({a, b, out}, [a, b, out, N, p, q, r]() mutable {
      for (int i = 0; i < N; ++i) {
        CMapM dci(out.grad().data() + static_cast<int64_t>(i) * p * r, p, r);
        CMapM ai(a.data() + static_cast<int64_t>(i) * p * q, p, q);
        CMapM bi(b.data() + static_cast<int64_t>(i) * r * q, r, q);
        if (a.requires_grad()) {
          MapM dai(a.grad().data() + static_cast<int64_t>(i) * p * q, p, q);
          dai.noalias() += dci * bi;
        }
        if (b.requires_grad()) {
          MapM dbi(b.grad().data() + static_cast<int64_t>(i) * r * q, r, q);
          dbi.noalias() += dci.transpose() * ai;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(Tape& tape, Tensor a, Tensor b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shapes differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record({a, b, out}, [a, b, out, n]() mutable {
      const float* d = out.grad().data();
      if (a.requires_grad()) {
        float* ga = a.grad().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += d[i];
      }
      if (b.requires_grad()) {
        float* gb = b.grad().data();
        for (int64_t i = 0; i < n; ++i) gb[i] += d[i];
      }
    });
  }
  return out;
}

inline Tensor mul(Tape& tape, Tensor a, Tensor b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shapes differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape.record({a, b, out}, [a, b, out, n]() mutable {
      const float* d = out.grad().data();
      if (a.requires_grad()) {
        float* ga = a.grad().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += d[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        float* gb = b.grad().data();
        for (int64_t i = 0; i < n; ++i) gb[i] += d[i] * a.data()[i];
      }
    });
  }
  return out;
}

inline Tensor scale(Tape& tape, Tensor a, float s) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    tape.record({a, out}, [a, out, s, n]() mutable {
      const float* d = out.grad().data();
      float* ga = a.grad().data();
      for (int64_t i = 0; i < n; ++i) ga[i] += d[i] * s;
    });
  }
  return out;
}

// x: [..., C] plus a length-C bias broadcast over all leading axes. The only
// broadcast this library performs; every other shape mismatch is an error.
inline Tensor add_bias(Tape& tape, Tensor x, Tensor bias) {
  if (bias.ndim() != 1 || x.dim(x.ndim() - 1) != bias.dim(0))
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                     shape_str(x.shape()));
  const int64_t c = bias.dim(0), rows = x.size() / c;
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) out.data()[r * c + j] = x.data()[r * c + j] + bias.data()[j];
  if (detail::track(tape, {&x, &bias})) {
    out.set_requires_grad(true);
    tape.record({x, bias, out}, [x, bias, out, rows, c]() mutable {
      const float* d = out.grad().data();
      if (x.requires_grad()) {
        float* gx = x.grad().data();
        for (int64_t i = 0; i < rows * c; ++i) gx[i] += d[i];
      }
      if (bias.requires_grad()) {
        float* gb = bias.grad().data();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < c; ++j) gb[j] += d[r * c + j];
      }
    });
  }
  return out;
}

inline Tensor sum(Tape& tape, Tensor x) {
  Tensor out = Tensor::scalar(0.0f);
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  out.data()[0] = static_cast<float>(acc);
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record({x, out}, [x, out]() mutable {
      const float d = out.grad()[0];
      float* gx = x.grad().data();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += d;
    });
  }
  return out;
}

inline Tensor mean(Tape& tape, Tensor x) {
  return scale(tape, sum(tape, x), 1.0f / static_cast<float>(x.size()));
}

// sum_i coeffs[i] * scalars[i]; scalars must each be single-element.
inline Tensor weighted_sum(Tape& tape, std::vector<Tensor> scalars, std::vector<float> coeffs) {
  if (scalars.size() != coeffs.size())
    throw ShapeError("weighted_sum: " + std::to_string(scalars.size()) + " scalars vs " +
                     std::to_string(coeffs.size()) + " coefficients");
  if (scalars.empty()) throw ShapeError("weighted_sum: empty input");
  bool rg = false;
  double acc = 0.0;
  for (size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].size() != 1)
      throw ShapeError("weighted_sum: input " + std::to_string(i) + " is not a scalar");
    acc += static_cast<double>(coeffs[i]) * scalars[i].data()[0];
    rg = rg || scalars[i].requires_grad();
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (tape.recording() && rg) {
    out.set_requires_grad(true);
    std::vector<Tensor> involved = scalars;
    involved.push_back(out);
    tape.record(std::move(involved), [scalars, coeffs, out]() mutable {
      const float d = out.grad()[0];
      for (size_t i = 0; i < scalars.size(); ++i)
        if (scalars[i].requires_grad()) scalars[i].grad()[0] += d * coeffs[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization
// ---------------------------------------------------------------------------

namespace detail {
inline void softmax_rows(const float* x, float* y, int64_t rows, int64_t c) {
  for (int64_t r = 0; r < rows; ++r) {
    const float* xi = x + r * c;
    float* yi = y + r * c;
    float m = xi[0];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, xi[j]);
    float z = 0.0f;
    for (int64_t j = 0; j < c; ++j) {
      yi[j] = std::exp(xi[j] - m);
      z += yi[j];
    }
    const float inv = 1.0f / z;
    for (int64_t j = 0; j < c; ++j) yi[j] *= inv;
  }
}
}  // namespace detail

// Softmax along the last axis, max-subtracted for stability.
inline Tensor softmax(Tape& tape, Tensor x) {
  const int64_t c = x.dim(x.ndim() - 1), rows = x.size() / c;
  Tensor out = Tensor::zeros(x.shape());
  detail::softmax_rows(x.data(), out.data(), rows, c);
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record({x, out}, [x, out, rows, c]() mutable {
      const float* y = out.data();
      const float* dy = out.grad().data();
      float* gx = x.grad().data();
      for (int64_t r = 0; r < rows; ++r) {
        float dot = 0.0f;
        for (int64_t j = 0; j < c; ++j) dot += dy[r * c + j] * y[r * c + j];
        for (int64_t j = 0; j < c; ++j) gx[r * c + j] += y[r * c + j] * (dy[r * c + j] - dot);
      }
    });
  }
  return out;
}

inline Tensor log_softmax(Tape& tape, Tensor x) {
  const int64_t c = x.dim(x.ndim() - 1), rows = x.size() / c;
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const float* xi = x.data() + r * c;
    float* yi = out.data() + r * c;
    float m = xi[0];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, xi[j]);
    float z = 0.0f;
    for (int64_t j = 0; j < c; ++j) z += std::exp(xi[j] - m);
    const float lse = m + std::log(z);
    for (int64_t j = 0; j < c; ++j) yi[j] = xi[j] - lse;
  }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record({x, out}, [x, out, rows, c]() mutable {
      const float* y = out.data();
      const float* dy = out.grad().data();
      float* gx = x.grad().data();
      for (int64_t r = 0; r < rows; ++r) {
        float s = 0.0f;
        for (int64_t j = 0; j < c; ++j) s += dy[r * c + j];
        for (int64_t j = 0; j < c; ++j)
          gx[r * c + j] += dy[r * c + j] - std::exp(y[r * c + j]) * s;
      }
    });
  }
  return out;
}

// tanh-approximated GELU.
inline Tensor gelu(Tape& tape, Tensor x) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float a = 0.044715f;
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) {
    const float v = x.data()[i];
    out.data()[i] = 0.5f * v * (1.0f + std::tanh(k * (v + a * v * v * v)));
  }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record({x, out}, [x, out, n]() mutable {
      const float* dy = out.grad().data();
      float* gx = x.grad().data();
      for (int64_t i = 0; i < n; ++i) {
        const float v = x.data()[i];
        const float t = std::tanh(k * (v + a * v * v * v));
        const float du = k * (1.0f + 3.0f * a * v * v);
        gx[i] += dy[i] * (0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du);
      }
    });
  }
  return out;
}

inline Tensor layer_norm(Tape& tape, Tensor x, Tensor gamma, Tensor beta,
                         float eps = 1e-5f) {
  const int64_t c = x.dim(x.ndim() - 1), rows = x.size() / c;
  if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c)
    throw ShapeError("layer_norm: gamma/beta must be length-" + std::to_string(c) + " vectors");
  Tensor out = Tensor::zeros(x.shape());
  Tensor xhat = Tensor::zeros(x.shape());
  Tensor inv_std = Tensor::zeros({static_cast<int>(rows)});
  for (int64_t r = 0; r < rows; ++r) {
    const float* xi = x.data() + r * c;
    float mu = 0.0f;
    for (int64_t j = 0; j < c; ++j) mu += xi[j];
    mu /= static_cast<float>(c);
    float var = 0.0f;
    for (int64_t j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<float>(c);
    const float istd = 1.0f / std::sqrt(var + eps);
    inv_std.data()[r] = istd;
    for (int64_t j = 0; j < c; ++j) {
      const float xh = (xi[j] - mu) * istd;
      xhat.data()[r * c + j] = xh;
      out.data()[r * c + j] = gamma.data()[j] * xh + beta.data()[j];
    }
  }
  if (detail::track(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape.record({x, gamma, beta, out}, [x, gamma, beta, out, xhat, inv_std, rows, c]() mutable {
      const float* dy = out.grad().data();
      for (int64_t r = 0; r < rows; ++r) {
        const float istd = inv_std.data()[r];
        const float* xh = xhat.data() + r * c;
        const float* dyr = dy + r * c;
        if (gamma.requires_grad()) {
          float* gg = gamma.grad().data();
          for (int64_t j = 0; j < c; ++j) gg[j] += dyr[j] * xh[j];
        }
        if (beta.requires_grad()) {
          float* gb = beta.grad().data();
          for (int64_t j = 0; j < c; ++j) gb[j] += dyr[j];
        }
        if (x.requires_grad()) {
          float m1 = 0.0f, m2 = 0.0f;  // mean(dxhat), mean(dxhat*xhat)
          for (int64_t j = 0; j < c; ++j) {
            const float dxh = dyr[j] * gamma.data()[j];
            m1 += dxh;
            m2 += dxh * xh[j];
          }
          m1 /= static_cast<float>(c);
          m2 /= static_cast<float>(c);
          float* gx = x.grad().data() + r * c;
          for (int64_t j = 0; j < c; ++j) {
            const float dxh = dyr[j] * gamma.data()[j];
            gx[j] += istd * (dxh - m1 - xh[j] * m2);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Indexing / layout
// ---------------------------------------------------------------------------

inline Tensor gather_rows(Tape& tape, Tensor table, const std::vector<int>& ids) {
  detail::require_2d(table, "gather_rows");
  const int v = table.dim(0), c = table.dim(1);
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw ShapeError("gather_rows: empty id list");
  for (int id : ids)
    if (id < 0 || id >= v)
      throw IndexError("gather_rows: id " + std::to_string(id) + " outside table of " +
                       std::to_string(v) + " rows");
  Tensor out = Tensor::zeros({n, c});
  for (int i = 0; i < n; ++i)
    std::copy_n(table.data() + static_cast<int64_t>(ids[i]) * c, c,
                out.data() + static_cast<int64_t>(i) * c);
  if (detail::track(tape, {&table})) {
    out.set_requires_grad(true);
    tape.record({table, out}, [table, out, ids, n, c]() mutable {
      const float* d = out.grad().data();
      float* gt = table.grad().data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) gt[static_cast<int64_t>(ids[i]) * c + j] += d[static_cast<int64_t>(i) * c + j];
    });
  }
  return out;
}

// [B*T, C] -> [B*H, T, C/H]; inverse of merge_heads.
inline Tensor split_heads(Tape& tape, Tensor x, int B, int T, int H) {
  detail::require_2d(x, "split_heads");
  const int C = x.dim(1);
  if (x.dim(0) != B * T || C % H != 0)
    throw ShapeError("split_heads: cannot split " + shape_str(x.shape()) + " into B=" +
                     std::to_string(B) + " T=" + std::to_string(T) + " H=" + std::to_string(H));
  const int hd = C / H;
  Tensor out = Tensor::zeros({B * H, T, hd});
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t)
      for (int h = 0; h < H; ++h)
        std::copy_n(x.data() + (static_cast<int64_t>(b) * T + t) * C + h * hd, hd,
                    out.data() + ((static_cast<int64_t>(b) * H + h) * T + t) * hd);
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record({x, out}, [x, out, B, T, H, hd, C]() mutable {
      const float* d = out.grad().data();
      float* gx = x.grad().data();
      for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t)
          for (int h = 0; h < H; ++h)
            for (int j = 0; j < hd; ++j)
              gx[(static_cast<int64_t>(b) * T + t) * C + h * hd + j] +=
                  d[((static_cast<int64_t>(b) * H + h) * T + t) * hd + j];
    });
  }
  return out;
}

// [B*H, T, hd] -> [B*T, H*hd].
inline Tensor merge_heads(Tape& tape, Tensor x, int B, int T, int H) {
  detail::require_3d(x, "merge_heads");
  const int hd = x.dim(2);
  if (x.dim(0) != B * H || x.dim(1) != T)
    throw ShapeError("merge_heads: cannot merge " + shape_str(x.shape()) + " with B=" +
                     std::to_string(B) + " T=" + std::to_string(T) + " H=" + std::to_string(H));
  const int C = H * hd;
  Tensor out = Tensor::zeros({B * T, C});
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < H; ++h)
      for (int t = 0; t < T; ++t)
        std::copy_n(x.data() + ((static_cast<int64_t>(b) * H + h) * T + t) * hd, hd,
                    out.data() + (static_cast<int64_t>(b) * T + t) * C + h * hd);
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape.record({x, out}, [x, out, B, T, H, hd, C]() mutable {
      const float* d = out.grad().data();
      float* gx = x.grad().data();
      for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
          for (int t = 0; t < T; ++t)
            for (int j = 0; j < hd; ++j)
              gx[((static_cast<int64_t>(b) * H + h) * T + t) * hd + j] +=
                  d[(static_cast<int64_t>(b) * T + t) * C + h * hd + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Weighted mean of per-row -log softmax(logits)[label]; weights default to 1.
// Rows with weight 0 are ignored entirely (their label may be any in-range id).
inline Tensor cross_entropy_weighted(Tape& tape, Tensor logits, const std::vector<int>& labels,
                                     const std::vector<float>& weights) {
  detail::require_2d(logits, "cross_entropy");
  const int b = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != b)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  if (static_cast<int>(weights.size()) != b)
    throw ShapeError("cross_entropy: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(b) + " rows");
  float wsum = 0.0f;
  for (int i = 0; i < b; ++i) {
    if (labels[i] < 0 || labels[i] >= c)
      throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " out of range for " +
                       std::to_string(c) + " classes");
    wsum += weights[i];
  }
  if (wsum <= 0.0f) throw DataError("cross_entropy: total weight must be positive");

  Tensor probs = Tensor::zeros(logits.shape());
  detail::softmax_rows(logits.data(), probs.data(), b, c);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    if (weights[i] == 0.0f) continue;
    const float* xi = logits.data() + static_cast<int64_t>(i) * c;
    float m = xi[0];
    for (int j = 1; j < c; ++j) m = std::max(m, xi[j]);
    float z = 0.0f;
    for (int j = 0; j < c; ++j) z += std::exp(xi[j] - m);
    loss += static_cast<double>(weights[i]) * (m + std::log(z) - xi[labels[i]]);
  }
  Tensor out = Tensor::scalar(static_cast<float>(loss / wsum));
  if (detail::track(tape, {&logits})) {
    out.set_requires_grad(true);
    tape.record({logits, out}, [logits, out, probs, labels, weights, wsum, b, c]() mutable {
      const float d = out.grad()[0];
      float* gx = logits.grad().data();
      for (int i = 0; i < b; ++i) {
        if (weights[i] == 0.0f) continue;
        const float w = d * weights[i] / wsum;
        const float* pi = probs.data() + static_cast<int64_t>(i) * c;
        for (int j = 0; j < c; ++j) gx[static_cast<int64_t>(i) * c + j] += w * (pi[j] - (j == labels[i] ? 1.0f : 0.0f));
      }
    });
  }
  return out;
}

inline Tensor cross_entropy(Tape& tape, Tensor logits, const std::vector<int>& labels) {
  return cross_entropy_weighted(tape, logits, labels,
                                std::vector<float>(labels.size(), 1.0f));
}

// ---------------------------------------------------------------------------
// Regularization
// ---------------------------------------------------------------------------

// Inverted dropout. p == 0 is the identity. The mask is sampled here and the
// scaled-mask multiply runs through mul(), so the backward rule is shared.
inline Tensor dropout(Tape& tape, Tensor x, float p, std::mt19937& rng) {
  if (p < 0.0f || p >= 1.0f) throw ConfigError("dropout: p must be in [0,1)");
  if (p == 0.0f) return x;
  Tensor mask = Tensor::zeros(x.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const float s = 1.0f / (1.0f - p);
  for (int64_t i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0f;
  return mul(tape, x, mask);
}

// ---------------------------------------------------------------------------
// Policy-gradient surrogate
// ---------------------------------------------------------------------------

// min(r*a, clamp(r, 1-eps, 1+eps)*a) with r = exp(logp - logp_old).
// The subgradient follows the selected branch; ties select the unclipped one.
inline Tensor clipped_surrogate(Tape& tape, Tensor logp, float logp_old, float advantage,
                                float eps) {
  if (logp.size() != 1) throw ShapeError("clipped_surrogate: logp must be scalar");
  if (eps <= 0.0f) throw ConfigError("clipped_surrogate: eps must be positive");
  const float r = std::exp(logp.data()[0] - logp_old);
  const float clipped = std::clamp(r, 1.0f - eps, 1.0f + eps);
  const float t1 = r * advantage, t2 = clipped * advantage;
  Tensor out = Tensor::scalar(std::min(t1, t2));
  if (detail::track(tape, {&logp})) {
    out.set_requires_grad(true);
    tape.record({logp, out}, [logp, out, r, clipped, t1, t2, advantage]() mutable {
      float slope;
      if (t1 <= t2) {
        slope = advantage * r;  // d(r*a)/dlogp = a*r
      } else {
        slope = (r == clipped) ? advantage * r : 0.0f;
      }
      logp.grad()[0] += out.grad()[0] * slope;
    });
  }
  return out;
}

}  // namespace ops
}  // namespace rllf
