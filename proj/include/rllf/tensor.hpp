#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rllf/errors.hpp"

namespace rllf {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense float32 n-d value in row-major order. Copying a Tensor copies the
// handle: both handles alias the same storage, which is what the tape needs
// to accumulate gradients into shared inputs. Use clone() for a deep copy.
class Tensor {
  struct Impl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until ensure_grad()
    bool requires_grad = false;
  };

 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return make(std::move(shape), 0.0f, requires_grad);
  }

  static Tensor full(Shape shape, float value, bool requires_grad = false) {
    return make(std::move(shape), value, requires_grad);
  }

  static Tensor scalar(float value, bool requires_grad = false) {
    return make({1}, value, requires_grad);
  }

  static Tensor of(Shape shape, std::vector<float> values, bool requires_grad = false) {
    check_shape(shape);
    if (numel(shape) != static_cast<int64_t>(values.size()))
      throw ShapeError("tensor init: shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor randn(Shape shape, std::mt19937& rng, float stddev,
                      bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::normal_distribution<float> dist(0.0f, stddev);
    for (auto& v : t.impl_->data) v = dist(rng);
    return t;
  }

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }

  float* data() { return impl_->data.data(); }
  const float* data() const { return impl_->data.data(); }
  std::vector<float>& vec() { return impl_->data; }
  const std::vector<float>& vec() const { return impl_->data; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }

  // Allocates (zero-filled) on first use.
  std::vector<float>& grad() {
    ensure_grad();
    return impl_->grad;
  }
  const std::vector<float>& grad() const { return impl_->grad; }

  void ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  }

  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
  }

  float item() const {
    if (size() != 1) throw ContractError("item(): tensor has " + std::to_string(size()) + " elements, expected 1");
    return impl_->data[0];
  }

  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>(*impl_);
    return t;
  }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  bool all_finite() const {
    for (float v : impl_->data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Stable identity for use as a map key during backward.
  const void* id() const { return impl_.get(); }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (int d : shape)
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }

  static Tensor make(Shape shape, float fill, bool requires_grad) {
    check_shape(shape);
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->data.assign(static_cast<size_t>(numel(shape)), fill);
    t.impl_->shape = std::move(shape);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  std::shared_ptr<Impl> impl_;
};

inline void zero_grad(std::vector<Tensor>& params) {
  for (auto& p : params) {
    p.ensure_grad();
    p.zero_grad();
  }
}

}  // namespace rllf
