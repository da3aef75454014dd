#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rllf/errors.hpp"
#include "rllf/tensor.hpp"

namespace rllf {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;  // decoupled: applied to params, not folded into grads
};

// Adam with decoupled weight decay over a fixed parameter list. Moments are
// shape-congruent to their parameters; the step counter advances by exactly
// one per step() call.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& p : params_) {
      m_.emplace_back(p.size(), 0.0f);
      v_.emplace_back(p.size(), 0.0f);
    }
  }

  void step() {
    ++t_;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (!p.has_grad())
        throw ContractError("adam: parameter " + std::to_string(i) + " has no gradient");
      if (p.grad().size() != static_cast<size_t>(p.size()))
        throw ShapeError("adam: gradient size mismatch on parameter " + std::to_string(i));
      float* w = p.data();
      const float* g = p.grad().data();
      float* m = m_[i].data();
      float* v = v_[i].data();
      for (int64_t j = 0; j < p.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0f - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0f - cfg_.beta2) * g[j] * g[j];
        const float mhat = m[j] / bc1;
        const float vhat = v[j] / bc2;
        w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
      if (cfg_.weight_decay > 0.0f) {
        const float decay = cfg_.lr * cfg_.weight_decay;
        for (int64_t j = 0; j < p.size(); ++j) w[j] -= decay * w[j];
      }
    }
  }

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(float lr) { cfg_.lr = lr; }
  std::vector<Tensor>& params() { return params_; }

  // Exact state access for checkpoint/resume.
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  int64_t t_ = 0;
};

// Plain gradient descent. Exists so updates that are linear in the reward
// stay literally linear; used by the policy-gradient scale tests.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, float lr) : params_(std::move(params)), lr_(lr) {}

  void step() {
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (!p.has_grad())
        throw ContractError("sgd: parameter " + std::to_string(i) + " has no gradient");
      float* w = p.data();
      const float* g = p.grad().data();
      for (int64_t j = 0; j < p.size(); ++j) w[j] -= lr_ * g[j];
    }
  }

  std::vector<Tensor>& params() { return params_; }

 private:
  std::vector<Tensor> params_;
  float lr_;
};

}  // namespace rllf
