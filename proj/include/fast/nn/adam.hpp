#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/nn/param_set.hpp"

namespace fast::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are laid out in ParamSet order.
class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig config = {}) : config_(config) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Tensor::zeros_like(params.at(i)));
      v_.push_back(Tensor::zeros_like(params.at(i)));
    }
  }

  const AdamConfig& config() const noexcept { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::uint64_t steps() const noexcept { return step_; }

  void step(ParamSet& params, const GradSet& grads) {
    if (grads.size() != params.size() || m_.size() != params.size()) {
      throw std::invalid_argument("adam: expected " + std::to_string(params.size()) +
                                  " gradients, got " + std::to_string(grads.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (grads[i].shape() != params.at(i).shape()) {
        throw ShapeError("adam: gradient for '" + params.name(i) + "' has shape " +
                         to_string(grads[i].shape()) + ", parameter is " +
                         to_string(params.at(i).shape()));
      }
    }
    ++step_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params.at(i).data();
      auto g = grads[i].data();
      auto m = m_[i].data();
      auto v = v_[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        p[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
      }
    }
  }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::uint64_t step_ = 0;
};

}  // namespace fast::nn
