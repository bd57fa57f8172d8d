#pragma once

#include <cmath>
#include <limits>

#include "fast/nn/tensor.hpp"

namespace fast::codec {

/// (1/l) ||s_hat - s||^2
inline double system_loss(const nn::Tensor& s, const nn::Tensor& s_hat) {
  if (s.size() != s_hat.size()) {
    throw nn::ShapeError("system_loss: length " + std::to_string(s.size()) + " vs " +
                         std::to_string(s_hat.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s_hat[i] - s[i];
    acc += d * d;
  }
  return acc / static_cast<double>(s.size());
}

/// 10 log10(MAX^2 / MSE); +inf when MSE is zero.
inline double psnr_from_mse(double mse, double max_value = 1.0) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

inline double psnr(const nn::Tensor& s, const nn::Tensor& s_hat, double max_value = 1.0) {
  return psnr_from_mse(system_loss(s, s_hat), max_value);
}

}  // namespace fast::codec
