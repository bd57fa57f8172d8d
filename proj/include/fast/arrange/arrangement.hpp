#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/nn/tensor.hpp"

namespace fast::arrange {

using nn::Tensor;

/// order[j] is the original index of the feature carried in slot j.
using FeatureOrder = std::vector<std::size_t>;

inline bool is_permutation(std::span<const std::size_t> p) {
  std::vector<bool> seen(p.size(), false);
  for (auto v : p) {
    if (v >= p.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

/// Indices sorted by value, largest first; ties keep ascending index order.
inline std::vector<std::size_t> sort_desc_with_indices(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return idx;
}

/// Copies feature maps so that slot j of the result holds feature order[j].
inline Tensor permute_features(const Tensor& features, std::span<const std::size_t> order) {
  const std::size_t c = features.dim(0);
  const std::size_t hw = features.size() / c;
  Tensor out(features.shape());
  for (std::size_t j = 0; j < c; ++j) {
    std::copy_n(features.data().begin() + static_cast<std::ptrdiff_t>(order[j] * hw), hw,
                out.data().begin() + static_cast<std::ptrdiff_t>(j * hw));
  }
  return out;
}

struct Arranged {
  Tensor features;     // slot-ordered
  FeatureOrder order;  // slot -> original feature
};

/// Matches the i-th highest-priority feature with the i-th strongest
/// predicted slot amplitude.
inline Arranged arrange(const Tensor& features, std::span<const double> priority,
                        std::span<const std::complex<double>> predicted_csi) {
  if (features.rank() != 3 || priority.size() != features.dim(0) || predicted_csi.size() != features.dim(0)) {
    throw nn::ShapeError("arrange: " + std::to_string(priority.size()) + " priorities and " +
                         std::to_string(predicted_csi.size()) + " CSI values for features " +
                         nn::to_string(features.shape()));
  }
  std::vector<double> amplitude(predicted_csi.size());
  std::transform(predicted_csi.begin(), predicted_csi.end(), amplitude.begin(),
                 [](const std::complex<double>& h) { return std::abs(h); });
  const auto slots_by_quality = sort_desc_with_indices(amplitude);
  const auto features_by_priority = sort_desc_with_indices(priority);
  FeatureOrder order(features.dim(0));
  for (std::size_t i = 0; i < order.size(); ++i) order[slots_by_quality[i]] = features_by_priority[i];
  return {permute_features(features, order), std::move(order)};
}

/// Receiver-side restore: result[order[j]] = received[j].
inline Tensor inverse_arrange(const Tensor& received, std::span<const std::size_t> order) {
  if (received.rank() != 3 || order.size() != received.dim(0) || !is_permutation(order)) {
    throw std::invalid_argument("inverse_arrange: feature order is not a permutation of " +
                                std::to_string(received.rank() == 3 ? received.dim(0) : 0) + " slots");
  }
  const std::size_t c = received.dim(0);
  const std::size_t hw = received.size() / c;
  Tensor out(received.shape());
  for (std::size_t j = 0; j < c; ++j) {
    std::copy_n(received.data().begin() + static_cast<std::ptrdiff_t>(j * hw), hw,
                out.data().begin() + static_cast<std::ptrdiff_t>(order[j] * hw));
  }
  return out;
}

/// Side-channel cost of sending the order: c * log2(c) bits.
inline double order_overhead_bits(std::size_t c) {
  return c > 1 ? static_cast<double>(c) * std::log2(static_cast<double>(c)) : 0.0;
}

}  // namespace fast::arrange
