#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/nn/tensor.hpp"

namespace fast::codec {

using cplx = std::complex<double>;
using nn::Tensor;

/// Complex channel-input block. Feature k occupies the contiguous symbols
/// [k * symbols_per_slot, (k + 1) * symbols_per_slot).
struct SymbolVector {
  std::vector<cplx> symbols;
  std::size_t symbols_per_slot = 0;
  double scale = 1.0;        // transmit gain applied by power normalization
  bool degenerate = false;   // zero-norm input; symbols are all zero

  std::size_t size() const noexcept { return symbols.size(); }
  std::size_t slot_count() const { return symbols_per_slot ? symbols.size() / symbols_per_slot : 0; }

  double mean_power() const {
    double p = 0.0;
    for (const auto& s : symbols) p += std::norm(s);
    return symbols.empty() ? 0.0 : p / static_cast<double>(symbols.size());
  }
};

/// Pairs each feature's h*w reals (row-major) into h*w/2 complex symbols and
/// scales the block so that (1/k)||x||^2 = power.
inline SymbolVector to_symbols(const Tensor& features, double power = 1.0) {
  if (features.rank() != 3) {
    throw nn::ShapeError("to_symbols expects a c x h x w tensor, got " + nn::to_string(features.shape()));
  }
  const std::size_t hw = features.dim(1) * features.dim(2);
  if (hw % 2 != 0) {
    throw nn::ShapeError("to_symbols: h*w must be even to pair reals, got " +
                         nn::to_string(features.shape()));
  }
  if (!(power > 0.0)) throw std::invalid_argument("to_symbols: power must be positive");
  SymbolVector out;
  out.symbols_per_slot = hw / 2;
  const std::size_t k = features.size() / 2;
  out.symbols.resize(k);
  const double norm = std::sqrt(nn::squared_norm(features.data()));
  if (norm == 0.0) {
    out.scale = 0.0;
    out.degenerate = true;
    return out;
  }
  out.scale = std::sqrt(static_cast<double>(k) * power) / norm;
  for (std::size_t i = 0; i < k; ++i) {
    out.symbols[i] = out.scale * cplx(features[2 * i], features[2 * i + 1]);
  }
  return out;
}

/// Exact inverse of to_symbols given the transmit scale.
inline Tensor from_symbols(const std::vector<cplx>& symbols, const nn::Shape& geometry, double scale) {
  if (geometry.size() != 3 || 2 * symbols.size() != nn::element_count(geometry)) {
    throw nn::ShapeError("from_symbols: " + std::to_string(symbols.size()) +
                         " symbols cannot fill " + nn::to_string(geometry));
  }
  Tensor out(geometry);
  if (scale == 0.0) return out;
  const double inv = 1.0 / scale;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    out[2 * i] = symbols[i].real() * inv;
    out[2 * i + 1] = symbols[i].imag() * inv;
  }
  return out;
}

inline Tensor from_symbols(const SymbolVector& symbols, const nn::Shape& geometry) {
  return from_symbols(symbols.symbols, geometry, symbols.degenerate ? 0.0 : symbols.scale);
}

}  // namespace fast::codec
