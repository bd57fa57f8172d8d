#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/channel/sos.hpp"
#include "fast/codec/symbols.hpp"

namespace fast::channel {

using codec::SymbolVector;

/// sigma such that sigma^2 = P / 10^(SNR/10). Infinite SNR gives zero noise.
inline double noise_sigma_from_snr(double snr_db, double power = 1.0) {
  if (!(power > 0.0)) throw std::invalid_argument("noise_sigma_from_snr: power must be positive");
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::sqrt(power / std::pow(10.0, snr_db / 10.0));
}

/// k i.i.d. CN(0, sigma^2) samples (variance sigma^2/2 per real component).
template <class Rng>
std::vector<cplx> draw_noise(std::size_t k, double sigma, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, sigma / std::sqrt(2.0));
  std::vector<cplx> n(k);
  if (sigma == 0.0) return n;
  for (auto& v : n) {
    const double re = gauss(rng);
    v = {re, gauss(rng)};
  }
  return n;
}

inline void check_slots(const SymbolVector& x, std::size_t slots) {
  if (x.symbols_per_slot == 0 || x.size() % x.symbols_per_slot != 0 || x.slot_count() != slots) {
    throw std::invalid_argument("channel: " + std::to_string(slots) + " CSI coefficients for " +
                                std::to_string(x.slot_count()) + " feature slots");
  }
}

/// Block fading y = h_j x + n: every symbol of slot j is scaled by slot_csi[j]
/// before the given noise realization is added.
inline SymbolVector apply_channel(const SymbolVector& x, std::span<const cplx> slot_csi,
                                  std::span<const cplx> noise) {
  check_slots(x, slot_csi.size());
  if (noise.size() != x.size()) {
    throw std::invalid_argument("channel: noise length " + std::to_string(noise.size()) +
                                " != symbol count " + std::to_string(x.size()));
  }
  SymbolVector y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y.symbols[i] = slot_csi[i / x.symbols_per_slot] * x.symbols[i] + noise[i];
  }
  return y;
}

template <class Rng>
SymbolVector apply_channel(const SymbolVector& x, std::span<const cplx> slot_csi, double sigma,
                           Rng& rng) {
  check_slots(x, slot_csi.size());
  const auto noise = draw_noise(x.size(), sigma, rng);
  return apply_channel(x, slot_csi, noise);
}

enum class Equalizer { Mmse, ZeroForcing };

inline constexpr double kZeroForcingFloor = 1e-6;

/// Per-slot receive coefficient: MMSE h* / (|h|^2 + sigma^2), or 1/h with |h|
/// floored for zero forcing.
inline cplx equalizer_gain(cplx h, double sigma, Equalizer kind) {
  if (kind == Equalizer::Mmse) {
    const double den = std::norm(h) + sigma * sigma;
    if (den == 0.0) return {0.0, 0.0};
    return std::conj(h) / den;
  }
  const double mag = std::abs(h);
  if (mag < kZeroForcingFloor) {
    const cplx dir = mag > 0.0 ? h / mag : cplx(1.0, 0.0);
    return 1.0 / (dir * kZeroForcingFloor);
  }
  return 1.0 / h;
}

inline SymbolVector equalize(const SymbolVector& y, std::span<const cplx> slot_csi, double sigma,
                             Equalizer kind = Equalizer::Mmse) {
  check_slots(y, slot_csi.size());
  SymbolVector out = y;
  for (std::size_t j = 0; j < slot_csi.size(); ++j) {
    const cplx g = equalizer_gain(slot_csi[j], sigma, kind);
    for (std::size_t i = j * y.symbols_per_slot; i < (j + 1) * y.symbols_per_slot; ++i) {
      out.symbols[i] = g * y.symbols[i];
    }
  }
  return out;
}

}  // namespace fast::channel
