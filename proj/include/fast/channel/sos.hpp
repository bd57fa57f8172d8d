#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace fast::channel {

using cplx = std::complex<double>;

/// Parameters of the sum-of-sinusoids Rayleigh fading generator.
struct SosConfig {
  std::size_t paths = 16;          // M
  double max_doppler_hz = 10.0;    // f_D^max
  double sample_period_s = 1e-3;   // T_s
  std::uint64_t seed = 1;

  double normalized_doppler() const { return max_doppler_hz * sample_period_s; }

  void validate() const {
    if (paths < 1) throw std::invalid_argument("SOS: need at least one path");
    if (!(max_doppler_hz >= 0.0)) throw std::invalid_argument("SOS: Doppler must be >= 0");
    if (!(sample_period_s > 0.0)) throw std::invalid_argument("SOS: sample period must be > 0");
  }
};

/// Complex CSI samples h_n for n = start_index, start_index + 1, ...
struct CsiSequence {
  std::vector<cplx> samples;
  std::int64_t start_index = 0;
  double sample_period_s = 1e-3;

  std::size_t size() const noexcept { return samples.size(); }
  const cplx& operator[](std::size_t i) const { return samples[i]; }
};

/// Per-path random parameters, fixed for one channel realization.
struct PathParams {
  std::vector<double> a, b;           // attenuations, N(0, 1)
  std::vector<double> alpha, phi, psi;  // arrival angle, phase shift, WSS phase, U[-pi, pi)
};

/// Seeds a generator from two 64-bit words (configuration seed and stream id).
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

/// One immutable realization of the improved SOS model:
///   h_n = 1/sqrt(M) * sum_m [ A_m cos(theta_m(n)) + j B_m sin(theta_m(n)) ]
///   theta_m(n) = (2 pi f_D n T_s + psi_m) cos(alpha_m) + phi_m
class SosChannel {
 public:
  SosChannel(const SosConfig& config, std::uint64_t realization_seed) : config_(config) {
    config_.validate();
    auto rng = make_rng(config_.seed, realization_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    const auto m = config_.paths;
    paths_.a.resize(m);
    paths_.b.resize(m);
    paths_.alpha.resize(m);
    paths_.phi.resize(m);
    paths_.psi.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      paths_.a[i] = gauss(rng);
      paths_.b[i] = gauss(rng);
      paths_.alpha[i] = angle(rng);
      paths_.phi[i] = angle(rng);
      paths_.psi[i] = angle(rng);
    }
  }

  const SosConfig& config() const noexcept { return config_; }
  const PathParams& paths() const noexcept { return paths_; }

  cplx sample(std::int64_t n) const {
    const double omega_t =
        2.0 * std::numbers::pi * config_.max_doppler_hz * static_cast<double>(n) * config_.sample_period_s;
    double re = 0.0, im = 0.0;
    for (std::size_t m = 0; m < config_.paths; ++m) {
      const double theta = (omega_t + paths_.psi[m]) * std::cos(paths_.alpha[m]) + paths_.phi[m];
      re += paths_.a[m] * std::cos(theta);
      im += paths_.b[m] * std::sin(theta);
    }
    const double norm = 1.0 / std::sqrt(static_cast<double>(config_.paths));
    return {re * norm, im * norm};
  }

  CsiSequence generate(std::int64_t n_start, std::size_t count) const {
    CsiSequence seq;
    seq.start_index = n_start;
    seq.sample_period_s = config_.sample_period_s;
    seq.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) seq.samples.push_back(sample(n_start + static_cast<std::int64_t>(i)));
    return seq;
  }

 private:
  SosConfig config_;
  PathParams paths_;
};

inline CsiSequence sos_generate(const SosConfig& config, std::uint64_t realization_seed,
                                std::int64_t n_start, std::size_t count) {
  if (count < 1) throw std::invalid_argument("sos_generate: count must be >= 1");
  return SosChannel(config, realization_seed).generate(n_start, count);
}

}  // namespace fast::channel
