#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "fast/channel/sos.hpp"

namespace fast::channel {

struct AutocorrPoint {
  std::size_t lag = 0;
  double empirical = 0.0;
  double theory = 0.0;  // 0.5 * J0(2 pi f_D lag T_s)
};

struct ChannelStats {
  double mean_power = 0.0;
  double envelope_mean = 0.0;
  std::vector<AutocorrPoint> autocorr_curve;
  std::vector<std::uint64_t> phase_hist;
  double phase_chi2 = 0.0;
  double phase_p_value = 0.0;
  double max_autocorr_deviation = 0.0;
};

struct ChannelStatsOptions {
  std::size_t moment_samples = 100000;   // one independent realization per sample
  std::size_t phase_bins = 32;
  std::size_t autocorr_realizations = 1000;
  std::size_t autocorr_length = 400;     // samples per realization
  std::size_t max_lag = 0;               // 0: a quarter of the coherence span 1/(f_D T_s)
};

inline double rayleigh_envelope_mean() { return std::sqrt(std::numbers::pi) / 2.0; }

/// Monte Carlo validation of the SOS generator: moments, phase uniformity and
/// the ensemble autocorrelation of the in-phase component.
inline ChannelStats compute_channel_stats(const SosConfig& config, const ChannelStatsOptions& opt = {}) {
  ChannelStats st;
  st.phase_hist.assign(opt.phase_bins, 0);

  // Moments and phase: samples from independent realizations so the phase
  // histogram sees i.i.d. draws.
  for (std::size_t r = 0; r < opt.moment_samples; ++r) {
    SosChannel ch(config, r);
    const cplx h = ch.sample(0);
    st.mean_power += std::norm(h);
    st.envelope_mean += std::abs(h);
    double u = (std::arg(h) + std::numbers::pi) / (2.0 * std::numbers::pi);
    auto bin = static_cast<std::size_t>(u * static_cast<double>(opt.phase_bins));
    if (bin >= opt.phase_bins) bin = opt.phase_bins - 1;
    ++st.phase_hist[bin];
  }
  const double n = static_cast<double>(opt.moment_samples);
  st.mean_power /= n;
  st.envelope_mean /= n;
  const double expected = n / static_cast<double>(opt.phase_bins);
  for (auto c : st.phase_hist) {
    const double d = static_cast<double>(c) - expected;
    st.phase_chi2 += d * d / expected;
  }
  boost::math::chi_squared chi(static_cast<double>(opt.phase_bins - 1));
  st.phase_p_value = boost::math::cdf(boost::math::complement(chi, st.phase_chi2));

  std::size_t max_lag = opt.max_lag;
  if (max_lag == 0) {
    const double fd = config.normalized_doppler();
    max_lag = fd > 0.0 ? static_cast<std::size_t>(1.0 / fd / 4.0) : 1;
  }
  max_lag = std::min(max_lag, opt.autocorr_length - 1);
  std::vector<double> acc(max_lag + 1, 0.0);
  std::vector<double> counts(max_lag + 1, 0.0);
  for (std::size_t r = 0; r < opt.autocorr_realizations; ++r) {
    // Stream ids disjoint from the moment realizations above.
    const auto seq = SosChannel(config, opt.moment_samples + r).generate(0, opt.autocorr_length);
    for (std::size_t lag = 0; lag <= max_lag; ++lag) {
      for (std::size_t i = 0; i + lag < seq.size(); ++i) {
        acc[lag] += seq[i].real() * seq[i + lag].real();
      }
      counts[lag] += static_cast<double>(seq.size() - lag);
    }
  }
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    AutocorrPoint p;
    p.lag = lag;
    p.empirical = acc[lag] / counts[lag];
    p.theory = 0.5 * std::cyl_bessel_j(0.0, 2.0 * std::numbers::pi * config.normalized_doppler() *
                                                static_cast<double>(lag));
    st.max_autocorr_deviation = std::max(st.max_autocorr_deviation, std::abs(p.empirical - p.theory));
    st.autocorr_curve.push_back(p);
  }
  return st;
}

}  // namespace fast::channel
