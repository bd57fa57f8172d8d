#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/arrange/arrangement.hpp"
#include "fast/channel/link.hpp"
#include "fast/channel/sos.hpp"
#include "fast/codec/metrics.hpp"
#include "fast/codec/model.hpp"
#include "fast/codec/symbols.hpp"
#include "fast/distill/distill.hpp"
#include "fast/predictor/predictor.hpp"
#include "fast/priority/priority.hpp"

namespace fast::harness {

using cplx = std::complex<double>;

enum class SchemeId { PC_FP_KD, KC_FP_KD, KC_FP, PC_FP, DJSCC, RANDOM_ORDER };

inline constexpr SchemeId kAllSchemes[] = {SchemeId::PC_FP_KD, SchemeId::KC_FP_KD, SchemeId::KC_FP,
                                           SchemeId::PC_FP,    SchemeId::DJSCC,    SchemeId::RANDOM_ORDER};

inline std::string to_string(SchemeId s) {
  switch (s) {
    case SchemeId::PC_FP_KD: return "PC_FP_KD";
    case SchemeId::KC_FP_KD: return "KC_FP_KD";
    case SchemeId::KC_FP: return "KC_FP";
    case SchemeId::PC_FP: return "PC_FP";
    case SchemeId::DJSCC: return "DJSCC";
    case SchemeId::RANDOM_ORDER: return "RANDOM_ORDER";
  }
  return "?";
}

inline SchemeId parse_scheme(const std::string& name) {
  for (auto s : kAllSchemes) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown scheme: " + name);
}

inline bool uses_prediction(SchemeId s) { return s == SchemeId::PC_FP_KD || s == SchemeId::PC_FP; }
inline bool uses_students(SchemeId s) { return s == SchemeId::PC_FP_KD || s == SchemeId::KC_FP_KD; }
inline bool uses_teacher(SchemeId s) { return s == SchemeId::KC_FP || s == SchemeId::PC_FP; }
inline bool uses_priority(SchemeId s) { return uses_students(s) || uses_teacher(s); }

/// Everything the schemes may need. Pointers may be null for models a run
/// does not use.
struct Models {
  const codec::Codec* codec = nullptr;
  const predictor::ChannelPredictor* predictor = nullptr;
  const distill::Student* wnet = nullptr;
  const distill::Student* rnet = nullptr;
  priority::PriorityWeights weights{};
  priority::NoiseBudget budget{};
  channel::Equalizer equalizer = channel::Equalizer::Mmse;
  double power = 1.0;

  void require(SchemeId s) const {
    if (!codec) throw std::invalid_argument(to_string(s) + " needs a codec");
    if (uses_prediction(s) && !predictor) throw std::invalid_argument(to_string(s) + " needs a channel predictor");
    if (uses_students(s) && (!wnet || !rnet)) throw std::invalid_argument(to_string(s) + " needs WNet and RNet");
  }
};

/// One channel realization for one (image, SNR) cell. The transmitter may
/// only see `history`; `future` (one coefficient per slot) and the unit
/// noise are consumed by the channel.
struct ChannelTrace {
  std::vector<cplx> history;     // t1 past samples
  std::vector<cplx> future;      // c slot coefficients actually applied
  std::vector<cplx> unit_noise;  // CN(0, 1) per symbol, scaled by sigma at use
  std::uint64_t permutation_seed = 0;
};

inline ChannelTrace make_trace(const channel::SosConfig& sos, std::size_t t1, std::size_t slots, std::size_t symbols,
                               std::uint64_t seed, std::uint64_t cell) {
  ChannelTrace t;
  const auto seq = channel::SosChannel(sos, cell).generate(0, t1 + slots).samples;
  t.history.assign(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(t1));
  t.future.assign(seq.begin() + static_cast<std::ptrdiff_t>(t1), seq.end());
  auto rng = channel::make_rng(seed ^ 0x6a09e667f3bcc909ULL, cell);
  t.unit_noise = channel::draw_noise(symbols, 1.0, rng);
  t.permutation_seed = rng();
  return t;
}

/// Per-image work shared by every SNR and scheme.
struct ImageContext {
  std::size_t image_id = 0;
  const nn::Tensor* image = nullptr;
  nn::Tensor features;
  std::optional<std::vector<double>> teacher_xi;
  std::optional<std::vector<double>> student_xi;
  double teacher_ms = 0.0;
  double student_ms = 0.0;
};

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline ImageContext prepare_image(std::size_t image_id, const nn::Tensor& image, const Models& m, bool teacher,
                                  bool students) {
  ImageContext ctx;
  ctx.image_id = image_id;
  ctx.image = &image;
  ctx.features = m.codec->encode(image);
  if (teacher) {
    const auto t0 = std::chrono::steady_clock::now();
    ctx.teacher_xi = priority::teacher_priority(ctx.features, image, codec::CodecDecoder{m.codec}, m.budget,
                                                m.weights).xi;
    ctx.teacher_ms = elapsed_ms(t0);
  }
  if (students) {
    const auto t0 = std::chrono::steady_clock::now();
    ctx.student_xi = distill::student_infer(ctx.features, *m.wnet, *m.rnet, m.weights);
    ctx.student_ms = elapsed_ms(t0);
  }
  return ctx;
}

struct EvalRecord {
  std::size_t image_id = 0;
  SchemeId scheme = SchemeId::DJSCC;
  double snr_db = 0.0;
  double psnr = 0.0;                  // +inf when the reconstruction is exact
  std::vector<double> slot_gain;      // |h| of the applied slots
  arrange::FeatureOrder order;        // slot -> feature
  double eta_bits = 0.0;              // side information for the order
  std::optional<double> predictor_nmse;
  double priority_ms = 0.0;
  double total_ms = 0.0;
};

namespace detail {

/// CSI available at the transmitter. PC schemes only ever receive the
/// history; the true future is passed for KC schemes alone.
inline std::vector<cplx> transmitter_csi(SchemeId s, const Models& m, std::span<const cplx> history,
                                         std::span<const cplx> known_future, std::size_t slots) {
  if (uses_prediction(s)) {
    predictor::HistoryWindow w{{history.begin(), history.end()}, static_cast<std::int64_t>(history.size())};
    return predictor::rolling_forecast(w, slots, *m.predictor).samples;
  }
  return {known_future.begin(), known_future.end()};
}

}  // namespace detail

/// encode -> priority -> CSI acquisition -> arrange -> symbols -> fading
/// channel -> equalize -> inverse arrange -> decode -> PSNR.
inline EvalRecord run_pipeline(const ImageContext& ctx, SchemeId scheme, const Models& m, const ChannelTrace& trace,
                               double snr_db) {
  m.require(scheme);
  const auto t0 = std::chrono::steady_clock::now();
  const auto& g = m.codec->geometry;
  const std::size_t c = g.feature_channels;
  if (trace.future.size() != c || trace.unit_noise.size() != g.symbol_count()) {
    throw std::invalid_argument("channel trace does not match the codec geometry");
  }
  EvalRecord rec;
  rec.image_id = ctx.image_id;
  rec.scheme = scheme;
  rec.snr_db = snr_db;

  arrange::FeatureOrder order(c);
  std::iota(order.begin(), order.end(), 0);
  if (scheme == SchemeId::RANDOM_ORDER) {
    std::mt19937_64 rng(trace.permutation_seed);
    std::shuffle(order.begin(), order.end(), rng);
  } else if (uses_priority(scheme)) {
    const auto& xi = uses_students(scheme) ? ctx.student_xi : ctx.teacher_xi;
    if (!xi) throw std::invalid_argument(to_string(scheme) + ": image context lacks priorities");
    rec.priority_ms = uses_students(scheme) ? ctx.student_ms : ctx.teacher_ms;
    const auto csi = detail::transmitter_csi(
        scheme, m, trace.history, uses_prediction(scheme) ? std::span<const cplx>{} : std::span(trace.future), c);
    if (uses_prediction(scheme)) rec.predictor_nmse = predictor::nmse(csi, trace.future);
    order = arrange::arrange(ctx.features, *xi, csi).order;
  }
  const auto arranged = arrange::permute_features(ctx.features, order);

  const double sigma = channel::noise_sigma_from_snr(snr_db, m.power);
  std::vector<cplx> noise(trace.unit_noise);
  for (auto& n : noise) n *= sigma;
  const auto x = codec::to_symbols(arranged, m.power);
  const auto y = channel::apply_channel(x, trace.future, noise);
  const auto eq = channel::equalize(y, trace.future, sigma, m.equalizer);
  const auto received = arrange::inverse_arrange(codec::from_symbols(eq, g.feature_shape()), order);
  rec.psnr = codec::psnr(*ctx.image, m.codec->decode(received));

  for (const auto& h : trace.future) rec.slot_gain.push_back(std::abs(h));
  rec.eta_bits = uses_priority(scheme) || scheme == SchemeId::RANDOM_ORDER ? arrange::order_overhead_bits(c) : 0.0;
  rec.order = std::move(order);
  rec.total_ms = elapsed_ms(t0) + rec.priority_ms;
  return rec;
}

inline EvalRecord run_pipeline(const nn::Tensor& image, SchemeId scheme, const Models& m, const ChannelTrace& trace,
                               double snr_db, std::size_t image_id = 0) {
  m.require(scheme);
  const auto ctx = prepare_image(image_id, image, m, uses_teacher(scheme), uses_students(scheme));
  return run_pipeline(ctx, scheme, m, trace, snr_db);
}

// ---------------------------------------------------------------------------
// Statistics

struct PairedTest {
  double mean_diff = 0.0;
  double t = 0.0;
  double p_value = 1.0;  // H1: mean difference > 0
  std::size_t n = 0;
};

/// One-sided paired t-test on finite differences.
inline PairedTest paired_one_sided(std::span<const double> diff) {
  PairedTest r;
  std::vector<double> d;
  for (double v : diff) {
    if (std::isfinite(v)) d.push_back(v);
  }
  r.n = d.size();
  if (r.n < 2) return r;
  const double n = static_cast<double>(r.n);
  for (double v : d) r.mean_diff += v;
  r.mean_diff /= n;
  double var = 0.0;
  for (double v : d) var += (v - r.mean_diff) * (v - r.mean_diff);
  var /= n - 1.0;
  if (var == 0.0) {
    r.t = r.mean_diff > 0 ? INFINITY : (r.mean_diff < 0 ? -INFINITY : 0.0);
    r.p_value = r.mean_diff > 0 ? 0.0 : 1.0;
    return r;
  }
  r.t = r.mean_diff / std::sqrt(var / n);
  boost::math::students_t dist(n - 1.0);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

/// Mean of finite values and the 95% percentile-bootstrap half-width, with
/// resampling over images.
struct MeanCi {
  double mean = NAN;
  double ci = NAN;
  std::size_t n = 0;
};

inline MeanCi bootstrap_mean(std::span<const double> values, std::size_t resamples, std::uint64_t seed) {
  std::vector<double> v;
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
  }
  MeanCi r;
  r.n = v.size();
  if (v.empty()) return r;
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += v[pick(rng)];
    m = acc / static_cast<double>(v.size());
  }
  std::sort(means.begin(), means.end());
  const auto q = [&](double p) { return means[static_cast<std::size_t>(std::floor(p * static_cast<double>(resamples - 1)))]; };
  r.ci = resamples > 1 ? 0.5 * (q(0.975) - q(0.025)) : 0.0;
  return r;
}

}  // namespace fast::harness
