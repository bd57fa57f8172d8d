#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fast/harness/eval.hpp"

namespace fast::harness {

struct ExperimentConfig {
  codec::Geometry geometry = codec::Geometry::desk();
  std::vector<double> snr_test_db{0, 5, 10, 15, 20, 25};
  channel::SosConfig channel{};
  priority::PriorityWeights weights{};
  priority::NoiseBudget budget{};
  std::vector<SchemeId> schemes{std::begin(kAllSchemes), std::end(kAllSchemes)};
  channel::Equalizer equalizer = channel::Equalizer::Mmse;
  double power = 1.0;
  std::size_t history = 32;                 // t1
  std::size_t bootstrap_resamples = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const {
    codec::check_geometry(geometry);
    if (std::abs(geometry.bandwidth_ratio() - 0.25) > 1e-12) {
      throw std::invalid_argument("experiment geometry must have bandwidth ratio 1/4");
    }
    if (snr_test_db.empty()) throw std::invalid_argument("experiment needs at least one test SNR");
    if (schemes.empty()) throw std::invalid_argument("experiment needs at least one scheme");
    weights.validate();
    channel.validate();
  }
};

struct Aggregate {
  SchemeId scheme;
  double snr_db;
  MeanCi psnr;
  double mean_eta_bits = 0.0;
  std::optional<double> mean_predictor_nmse;
};

struct Comparison {
  SchemeId better;
  SchemeId worse;
  double snr_db;
  PairedTest test;
};

struct SweepResult {
  std::vector<EvalRecord> records;   // image-major, then SNR, then scheme
  std::vector<Aggregate> aggregates; // scheme-major, then SNR
  std::vector<Comparison> comparisons;

  /// Per-image PSNR of one scheme at one SNR, in image order.
  std::vector<double> psnr_of(SchemeId s, double snr_db) const {
    std::vector<double> out;
    for (const auto& r : records) {
      if (r.scheme == s && r.snr_db == snr_db) out.push_back(r.psnr);
    }
    return out;
  }

  const Aggregate& aggregate(SchemeId s, double snr_db) const {
    for (const auto& a : aggregates) {
      if (a.scheme == s && a.snr_db == snr_db) return a;
    }
    throw std::out_of_range("no aggregate for " + to_string(s) + " at " + std::to_string(snr_db) + " dB");
  }

  const Comparison* comparison(SchemeId better, SchemeId worse, double snr_db) const {
    for (const auto& c : comparisons) {
      if (c.better == better && c.worse == worse && c.snr_db == snr_db) return &c;
    }
    return nullptr;
  }
};

/// Paired per-image PSNR differences a - b; pairs with a non-finite side are dropped.
inline std::vector<double> paired_differences(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    if (std::isfinite(a[i]) && std::isfinite(b[i])) d.push_back(a[i] - b[i]);
  }
  return d;
}

/// The ordered pairs the scheme hierarchy is tested on, when both are present.
inline std::vector<std::pair<SchemeId, SchemeId>> hierarchy_pairs(const std::vector<SchemeId>& schemes) {
  const std::pair<SchemeId, SchemeId> all[] = {
      {SchemeId::KC_FP, SchemeId::RANDOM_ORDER}, {SchemeId::KC_FP, SchemeId::DJSCC},
      {SchemeId::KC_FP, SchemeId::PC_FP},        {SchemeId::PC_FP, SchemeId::DJSCC},
      {SchemeId::KC_FP_KD, SchemeId::DJSCC},     {SchemeId::PC_FP_KD, SchemeId::DJSCC},
      {SchemeId::KC_FP_KD, SchemeId::KC_FP},     {SchemeId::PC_FP_KD, SchemeId::PC_FP}};
  auto has = [&](SchemeId s) { return std::find(schemes.begin(), schemes.end(), s) != schemes.end(); };
  std::vector<std::pair<SchemeId, SchemeId>> out;
  for (const auto& p : all) {
    if (has(p.first) && has(p.second)) out.push_back(p);
  }
  return out;
}

/// Every scheme on every (image, SNR) cell with one shared channel trace per
/// cell, then per-(scheme, SNR) means with bootstrap intervals.
inline SweepResult run_eval_sweep(const ExperimentConfig& cfg, const Models& models,
                                  const std::vector<nn::Tensor>& images,
                                  const std::function<void(std::size_t)>& on_image = {}) {
  cfg.validate();
  if (images.empty()) throw std::invalid_argument("run_eval_sweep: no test images");
  for (auto s : cfg.schemes) models.require(s);
  if (models.predictor && models.predictor->config().window != cfg.history) {
    throw std::invalid_argument("predictor window does not match the configured history length");
  }
  bool teacher = false, students = false;
  for (auto s : cfg.schemes) {
    teacher = teacher || uses_teacher(s);
    students = students || uses_students(s);
  }
  const auto& g = models.codec->geometry;
  std::vector<std::vector<EvalRecord>> per_image(images.size());
  std::atomic<std::size_t> done{0};
  std::mutex progress;
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < images.size(); i += stride) {
      const auto ctx = prepare_image(i, images[i], models, teacher, students);
      for (std::size_t j = 0; j < cfg.snr_test_db.size(); ++j) {
        const std::uint64_t cell = i * cfg.snr_test_db.size() + j;
        const auto trace = make_trace(cfg.channel, cfg.history, g.feature_channels, g.symbol_count(), cfg.seed, cell);
        for (auto s : cfg.schemes) per_image[i].push_back(run_pipeline(ctx, s, models, trace, cfg.snr_test_db[j]));
      }
      const std::size_t n = ++done;
      if (on_image) {
        std::lock_guard lock(progress);
        on_image(n);
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(images.size())));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  SweepResult res;
  for (auto& recs : per_image) {
    for (auto& r : recs) res.records.push_back(std::move(r));
  }
  for (auto s : cfg.schemes) {
    for (std::size_t j = 0; j < cfg.snr_test_db.size(); ++j) {
      const double snr = cfg.snr_test_db[j];
      Aggregate a{s, snr, bootstrap_mean(res.psnr_of(s, snr), cfg.bootstrap_resamples, cfg.seed + j), 0.0, {}};
      double eta = 0.0, nm = 0.0;
      std::size_t count = 0;
      for (const auto& r : res.records) {
        if (r.scheme != s || r.snr_db != snr) continue;
        eta += r.eta_bits;
        if (r.predictor_nmse) nm += *r.predictor_nmse;
        ++count;
      }
      a.mean_eta_bits = eta / static_cast<double>(count);
      if (uses_prediction(s)) a.mean_predictor_nmse = nm / static_cast<double>(count);
      res.aggregates.push_back(a);
    }
  }
  for (const auto& [hi, lo] : hierarchy_pairs(cfg.schemes)) {
    for (double snr : cfg.snr_test_db) {
      res.comparisons.push_back({hi, lo, snr, paired_one_sided(paired_differences(res.psnr_of(hi, snr), res.psnr_of(lo, snr)))});
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_number(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

/// Long-form CSV: scheme,snr,mean_psnr,ci,n
inline void write_csv(std::ostream& os, const SweepResult& r) {
  os << "scheme,snr,mean_psnr,ci,n\n";
  for (const auto& a : r.aggregates) {
    os << to_string(a.scheme) << ',' << format_number(a.snr_db) << ',' << format_number(a.psnr.mean) << ','
       << format_number(a.psnr.ci) << ',' << a.psnr.n << '\n';
  }
}

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const SweepResult& r, std::size_t images) {
  using nlohmann::json;
  json j;
  j["seed"] = cfg.seed;
  j["images"] = images;
  j["geometry"] = {{"image", cfg.geometry.image_shape()}, {"features", cfg.geometry.feature_shape()},
                   {"bandwidth_ratio", cfg.geometry.bandwidth_ratio()}};
  j["channel"] = {{"paths", cfg.channel.paths},
                  {"max_doppler_hz", cfg.channel.max_doppler_hz},
                  {"sample_period_s", cfg.channel.sample_period_s},
                  {"seed", cfg.channel.seed}};
  j["priority"] = {{"alpha", cfg.weights.alpha},
                   {"beta", cfg.weights.beta},
                   {"radius_fraction", cfg.budget.radius_fraction},
                   {"pga_steps", cfg.budget.steps},
                   {"pga_step_fraction", cfg.budget.step_fraction}};
  j["snr_test_db"] = cfg.snr_test_db;
  json agg = json::array();
  for (const auto& a : r.aggregates) {
    json row{{"scheme", to_string(a.scheme)},
             {"snr", a.snr_db},
             {"mean_psnr", number_or_null(a.psnr.mean)},
             {"ci", number_or_null(a.psnr.ci)},
             {"n", a.psnr.n},
             {"eta_bits", a.mean_eta_bits}};
    if (a.mean_predictor_nmse) row["predictor_nmse"] = *a.mean_predictor_nmse;
    agg.push_back(std::move(row));
  }
  j["aggregates"] = std::move(agg);
  json cmp = json::array();
  for (const auto& c : r.comparisons) {
    cmp.push_back({{"better", to_string(c.better)},
                   {"worse", to_string(c.worse)},
                   {"snr", c.snr_db},
                   {"mean_diff", c.test.mean_diff},
                   {"t", number_or_null(c.test.t)},
                   {"p_value", c.test.p_value},
                   {"n", c.test.n}});
  }
  j["comparisons"] = std::move(cmp);
  return j;
}

/// One JSON object per record. Timings are left out so that reruns are
/// byte-identical.
inline void write_jsonl(std::ostream& os, const SweepResult& r) {
  for (const auto& rec : r.records) {
    nlohmann::json j{{"image", rec.image_id},
                     {"scheme", to_string(rec.scheme)},
                     {"snr", rec.snr_db},
                     {"psnr", number_or_null(rec.psnr)},
                     {"slot_gain", rec.slot_gain},
                     {"order", rec.order},
                     {"eta_bits", rec.eta_bits}};
    if (rec.predictor_nmse) j["predictor_nmse"] = *rec.predictor_nmse;
    os << j.dump() << '\n';
  }
}

}  // namespace fast::harness
