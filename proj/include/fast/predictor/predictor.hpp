#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/channel/link.hpp"
#include "fast/channel/sos.hpp"
#include "fast/nn/adam.hpp"
#include "fast/nn/lstm.hpp"
#include "fast/nn/ops.hpp"
#include "fast/nn/param_set.hpp"

namespace fast::predictor {

using channel::cplx;
using nn::BoundParams;
using nn::ParamSet;
using nn::Tape;
using nn::Tensor;
using nn::Var;

/// t1 consecutive CSI samples ending at absolute sample index `end_index`
/// (exclusive).
struct HistoryWindow {
  std::vector<cplx> samples;
  std::int64_t end_index = 0;

  std::size_t size() const noexcept { return samples.size(); }
};

/// t2 predicted samples following a HistoryWindow.
struct Forecast {
  std::vector<cplx> samples;
  std::size_t size() const noexcept { return samples.size(); }
};

struct PredictorConfig {
  std::size_t window = 32;   // t1
  std::size_t hidden = 50;
  std::size_t layers = 2;
};

/// Stacked LSTM over (Re, Im) inputs with a dense (Re, Im) head.
class ChannelPredictor {
 public:
  ChannelPredictor() = default;
  ChannelPredictor(PredictorConfig config, ParamSet params) : config_(config), params_(std::move(params)) {
    if (params_.size() != 3 * config_.layers + 2) {
      throw std::invalid_argument("predictor: parameter count does not match layer count");
    }
  }

  static ChannelPredictor init(PredictorConfig config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParamSet ps;
    for (std::size_t l = 0; l < config.layers; ++l) {
      nn::add_lstm_params(ps, "lstm" + std::to_string(l), l == 0 ? 2 : config.hidden, config.hidden, rng);
    }
    ps.add("head.w", nn::simple_uniform({2, config.hidden}, config.hidden, rng));
    ps.add("head.b", Tensor({2}));
    return ChannelPredictor(config, std::move(ps));
  }

  const PredictorConfig& config() const noexcept { return config_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }

  /// Runs the network over `inputs` from a zero state and returns the head
  /// output after every step (prediction of the following sample).
  std::vector<Var> unroll(Tape& tape, const BoundParams& p, std::span<const cplx> inputs) const {
    const auto& v = p.vars();
    std::vector<nn::LstmState> state;
    for (std::size_t l = 0; l < config_.layers; ++l) state.push_back(nn::lstm_zero_state(tape, config_.hidden));
    const Var& head_w = v[3 * config_.layers];
    const Var& head_b = v[3 * config_.layers + 1];
    std::vector<Var> outputs;
    outputs.reserve(inputs.size());
    for (const cplx& h : inputs) {
      Var x = tape.constant(Tensor({2}, std::vector<double>{h.real(), h.imag()}));
      for (std::size_t l = 0; l < config_.layers; ++l) {
        state[l] = nn::lstm_cell_step(x, state[l], {v[3 * l], v[3 * l + 1], v[3 * l + 2]});
        x = state[l].h;
      }
      outputs.push_back(nn::add(nn::dense(head_w, x), head_b));
    }
    return outputs;
  }

  cplx predict_one_step(std::span<const cplx> window) const {
    if (window.size() != config_.window) {
      throw std::invalid_argument("predict_one_step: window holds " + std::to_string(window.size()) +
                                  " samples, expected " + std::to_string(config_.window));
    }
    Tape tape;
    BoundParams p(tape, params_, false);
    const auto& out = unroll(tape, p, window).back().value();
    return {out[0], out[1]};
  }

  cplx predict_one_step(const HistoryWindow& window) const { return predict_one_step(window.samples); }

 private:
  PredictorConfig config_;
  ParamSet params_;
};

/// One-step-ahead rolling forecast: predict, append the prediction, drop the
/// oldest sample, repeat t2 times. `one_step` maps a window to the next sample.
template <class OneStep>
Forecast rolling_forecast(const HistoryWindow& window, std::size_t t2, OneStep&& one_step) {
  if (t2 < 1) throw std::invalid_argument("rolling_forecast: t2 must be >= 1");
  std::vector<cplx> w = window.samples;
  Forecast f;
  f.samples.reserve(t2);
  for (std::size_t s = 0; s < t2; ++s) {
    const cplx next = one_step(std::span<const cplx>(w));
    f.samples.push_back(next);
    w.erase(w.begin());
    w.push_back(next);
  }
  return f;
}

inline Forecast rolling_forecast(const HistoryWindow& window, std::size_t t2, const ChannelPredictor& model) {
  return rolling_forecast(window, t2, [&model](std::span<const cplx> w) { return model.predict_one_step(w); });
}

/// Repeat-last-sample baseline.
inline Forecast persistence_forecast(const HistoryWindow& window, std::size_t t2) {
  return {std::vector<cplx>(t2, window.samples.back())};
}

/// sum |pred - truth|^2 / sum |truth|^2
inline double nmse(std::span<const cplx> predicted, std::span<const cplx> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("nmse: length mismatch");
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    err += std::norm(predicted[i] - truth[i]);
    ref += std::norm(truth[i]);
  }
  return ref > 0.0 ? err / ref : (err > 0.0 ? INFINITY : 0.0);
}

struct PredictorTrainConfig {
  channel::SosConfig channel{};
  PredictorConfig model{};
  std::size_t num_sequences = 200;     // independent SOS realizations
  std::size_t sequence_length = 160;   // samples drawn per realization
  std::size_t window_stride = 8;
  std::size_t warmup = 8;              // steps excluded from the loss
  std::size_t epochs = 15;
  std::size_t batch_size = 16;
  double learning_rate = 3e-3;
  double final_learning_rate = 3e-4;   // reached by geometric decay at the last epoch
  double input_noise = 0.02;           // std of CN noise added to training inputs only
  double holdout_fraction = 0.1;
  std::uint64_t seed = 1;
};

struct PredictorTrainResult {
  ChannelPredictor predictor;
  std::vector<double> epoch_loss;
  double holdout_nmse = 0.0;     // one-step, full t1 windows
};

/// (t1 + 1)-sample training slices: inputs are the first t1 samples, the
/// target at step i is sample i + 1.
inline std::vector<std::vector<cplx>> slice_windows(const channel::SosConfig& sos, std::uint64_t first_stream,
                                                    std::size_t sequences, std::size_t length,
                                                    std::size_t window, std::size_t stride) {
  std::vector<std::vector<cplx>> out;
  for (std::size_t r = 0; r < sequences; ++r) {
    const auto seq = channel::SosChannel(sos, first_stream + r).generate(0, length);
    for (std::size_t s = 0; s + window + 1 <= seq.size(); s += stride) {
      out.emplace_back(seq.samples.begin() + static_cast<std::ptrdiff_t>(s),
                       seq.samples.begin() + static_cast<std::ptrdiff_t>(s + window + 1));
    }
  }
  return out;
}

/// One-step NMSE of full-window predictions over a set of (t1 + 1) slices.
inline double one_step_nmse(const ChannelPredictor& model, const std::vector<std::vector<cplx>>& slices) {
  double err = 0.0, ref = 0.0;
  const std::size_t t1 = model.config().window;
  for (const auto& s : slices) {
    const cplx pred = model.predict_one_step(std::span<const cplx>(s.data(), t1));
    err += std::norm(pred - s[t1]);
    ref += std::norm(s[t1]);
  }
  return err / ref;
}

/// Supervised one-step-ahead MSE training on slices of generated SOS traces.
/// Realizations [0, n_train) train, the rest are held out.
inline PredictorTrainResult train_predictor(const PredictorTrainConfig& cfg,
                                            const std::function<void(std::size_t, double)>& on_epoch = {}) {
  const std::size_t t1 = cfg.model.window;
  const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.num_sequences * cfg.holdout_fraction));
  if (n_hold >= cfg.num_sequences) throw std::invalid_argument("train_predictor: need more sequences");
  const auto train = slice_windows(cfg.channel, 0, cfg.num_sequences - n_hold, cfg.sequence_length, t1,
                                   cfg.window_stride);
  const auto hold = slice_windows(cfg.channel, cfg.num_sequences - n_hold, n_hold, cfg.sequence_length, t1,
                                  cfg.window_stride);
  if (train.empty()) throw std::invalid_argument("train_predictor: sequences shorter than the window");

  PredictorTrainResult result;
  result.predictor = ChannelPredictor::init(cfg.model, cfg.seed);
  auto& params = result.predictor.params();
  nn::Adam opt(params, {.learning_rate = cfg.learning_rate});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  auto noise_rng = channel::make_rng(cfg.seed, 1);
  const double decay = cfg.epochs > 1 ? std::pow(cfg.final_learning_rate / cfg.learning_rate,
                                                 1.0 / static_cast<double>(cfg.epochs - 1))
                                      : 1.0;
  std::vector<cplx> inputs(t1);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_learning_rate(cfg.learning_rate * std::pow(decay, static_cast<double>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      auto grads = nn::zero_grads(params);
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = train[order[b]];
        std::copy_n(s.begin(), t1, inputs.begin());
        if (cfg.input_noise > 0.0) {
          const auto n = channel::draw_noise(t1, cfg.input_noise, noise_rng);
          for (std::size_t i = 0; i < t1; ++i) inputs[i] += n[i];
        }
        Tape tape;
        BoundParams p(tape, params, true);
        const auto outs = result.predictor.unroll(tape, p, inputs);
        Var loss;
        std::size_t terms = 0;
        for (std::size_t i = std::min(cfg.warmup, t1 - 1); i < t1; ++i, ++terms) {
          const Var target = tape.constant(Tensor({2}, std::vector<double>{s[i + 1].real(), s[i + 1].imag()}));
          const Var term = nn::mse(outs[i], target);
          loss = loss.valid() ? nn::add(loss, term) : term;
        }
        loss = nn::scale(loss, 1.0 / static_cast<double>(terms));
        const double l = loss.value().item();
        if (!std::isfinite(l)) {
          throw std::runtime_error("train_predictor: loss diverged at epoch " + std::to_string(epoch + 1));
        }
        total += l;
        tape.backward(loss);
        nn::accumulate_grads(tape, p, grads);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) g *= inv;
      opt.step(params, grads);
    }
    result.epoch_loss.push_back(total / static_cast<double>(train.size()));
    if (on_epoch) on_epoch(epoch + 1, result.epoch_loss.back());
  }
  result.holdout_nmse = one_step_nmse(result.predictor, hold);
  return result;
}

/// Per-horizon-step NMSE of the rolling forecast and of persistence over
/// held-out windows.
struct HorizonReport {
  std::vector<double> model_nmse;        // per horizon step
  std::vector<double> persistence_nmse;  // per horizon step
  std::size_t windows = 0;
  std::size_t model_wins = 0;            // windows where the model beats persistence
};

inline HorizonReport evaluate_horizon(const ChannelPredictor& model, const channel::SosConfig& sos,
                                      std::uint64_t first_stream, std::size_t windows, std::size_t t2) {
  const std::size_t t1 = model.config().window;
  HorizonReport rep;
  rep.windows = windows;
  std::vector<double> err_m(t2, 0.0), err_p(t2, 0.0), ref(t2, 0.0);
  for (std::size_t w = 0; w < windows; ++w) {
    const auto seq = channel::SosChannel(sos, first_stream + w).generate(0, t1 + t2);
    HistoryWindow hist{{seq.samples.begin(), seq.samples.begin() + static_cast<std::ptrdiff_t>(t1)},
                       static_cast<std::int64_t>(t1)};
    const std::span<const cplx> truth(seq.samples.data() + t1, t2);
    const auto fm = rolling_forecast(hist, t2, model);
    const auto fp = persistence_forecast(hist, t2);
    if (nmse(fm.samples, truth) < nmse(fp.samples, truth)) ++rep.model_wins;
    for (std::size_t s = 0; s < t2; ++s) {
      err_m[s] += std::norm(fm.samples[s] - truth[s]);
      err_p[s] += std::norm(fp.samples[s] - truth[s]);
      ref[s] += std::norm(truth[s]);
    }
  }
  for (std::size_t s = 0; s < t2; ++s) {
    rep.model_nmse.push_back(err_m[s] / ref[s]);
    rep.persistence_nmse.push_back(err_p[s] / ref[s]);
  }
  return rep;
}

}  // namespace fast::predictor
