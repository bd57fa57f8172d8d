#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fast/channel/link.hpp"
#include "fast/channel/sos.hpp"
#include "fast/codec/model.hpp"
#include "fast/nn/adam.hpp"

namespace fast::codec {

/// Differentiable equivalent of
///   from_symbols(equalize(apply_channel(to_symbols(z), h, n), h), scale)
/// for a fixed channel draw (h per slot, noise n per symbol). With G_j the
/// end-to-end slot gain e_j h_j and m = e_j n, every symbol pair becomes
///   z_hat = G_j z + (||z|| / sqrt(k P)) m.
inline Var fading_link(const Var& features, std::span<const cplx> slot_csi,
                       std::span<const cplx> noise, double sigma, channel::Equalizer eq,
                       double power = 1.0) {
  const auto& z = features.value();
  if (z.rank() != 3 || (z.dim(1) * z.dim(2)) % 2 != 0 || slot_csi.size() != z.dim(0) ||
      noise.size() * 2 != z.size()) {
    throw nn::ShapeError("fading_link: features " + nn::to_string(z.shape()) + " with " +
                         std::to_string(slot_csi.size()) + " slots and " +
                         std::to_string(noise.size()) + " noise samples");
  }
  const std::size_t k = z.size() / 2;
  const std::size_t per_slot = z.dim(1) * z.dim(2) / 2;
  std::vector<cplx> gain(slot_csi.size());
  auto mvec = std::make_shared<std::vector<cplx>>(k);
  for (std::size_t j = 0; j < slot_csi.size(); ++j) {
    const cplx e = channel::equalizer_gain(slot_csi[j], sigma, eq);
    gain[j] = e * slot_csi[j];
    for (std::size_t i = j * per_slot; i < (j + 1) * per_slot; ++i) (*mvec)[i] = e * noise[i];
  }
  const double norm = std::sqrt(nn::squared_norm(z.data()));
  const double root_kp = std::sqrt(static_cast<double>(k) * power);
  Tensor out(z.shape());
  if (norm > 0.0) {
    const double c = norm / root_kp;
    for (std::size_t i = 0; i < k; ++i) {
      const cplx v = gain[i / per_slot] * cplx(z[2 * i], z[2 * i + 1]) + c * (*mvec)[i];
      out[2 * i] = v.real();
      out[2 * i + 1] = v.imag();
    }
  }
  return features.tape()->record(
      std::move(out), {features},
      [features, gain = std::move(gain), mvec, per_slot, norm, root_kp, k](
          const Tensor& g, std::span<Tensor* const> gi) {
        if (norm == 0.0) return;
        const auto& zv = features.value();
        auto& dz = *gi[0];
        double t = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          const cplx G = gain[i / per_slot];
          const double gr = g[2 * i], gim = g[2 * i + 1];
          dz[2 * i] += G.real() * gr + G.imag() * gim;
          dz[2 * i + 1] += -G.imag() * gr + G.real() * gim;
          t += gr * (*mvec)[i].real() + gim * (*mvec)[i].imag();
        }
        t /= root_kp * norm;
        for (std::size_t i = 0; i < zv.size(); ++i) dz[i] += t * zv[i];
      });
}

struct CodecTrainConfig {
  Geometry geometry = Geometry::desk();
  double snr_train_db = 13.0;       // +inf trains a plain autoencoder
  bool fading = true;               // false: h = 1 on every slot
  channel::SosConfig channel{};
  channel::Equalizer equalizer = channel::Equalizer::Mmse;
  double power = 1.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

struct CodecTrainResult {
  Codec codec;
  std::vector<double> epoch_loss;  // mean per-image training loss

  void write_curve_csv(std::ostream& os) const {
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
      os << (e + 1) << ',' << format_double(epoch_loss[e]) << '\n';
    }
  }

  static std::string format_double(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  }
};

/// One fresh channel draw for a training item: the first c samples of an
/// independent SOS realization, plus CN(0, sigma^2) noise.
struct ChannelDraw {
  std::vector<cplx> csi;
  std::vector<cplx> noise;
};

inline ChannelDraw draw_training_channel(const CodecTrainConfig& cfg, std::uint64_t stream) {
  ChannelDraw d;
  const auto& g = cfg.geometry;
  if (cfg.fading) {
    d.csi = channel::SosChannel(cfg.channel, stream).generate(0, g.feature_channels).samples;
  } else {
    d.csi.assign(g.feature_channels, cplx(1.0, 0.0));
  }
  auto rng = channel::make_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL, stream);
  d.noise = channel::draw_noise(g.symbol_count(), channel::noise_sigma_from_snr(cfg.snr_train_db, cfg.power), rng);
  return d;
}

/// End-to-end training through the fading channel with Eq.-5 MSE and Adam.
/// Channel coefficients and noise are constants for backpropagation.
inline CodecTrainResult train_codec(const std::vector<Tensor>& dataset, const CodecTrainConfig& cfg,
                                    const std::function<void(std::size_t, double)>& on_epoch = {}) {
  if (dataset.empty()) throw std::invalid_argument("train_codec: dataset is empty");
  CodecTrainResult result;
  result.codec = Codec::init(cfg.geometry, cfg.seed);
  result.codec.snr_train_db = cfg.snr_train_db;
  auto& codec = result.codec;
  const double sigma = channel::noise_sigma_from_snr(cfg.snr_train_db, cfg.power);

  nn::Adam enc_opt(codec.encoder, {.learning_rate = cfg.learning_rate});
  nn::Adam dec_opt(codec.decoder, {.learning_rate = cfg.learning_rate});
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::uint64_t stream = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      auto enc_grads = nn::zero_grads(codec.encoder);
      auto dec_grads = nn::zero_grads(codec.decoder);
      for (std::size_t b = start; b < end; ++b) {
        const auto& image = dataset[order[b]];
        const auto draw = draw_training_channel(cfg, stream++);
        Tape tape;
        BoundParams enc(tape, codec.encoder, true);
        BoundParams dec(tape, codec.decoder, true);
        const Var x = tape.constant(image);
        const Var z = encoder_forward(cfg.geometry, enc, x);
        const Var zhat = fading_link(z, draw.csi, draw.noise, sigma, cfg.equalizer, cfg.power);
        const Var loss = nn::mse(decoder_forward(cfg.geometry, dec, zhat), x);
        const double l = loss.value().item();
        if (!std::isfinite(l)) {
          throw std::runtime_error("train_codec: loss diverged at epoch " + std::to_string(epoch + 1) +
                                   ", item " + std::to_string(order[b]));
        }
        epoch_loss += l;
        tape.backward(loss);
        nn::accumulate_grads(tape, enc, enc_grads);
        nn::accumulate_grads(tape, dec, dec_grads);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : enc_grads) g *= inv;
      for (auto& g : dec_grads) g *= inv;
      enc_opt.step(codec.encoder, enc_grads);
      dec_opt.step(codec.decoder, dec_grads);
    }
    epoch_loss /= static_cast<double>(dataset.size());
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }
  return result;
}

}  // namespace fast::codec
