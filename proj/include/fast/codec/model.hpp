#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/nn/ops.hpp"
#include "fast/nn/param_set.hpp"

namespace fast::codec {

using nn::BoundParams;
using nn::ParamSet;
using nn::Tape;
using nn::Tensor;
using nn::Var;

/// Image and feature-tensor dimensions for one codec profile.
struct Geometry {
  std::size_t image_channels = 3;
  std::size_t image_size = 16;     // square images
  std::size_t feature_channels = 24;
  std::size_t feature_size = 4;    // square feature maps

  static Geometry desk() { return {3, 16, 24, 4}; }
  static Geometry paper() { return {3, 32, 24, 8}; }

  nn::Shape image_shape() const { return {image_channels, image_size, image_size}; }
  nn::Shape feature_shape() const { return {feature_channels, feature_size, feature_size}; }
  std::size_t image_len() const { return image_channels * image_size * image_size; }
  std::size_t feature_len() const { return feature_channels * feature_size * feature_size; }
  std::size_t symbol_count() const { return feature_len() / 2; }
  std::size_t symbols_per_slot() const { return feature_size * feature_size / 2; }
  double bandwidth_ratio() const {
    return static_cast<double>(symbol_count()) / static_cast<double>(image_len());
  }

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

struct LayerSpec {
  std::size_t in, out, kernel, stride, pad;
};

// Both profiles downsample by 4 with two stride-2 stages. Channel widths follow
// the 16 / 3x32 / 24 encoder and 3x32 / 16 / 3 decoder stacks.
inline std::vector<LayerSpec> encoder_layers(const Geometry& g) {
  return {{g.image_channels, 16, 4, 2, 1},
          {16, 32, 4, 2, 1},
          {32, 32, 3, 1, 1},
          {32, 32, 3, 1, 1},
          {32, g.feature_channels, 3, 1, 1}};
}

inline std::vector<LayerSpec> decoder_layers(const Geometry& g) {
  return {{g.feature_channels, 32, 3, 1, 1},
          {32, 32, 3, 1, 1},
          {32, 32, 4, 2, 1},
          {32, 16, 3, 1, 1},
          {16, g.image_channels, 4, 2, 1}};
}

inline void check_geometry(const Geometry& g) {
  if (g.image_size != 4 * g.feature_size) {
    throw std::invalid_argument("codec geometry: image side must be 4x the feature side");
  }
  if ((g.feature_size * g.feature_size) % 2 != 0) {
    throw std::invalid_argument("codec geometry: feature maps must hold an even number of values");
  }
}

inline ParamSet init_encoder(const Geometry& g, std::mt19937_64& rng) {
  ParamSet ps;
  const auto layers = encoder_layers(g);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto fan_in = l.in * l.kernel * l.kernel;
    ps.add("enc" + std::to_string(i) + ".w", nn::kaiming_uniform({l.out, l.in, l.kernel, l.kernel}, fan_in, rng));
    ps.add("enc" + std::to_string(i) + ".b", Tensor({l.out}));
  }
  return ps;
}

inline ParamSet init_decoder(const Geometry& g, std::mt19937_64& rng) {
  ParamSet ps;
  const auto layers = decoder_layers(g);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    // Each output pixel of a stride-s transposed conv sees in*(k/s)^2 taps.
    const auto taps = l.kernel / l.stride;
    const auto fan_in = l.in * taps * taps;
    ps.add("dec" + std::to_string(i) + ".w", nn::kaiming_uniform({l.in, l.out, l.kernel, l.kernel}, fan_in, rng));
    ps.add("dec" + std::to_string(i) + ".b", Tensor({l.out}));
  }
  return ps;
}

/// ReLU on hidden layers, linear feature output.
inline Var encoder_forward(const Geometry& g, const BoundParams& p, const Var& image) {
  if (image.shape() != g.image_shape()) {
    throw nn::ShapeError("encode: image " + nn::to_string(image.shape()) + " vs expected " +
                         nn::to_string(g.image_shape()));
  }
  const auto layers = encoder_layers(g);
  Var h = image;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto& v = p.vars();
    h = nn::bias_add(nn::conv2d(h, v[2 * i], l.stride, l.pad), v[2 * i + 1]);
    if (i + 1 < layers.size()) h = nn::relu(h);
  }
  return h;
}

/// ReLU on hidden layers, sigmoid pixel head.
inline Var decoder_forward(const Geometry& g, const BoundParams& p, const Var& features) {
  if (features.shape() != g.feature_shape()) {
    throw nn::ShapeError("decode: features " + nn::to_string(features.shape()) + " vs expected " +
                         nn::to_string(g.feature_shape()));
  }
  const auto layers = decoder_layers(g);
  Var h = features;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto& v = p.vars();
    h = nn::bias_add(nn::conv2d_transpose(h, v[2 * i], l.stride, l.pad), v[2 * i + 1]);
    h = i + 1 < layers.size() ? nn::relu(h) : nn::sigmoid(h);
  }
  return h;
}

/// Trained encoder/decoder pair (theta, phi) plus the SNR it was trained at.
struct Codec {
  Geometry geometry;
  ParamSet encoder;
  ParamSet decoder;
  double snr_train_db = 13.0;

  static Codec init(const Geometry& g, std::uint64_t seed) {
    check_geometry(g);
    std::mt19937_64 rng(seed);
    Codec c;
    c.geometry = g;
    c.encoder = init_encoder(g, rng);
    c.decoder = init_decoder(g, rng);
    return c;
  }

  Tensor encode(const Tensor& image) const {
    Tape tape;
    BoundParams p(tape, encoder, false);
    return encoder_forward(geometry, p, tape.constant(image)).value();
  }

  Tensor decode(const Tensor& features) const {
    Tape tape;
    BoundParams p(tape, decoder, false);
    return decoder_forward(geometry, p, tape.constant(features)).value();
  }

  /// Records the decoder on `tape` with frozen weights.
  Var decode(Tape& tape, const Var& features) const {
    BoundParams p(tape, decoder, false);
    return decoder_forward(geometry, p, features);
  }

  void save(const std::string& prefix) const {
    encoder.save_file(prefix + ".enc");
    decoder.save_file(prefix + ".dec");
  }

  static Codec load(const std::string& prefix, const Geometry& g) {
    Codec c;
    c.geometry = g;
    c.encoder = ParamSet::load_file(prefix + ".enc");
    c.decoder = ParamSet::load_file(prefix + ".dec");
    const auto& w0 = c.encoder.at(0);
    if (w0.dim(1) != g.image_channels || c.decoder.at(0).dim(0) != g.feature_channels) {
      throw std::runtime_error("checkpoint " + prefix + " does not match the requested geometry");
    }
    return c;
  }
};

/// Frozen decoder g1(.; phi) as consumed by the priority algorithms.
struct CodecDecoder {
  const Codec* codec;
  Var forward(Tape& tape, const Var& features) const { return codec->decode(tape, features); }
};

}  // namespace fast::codec
