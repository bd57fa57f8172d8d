#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/channel/sos.hpp"
#include "fast/nn/param_set.hpp"
#include "fast/nn/tensor.hpp"

namespace fast::harness {

using nn::Tensor;
using Dataset = std::vector<Tensor>;

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

/// Parses CIFAR-10 binary batch bytes: records of one label byte followed by
/// the R, G and B planes (row-major). Labels are dropped.
inline Dataset parse_cifar10(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    const std::size_t whole = bytes.size() / kCifarRecord;
    throw std::runtime_error("CIFAR-10: truncated record at byte offset " +
                             std::to_string(whole * kCifarRecord) + ": expected " +
                             std::to_string((whole + 1) * kCifarRecord) + " bytes, got " +
                             std::to_string(bytes.size()));
  }
  Dataset out;
  out.reserve(bytes.size() / kCifarRecord);
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
    Tensor img({3, kCifarSide, kCifarSide});
    for (std::size_t i = 0; i < kCifarPixels; ++i) img[i] = bytes[off + 1 + i] / 255.0;
    out.push_back(std::move(img));
  }
  return out;
}

inline Dataset load_cifar10(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("CIFAR-10: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_cifar10(bytes);
}

/// Procedural RGB scenes: a two-colour linear gradient, one to three
/// rectangles and an oriented sinusoidal texture.
inline Tensor synthetic_image(std::size_t side, std::uint64_t seed, std::uint64_t index) {
  auto rng = channel::make_rng(seed, index);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = static_cast<double>(side);
  Tensor img({3, side, side});

  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = u(rng);
    c1[c] = u(rng);
  }
  const double dir = 2.0 * std::numbers::pi * u(rng);
  const double dx = std::cos(dir), dy = std::sin(dir);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double t = 0.5 + 0.5 * ((x / s - 0.5) * dx + (y / s - 0.5) * dy) * std::numbers::sqrt2;
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = c0[c] + (c1[c] - c0[c]) * t;
    }
  }

  const int rects = 1 + static_cast<int>(u(rng) * 3.0);
  for (int r = 0; r < rects; ++r) {
    const auto x0 = static_cast<std::size_t>(u(rng) * s * 0.75);
    const auto y0 = static_cast<std::size_t>(u(rng) * s * 0.75);
    const auto w = 2 + static_cast<std::size_t>(u(rng) * s * 0.5);
    const auto h = 2 + static_cast<std::size_t>(u(rng) * s * 0.5);
    const double alpha = 0.6 + 0.4 * u(rng);
    double col[3];
    for (auto& v : col) v = u(rng);
    for (std::size_t y = y0; y < std::min(side, y0 + h); ++y)
      for (std::size_t x = x0; x < std::min(side, x0 + w); ++x)
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = (1 - alpha) * img.at(c, y, x) + alpha * col[c];
  }

  const double amp = 0.08 + 0.12 * u(rng);
  const double freq = (0.5 + 2.5 * u(rng)) * 2.0 * std::numbers::pi / s;
  const double orient = std::numbers::pi * u(rng);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  double weight[3];
  for (auto& v : weight) v = 0.5 + 0.5 * u(rng);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double wave =
          amp * std::sin(freq * (x * std::cos(orient) + y * std::sin(orient)) + phase);
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(img.at(c, y, x) + weight[c] * wave, 0.0, 1.0);
    }
  }
  return img;
}

inline Dataset gen_synthetic_dataset(std::size_t count, std::size_t side, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("gen_synthetic_dataset: count must be >= 1");
  Dataset out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synthetic_image(side, seed, i));
  return out;
}

inline double pixel_variance(const Tensor& img) {
  double mean = 0.0;
  for (double v : img.data()) mean += v;
  mean /= static_cast<double>(img.size());
  double var = 0.0;
  for (double v : img.data()) var += (v - mean) * (v - mean);
  return var / static_cast<double>(img.size());
}

/// Image container written by `gen-data`:
///   "FSTI" | u32 version=1 | u32 channels | u32 height | u32 width | u64 count |
///   count x (channels*height*width) doubles
inline void save_dataset(const std::string& path, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("save_dataset: empty dataset");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  const auto& shape = data.front().shape();
  os.write("FSTI", 4);
  nn::io::put<std::uint32_t>(os, 1);
  for (auto d : shape) nn::io::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  nn::io::put<std::uint64_t>(os, data.size());
  for (const auto& img : data) {
    if (img.shape() != shape) throw nn::ShapeError("save_dataset: mixed image shapes");
    nn::io::put_doubles(os, img.data());
  }
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "FSTI", 4) != 0) throw std::runtime_error(path + " is not an image dataset");
  if (nn::io::get<std::uint32_t>(is) != 1) throw std::runtime_error("unsupported dataset version");
  nn::Shape shape(3);
  for (auto& d : shape) d = nn::io::get<std::uint32_t>(is);
  const auto count = nn::io::get<std::uint64_t>(is);
  Dataset out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Tensor t(shape);
    nn::io::get_doubles(is, t.data());
    out.push_back(std::move(t));
  }
  return out;
}

/// Loads either a CIFAR-10 batch (*.bin) or an FSTI container.
inline Dataset load_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  char magic[4] = {};
  is.read(magic, 4);
  if (is && std::memcmp(magic, "FSTI", 4) == 0) return load_dataset(path);
  return load_cifar10(path);
}

/// Deterministic 90/10 split: the last tenth (at least one image) is held out.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& all, double test_fraction = 0.1) {
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(all.size() * test_fraction)));
  if (n_test >= all.size()) throw std::invalid_argument("split: dataset too small to hold out a test set");
  const auto cut = static_cast<std::ptrdiff_t>(all.size() - n_test);
  return {Dataset(all.begin(), all.begin() + cut), Dataset(all.begin() + cut, all.end())};
}

}  // namespace fast::harness
