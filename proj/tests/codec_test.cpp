#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "fast/codec/metrics.hpp"
#include "fast/codec/symbols.hpp"
#include "fast/codec/train.hpp"
#include "fast/harness/dataset.hpp"
#include "support/gradcheck.hpp"

using namespace fast;
using namespace fast::codec;
using fast::testing::random_tensor;

TEST(Geometry, BandwidthRatioIsQuarter) {
  for (const auto& g : {Geometry::desk(), Geometry::paper()}) {
    EXPECT_DOUBLE_EQ(g.bandwidth_ratio(), 0.25);
    EXPECT_EQ(g.feature_channels, 24u);
  }
  EXPECT_EQ(Geometry::desk().feature_shape(), (nn::Shape{24, 4, 4}));
  EXPECT_EQ(Geometry::paper().feature_shape(), (nn::Shape{24, 8, 8}));
}

TEST(Codec, EncodeShapeForBothProfiles) {
  for (const auto& g : {Geometry::desk(), Geometry::paper()}) {
    const auto c = Codec::init(g, 3);
    std::mt19937_64 rng(1);
    const auto z = c.encode(random_tensor(g.image_shape(), rng, 0.0, 1.0));
    EXPECT_EQ(z.shape(), g.feature_shape());
    EXPECT_EQ(c.decode(z).shape(), g.image_shape());
  }
}

TEST(Codec, ZeroImageWithZeroBiasesEncodesToZero) {
  auto c = Codec::init(Geometry::desk(), 5);
  for (std::size_t i = 0; i < c.encoder.size(); ++i) {
    if (c.encoder.name(i).ends_with(".b")) c.encoder.at(i).fill(0.0);
  }
  const auto z = c.encode(nn::Tensor(Geometry::desk().image_shape()));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Codec, DecoderOutputInUnitRange) {
  const auto c = Codec::init(Geometry::desk(), 8);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5; ++i) {
    const auto out = c.decode(random_tensor(Geometry::desk().feature_shape(), rng, -20.0, 20.0));
    for (double v : out.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Codec, InitIsDeterministic) {
  const auto a = Codec::init(Geometry::desk(), 11);
  const auto b = Codec::init(Geometry::desk(), 11);
  EXPECT_EQ(a.encoder.bytes(), b.encoder.bytes());
  EXPECT_EQ(a.decoder.bytes(), b.decoder.bytes());
  EXPECT_NE(a.encoder.bytes(), Codec::init(Geometry::desk(), 12).encoder.bytes());
}

TEST(Codec, RejectsWrongGeometry) {
  const auto c = Codec::init(Geometry::desk(), 1);
  EXPECT_THROW(c.encode(nn::Tensor({3, 32, 32})), nn::ShapeError);
  EXPECT_THROW(c.decode(nn::Tensor({24, 8, 8})), nn::ShapeError);
}

TEST(Codec, CheckpointRoundTrip) {
  const auto c = Codec::init(Geometry::desk(), 4);
  const auto prefix = (std::filesystem::temp_directory_path() / "fast_codec_ckpt").string();
  c.save(prefix);
  const auto d = Codec::load(prefix, Geometry::desk());
  EXPECT_EQ(c.encoder, d.encoder);
  EXPECT_EQ(c.decoder, d.decoder);
  EXPECT_THROW(Codec::load(prefix, Geometry{3, 16, 12, 4}), std::runtime_error);
}

TEST(Symbols, PairingRule) {
  const nn::Tensor z({1, 2, 2}, {1.0, 0.0, 0.0, 1.0});
  const auto s = to_symbols(z);
  ASSERT_EQ(s.size(), 2u);
  // norm is sqrt(2) and k = 2, so the scale is exactly one
  EXPECT_DOUBLE_EQ(s.scale, 1.0);
  EXPECT_EQ(s.symbols[0], cplx(1.0, 0.0));
  EXPECT_EQ(s.symbols[1], cplx(0.0, 1.0));
}

TEST(Symbols, SlotsAreContiguous) {
  nn::Tensor z({3, 2, 2});
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 4; ++i) z[4 * k + i] = static_cast<double>(k + 1);
  const auto s = to_symbols(z);
  EXPECT_EQ(s.symbols_per_slot, 2u);
  EXPECT_EQ(s.slot_count(), 3u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_DOUBLE_EQ(s.symbols[i].real() / s.scale, static_cast<double>(i / 2 + 1));
  }
}

TEST(Symbols, PowerConstraint) {
  std::mt19937_64 rng(3);
  for (double p : {0.5, 1.0, 4.0}) {
    for (int t = 0; t < 10; ++t) {
      const auto s = to_symbols(random_tensor({24, 4, 4}, rng, -3.0, 3.0), p);
      EXPECT_NEAR(s.mean_power(), p, 1e-9);
    }
  }
}

TEST(Symbols, RoundTrip) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto z = random_tensor({24, 4, 4}, rng, -5.0, 5.0);
    const auto back = from_symbols(to_symbols(z, 2.0), z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(back[i], z[i], 1e-12);
  }
}

TEST(Symbols, DegenerateAndErrors) {
  const auto s = to_symbols(nn::Tensor({2, 2, 2}));
  EXPECT_TRUE(s.degenerate);
  for (const auto& v : s.symbols) EXPECT_EQ(v, cplx(0.0, 0.0));
  EXPECT_THROW(to_symbols(nn::Tensor({1, 3, 3})), nn::ShapeError);
  EXPECT_THROW(from_symbols(std::vector<cplx>(3), nn::Shape{1, 2, 2}, 1.0), nn::ShapeError);
}

TEST(Metrics, SystemLossAndPsnr) {
  const nn::Tensor s({7}, std::vector<double>(7, 0.0));
  const nn::Tensor half({7}, std::vector<double>(7, 0.5));
  EXPECT_EQ(system_loss(s, s), 0.0);
  EXPECT_DOUBLE_EQ(system_loss(s, half), 0.25);
  EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-12);
  EXPECT_EQ(psnr_from_mse(1.0), 0.0);
  EXPECT_TRUE(std::isinf(psnr(s, s)));
  EXPECT_DOUBLE_EQ(psnr(s, half), 10.0 * std::log10(1.0 / 0.25));
  EXPECT_GT(psnr_from_mse(0.01), psnr_from_mse(0.02));
}

namespace {

struct LinkCase {
  nn::Tensor z;
  std::vector<cplx> csi, noise;
  double sigma;
};

LinkCase make_link_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LinkCase c{random_tensor({6, 2, 2}, rng), {}, {}, 0.3};
  auto csi = channel::SosChannel({}, seed).generate(0, 6).samples;
  c.csi = csi;
  auto nrng = channel::make_rng(seed, 1);
  c.noise = channel::draw_noise(12, c.sigma, nrng);
  return c;
}

}  // namespace

TEST(FadingLink, MatchesExplicitSymbolPath) {
  for (auto eq : {channel::Equalizer::Mmse, channel::Equalizer::ZeroForcing}) {
    const auto c = make_link_case(21);
    nn::Tape tape;
    const auto out = fading_link(tape.constant(c.z), c.csi, c.noise, c.sigma, eq).value();
    const auto x = to_symbols(c.z);
    const auto y = channel::apply_channel(x, c.csi, c.noise);
    const auto ref = from_symbols(channel::equalize(y, c.csi, c.sigma, eq), c.z.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
  }
}

TEST(FadingLink, GradientMatchesFiniteDifference) {
  const auto c = make_link_case(22);
  const auto f = [&](nn::Tape&, std::span<const nn::Var> v) {
    return fast::testing::project(fading_link(v[0], c.csi, c.noise, c.sigma, channel::Equalizer::Mmse));
  };
  EXPECT_LT(fast::testing::max_relative_error(f, {c.z}), 1e-5);
}

TEST(FadingLink, ZeroFeaturesGiveZeroAndRejectMismatch) {
  const auto c = make_link_case(23);
  nn::Tape tape;
  const auto out = fading_link(tape.constant(nn::Tensor({6, 2, 2})), c.csi, c.noise, c.sigma,
                               channel::Equalizer::Mmse);
  for (double v : out.value().data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(fading_link(tape.constant(c.z), std::span(c.csi).first(5), c.noise, c.sigma,
                           channel::Equalizer::Mmse),
               nn::ShapeError);
}

TEST(TrainCodec, SeedDeterminism) {
  const auto data = harness::gen_synthetic_dataset(24, 16, 9);
  CodecTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  const auto a = train_codec(data, cfg);
  const auto b = train_codec(data, cfg);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_EQ(a.codec.encoder.bytes(), b.codec.encoder.bytes());
  std::ostringstream sa, sb;
  a.write_curve_csv(sa);
  b.write_curve_csv(sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_TRUE(sa.str().starts_with("epoch,loss\n1,"));
}

TEST(TrainCodec, NoiselessLossDecreasesOverFirstEpochs) {
  const auto data = harness::gen_synthetic_dataset(128, 16, 10);
  CodecTrainConfig cfg;
  cfg.snr_train_db = INFINITY;
  cfg.fading = false;
  cfg.epochs = 5;
  const auto r = train_codec(data, cfg);
  ASSERT_EQ(r.epoch_loss.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(r.epoch_loss[e], r.epoch_loss[e - 1]) << "epoch " << e + 1;
}

TEST(TrainCodec, RejectsEmptyDataset) {
  EXPECT_THROW(train_codec({}, CodecTrainConfig{}), std::invalid_argument);
}
