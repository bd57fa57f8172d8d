#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fast/arrange/arrangement.hpp"
#include "support/gradcheck.hpp"

using namespace fast::arrange;
using cplx = std::complex<double>;
using fast::testing::random_tensor;

namespace {

Tensor labelled(std::size_t c, std::size_t hw = 4) {
  // Feature k is filled with value k so slots are easy to identify.
  Tensor t({c, 2, hw / 2});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < hw; ++i) t[k * hw + i] = static_cast<double>(k);
  return t;
}

std::vector<cplx> real_csi(std::initializer_list<double> amps) {
  std::vector<cplx> h;
  for (double a : amps) h.emplace_back(a, 0.0);
  return h;
}

}  // namespace

TEST(SortDesc, HandSorted) {
  const std::vector<double> v{0.2, 0.7, 0.3};
  EXPECT_EQ(sort_desc_with_indices(v), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(SortDesc, TiesKeepIndexOrder) {
  const std::vector<double> v(5, 0.4);
  EXPECT_EQ(sort_desc_with_indices(v), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  const std::vector<double> w{1.0, 2.0, 1.0, 2.0};
  EXPECT_EQ(sort_desc_with_indices(w), (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(Arrange, HandTrace) {
  const auto a = labelled(3);
  const std::vector<double> xi{0.9, 0.1, 0.5};
  const auto h = real_csi({0.2, 0.7, 0.3});
  const auto out = arrange(a, xi, h);
  EXPECT_EQ(out.order, (FeatureOrder{1, 0, 2}));
  // Slots hold A1, A0, A2.
  EXPECT_EQ(out.features[0], 1.0);
  EXPECT_EQ(out.features[4], 0.0);
  EXPECT_EQ(out.features[8], 2.0);
  const auto back = inverse_arrange(out.features, out.order);
  EXPECT_EQ(back, a);
}

TEST(Arrange, AlignedOrdersGiveIdentity) {
  const auto a = labelled(4);
  const std::vector<double> xi{0.9, 0.6, 0.3, 0.1};
  const auto h = real_csi({2.0, 1.5, 1.0, 0.2});
  const auto out = arrange(a, xi, h);
  EXPECT_EQ(out.order, (FeatureOrder{0, 1, 2, 3}));
  EXPECT_EQ(out.features, a);
}

TEST(Arrange, UniformChannelPlacesByPriorityRank) {
  const auto a = labelled(4);
  const std::vector<double> xi{0.1, 0.9, 0.5, 0.7};
  const auto h = real_csi({1.0, 1.0, 1.0, 1.0});
  const auto out = arrange(a, xi, h);
  EXPECT_EQ(out.order, (FeatureOrder{1, 3, 2, 0}));
  EXPECT_TRUE(is_permutation(out.order));
}

TEST(Arrange, UsesAmplitudeNotPhase) {
  const auto a = labelled(2);
  const std::vector<double> xi{0.2, 0.8};
  const std::vector<cplx> h{{-1.5, 0.0}, {0.0, 0.5}};
  EXPECT_EQ(arrange(a, xi, h).order, (FeatureOrder{1, 0}));
}

TEST(Arrange, RejectsLengthMismatch) {
  const auto a = labelled(3);
  const std::vector<double> xi{0.1, 0.2};
  const auto h = real_csi({1, 2, 3});
  EXPECT_THROW(arrange(a, xi, h), fast::nn::ShapeError);
}

TEST(InverseArrange, IdentityOrder) {
  std::mt19937_64 rng(1);
  const auto a = random_tensor({5, 2, 2}, rng);
  EXPECT_EQ(inverse_arrange(a, FeatureOrder{0, 1, 2, 3, 4}), a);
}

TEST(InverseArrange, RejectsNonPermutation) {
  const auto a = labelled(3);
  EXPECT_THROW(inverse_arrange(a, FeatureOrder{0, 0, 2}), std::invalid_argument);
  EXPECT_THROW(inverse_arrange(a, FeatureOrder{0, 1, 3}), std::invalid_argument);
  EXPECT_THROW(inverse_arrange(a, FeatureOrder{0, 1}), std::invalid_argument);
}

TEST(ArrangeProperty, RoundTripBijectionAndTopAlignment) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> csize(1, 24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = csize(rng);
    const auto a = random_tensor({c, 2, 2}, rng);
    std::vector<double> xi(c);
    std::vector<cplx> h(c);
    for (std::size_t k = 0; k < c; ++k) {
      xi[k] = u(rng);
      h[k] = {u(rng) - 0.5, u(rng) - 0.5};
    }
    const auto out = arrange(a, xi, h);
    ASSERT_TRUE(is_permutation(out.order));
    ASSERT_EQ(inverse_arrange(out.features, out.order), a);
    const auto top_feature = std::max_element(xi.begin(), xi.end()) - xi.begin();
    std::vector<double> amp(c);
    for (std::size_t k = 0; k < c; ++k) amp[k] = std::abs(h[k]);
    const auto top_slot = std::max_element(amp.begin(), amp.end()) - amp.begin();
    ASSERT_EQ(out.order[static_cast<std::size_t>(top_slot)], static_cast<std::size_t>(top_feature));
  }
}

// Rearrangement inequality: with distortion xi_k * f(|h_j|), f decreasing, the
// sorted matching is a minimizer over all c! assignments.
TEST(ArrangeProperty, BruteForceMatchingOptimality) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::function<double(double)>> surrogates{
      [](double a) { return std::exp(-a); }, [](double a) { return 1.0 / (1.0 + a * a); }};
  for (std::size_t c = 2; c <= 6; ++c) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> xi(c);
      std::vector<cplx> h(c);
      for (std::size_t k = 0; k < c; ++k) {
        xi[k] = u(rng);
        h[k] = std::polar(2.0 * u(rng), 6.28 * u(rng));
      }
      const auto out = arrange(labelled(c), xi, h);
      for (const auto& f : surrogates) {
        auto cost = [&](const FeatureOrder& order) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += xi[order[j]] * f(std::abs(h[j]));
          return s;
        };
        const double ours = cost(out.order);
        FeatureOrder perm(c);
        std::iota(perm.begin(), perm.end(), 0);
        double best = INFINITY;
        do best = std::min(best, cost(perm));
        while (std::next_permutation(perm.begin(), perm.end()));
        ASSERT_LE(ours, best + 1e-12) << "c=" << c;
      }
    }
  }
}

TEST(Overhead, OrderBits) {
  EXPECT_DOUBLE_EQ(order_overhead_bits(24), 24.0 * std::log2(24.0));
  EXPECT_EQ(order_overhead_bits(1), 0.0);
}
