#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fast/nn/adam.hpp"
#include "fast/nn/lstm.hpp"
#include "fast/nn/ops.hpp"
#include "fast/nn/param_set.hpp"
#include "support/gradcheck.hpp"
#include "support/gradient_cases.hpp"

using namespace fast::nn;
using fast::testing::max_relative_error;
using fast::testing::project;
using fast::testing::random_tensor;
using fast::testing::away_from_zero;

namespace {

constexpr double kPrimitiveTol = 1e-6;

}  // namespace

TEST(Conv2d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(1);
  Tape tape;
  auto x = tape.constant(random_tensor({1, 4, 4}, rng));
  auto k = tape.constant(Tensor({1, 1, 1, 1}, 1.0));
  EXPECT_EQ(conv2d(x, k, 1, 0).value(), x.value());
}

TEST(Conv2d, StrideTwoShape) {
  Tape tape;
  auto x = tape.constant(Tensor({3, 16, 16}, 0.5));
  auto k = tape.constant(Tensor({16, 3, 3, 3}, 0.1));
  EXPECT_EQ(conv2d(x, k, 2, 1).shape(), (Shape{16, 8, 8}));
}

TEST(Conv2d, RejectsChannelMismatch) {
  Tape tape;
  auto x = tape.constant(Tensor({2, 4, 4}));
  auto k = tape.constant(Tensor({1, 3, 3, 3}));
  EXPECT_THROW(conv2d(x, k, 1, 1), ShapeError);
  auto big = tape.constant(Tensor({1, 2, 7, 7}));
  EXPECT_THROW(conv2d(x, big, 1, 1), ShapeError);
}

TEST(ConvTranspose, UnitKernelIsIdentity) {
  std::mt19937_64 rng(3);
  Tape tape;
  auto x = tape.constant(random_tensor({1, 4, 4}, rng));
  auto k = tape.constant(Tensor({1, 1, 1, 1}, 1.0));
  EXPECT_EQ(conv2d_transpose(x, k, 1, 0).value(), x.value());
}

TEST(ConvTranspose, OutputSizeFormula) {
  Tape tape;
  auto x = tape.constant(Tensor({24, 8, 8}, 0.1));
  // 2 * (8 - 1) + 20 - 2 * 1 = 32
  auto k = tape.constant(Tensor({24, 32, 20, 20}, 0.01));
  EXPECT_EQ(conv2d_transpose(x, k, 2, 1).shape(), (Shape{32, 32, 32}));
  auto k4 = tape.constant(Tensor({24, 16, 4, 4}, 0.01));
  EXPECT_EQ(conv2d_transpose(x, k4, 2, 1).shape(), (Shape{16, 16, 16}));
}

TEST(ConvTranspose, IsAdjointOfConv) {
  // <conv(x), y> == <x, conv_T(y)> for the same kernel and geometry.
  std::mt19937_64 rng(4);
  Tape tape;
  auto kern = random_tensor({3, 2, 4, 4}, rng);  // C_out x C_in for conv
  auto x = tape.constant(random_tensor({2, 8, 8}, rng));
  auto y = tape.constant(random_tensor({3, 4, 4}, rng));
  auto k = tape.constant(kern);
  const auto cx = conv2d(x, k, 2, 1).value();
  const auto ty = conv2d_transpose(y, k, 2, 1).value();  // kernel read as C_in(=3) x C_out(=2)
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y.value()[i];
  for (std::size_t i = 0; i < ty.size(); ++i) rhs += ty[i] * x.value()[i];
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::abs(lhs));
}

TEST(Primitives, MseOfIdenticalIsZero) {
  std::mt19937_64 rng(6);
  Tape tape;
  auto x = tape.constant(random_tensor({7}, rng));
  EXPECT_EQ(mse(x, x).value().item(), 0.0);
}

TEST(Primitives, GlobalAvgPoolOfConstant) {
  Tape tape;
  auto x = tape.constant(Tensor({3, 4, 4}, 0.37));
  const auto out = global_avg_pool(x).value();
  ASSERT_EQ(out.shape(), Shape{3});
  for (double v : out.data()) EXPECT_NEAR(v, 0.37, 1e-15);
}

TEST(Primitives, AvgPoolRejectsNonTilingWindow) {
  Tape tape;
  auto x = tape.constant(Tensor({1, 5, 5}));
  EXPECT_THROW(avg_pool(x, 2), ShapeError);
}

TEST(Primitives, AdaptiveAvgPoolBins) {
  Tape tape;
  Tensor t({1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) t[i] = static_cast<double>(i);
  const auto x = tape.constant(t);
  // tiling case agrees with plain pooling
  EXPECT_EQ(adaptive_avg_pool(x, 2).value(), avg_pool(x, 2).value());
  // 4 -> 3 uses bins [0,2), [1,3), [2,4)
  const auto out = adaptive_avg_pool(x, 3).value();
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), (0 + 1 + 4 + 5) / 4.0);
  EXPECT_DOUBLE_EQ(out.at(0, 1, 2), (6 + 7 + 10 + 11) / 4.0);
  EXPECT_EQ(adaptive_avg_pool(tape.constant(Tensor({24, 8, 8})), 5).value().shape(), (Shape{24, 5, 5}));
  EXPECT_THROW(adaptive_avg_pool(x, 5), ShapeError);
}

TEST(Primitives, ElementwiseShapeMismatchRejected) {
  Tape tape;
  auto a = tape.constant(Tensor({3}));
  auto b = tape.constant(Tensor({4}));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(mul(a, b), ShapeError);
  EXPECT_THROW(mse(a, b), ShapeError);
}

class PrimitiveGradient : public ::testing::TestWithParam<fast::testing::GradCase> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifference) {
  const auto& c = GetParam();
  EXPECT_LT(max_relative_error(c.fn, c.inputs), kPrimitiveTol) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient, ::testing::ValuesIn(fast::testing::primitive_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(Backward, SumGivesOnes) {
  std::mt19937_64 rng(7);
  Tape tape;
  auto x = tape.variable(random_tensor({2, 3}, rng));
  tape.backward(sum(x));
  EXPECT_EQ(tape.grad(x), Tensor({2, 3}, 1.0));
}

TEST(Backward, MseAgainstZero) {
  std::mt19937_64 rng(8);
  Tape tape;
  auto xt = random_tensor({5}, rng);
  auto x = tape.variable(xt);
  auto zero = tape.constant(Tensor({5}));
  tape.backward(mse(x, zero));
  const auto g = tape.grad(x);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(g[i], 2.0 * xt[i] / 5.0, 1e-15);
}

TEST(Backward, ConvReluMseComposite) {
  std::mt19937_64 rng(9);
  auto f = [](Tape&, std::span<const Var> in) {
    return mse(relu(conv2d(in[0], in[1], 1, 1)), in[2]);
  };
  EXPECT_LT(max_relative_error(f, {away_from_zero({2, 4, 4}, rng), away_from_zero({3, 2, 3, 3}, rng),
                                   away_from_zero({3, 4, 4}, rng)}),
            1e-5);
}

TEST(Backward, RejectsForeignTarget) {
  Tape a, b;
  auto x = a.variable(Tensor({2}, 1.0));
  auto y = b.variable(Tensor({2}, 1.0));
  auto loss = sum(x);
  std::vector<Var> targets{y};
  EXPECT_THROW(a.gradients(loss, targets), std::invalid_argument);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape tape;
  auto x = tape.variable(Tensor({2}, 1.0));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Backward, UnreachableTargetHasZeroGradient) {
  Tape tape;
  auto x = tape.variable(Tensor({2}, 1.0));
  auto y = tape.variable(Tensor({3}, 1.0));
  tape.backward(sum(x));
  EXPECT_EQ(tape.grad(y), Tensor({3}));
}

TEST(Backward, RandomCompositeNetworks) {
  for (const auto& c : fast::testing::composite_cases()) EXPECT_LT(max_relative_error(c.fn, c.inputs), 1e-5) << c.name;
}

TEST(Lstm, ZeroParamsZeroState) {
  Tape tape;
  const std::size_t hidden = 50;
  LstmWeights w{tape.constant(Tensor({4 * hidden, 2})), tape.constant(Tensor({4 * hidden, hidden})),
                tape.constant(Tensor({4 * hidden}))};
  auto st = lstm_cell_step(tape.constant(Tensor({2}, 0.3)), lstm_zero_state(tape, hidden), w);
  EXPECT_EQ(st.h.value(), Tensor({hidden}));
}

TEST(Lstm, SaturatedForgetGateKeepsCell) {
  std::mt19937_64 rng(14);
  Tape tape;
  const std::size_t hidden = 8;
  Tensor bias({4 * hidden});
  for (std::size_t i = hidden; i < 2 * hidden; ++i) bias[i] = 50.0;
  LstmWeights w{tape.constant(Tensor({4 * hidden, 2})),
                tape.constant(random_tensor({4 * hidden, hidden}, rng, -0.1, 0.1)),
                tape.constant(bias)};
  // Candidate path only sees the recurrent weights; zero them on the g rows.
  auto whv = w.wh.value();
  for (std::size_t r = 2 * hidden; r < 3 * hidden; ++r)
    for (std::size_t c = 0; c < hidden; ++c) whv[r * hidden + c] = 0.0;
  w.wh = tape.constant(whv);
  auto c_prev = random_tensor({hidden}, rng);
  LstmState s{tape.constant(random_tensor({hidden}, rng)), tape.constant(c_prev)};
  auto next = lstm_cell_step(tape.constant(Tensor({2}, 0.7)), s, w);
  for (std::size_t i = 0; i < hidden; ++i) EXPECT_NEAR(next.c.value()[i], c_prev[i], 1e-6);
}

TEST(Lstm, RejectsStateMismatch) {
  Tape tape;
  LstmWeights w{tape.constant(Tensor({16, 2})), tape.constant(Tensor({16, 4})),
                tape.constant(Tensor({16}))};
  LstmState bad{tape.constant(Tensor({5})), tape.constant(Tensor({5}))};
  EXPECT_THROW(lstm_cell_step(tape.constant(Tensor({2})), bad, w), ShapeError);
}

TEST(Adam, ZeroGradientsLeaveParamsUnchanged) {
  std::mt19937_64 rng(16);
  ParamSet ps;
  ps.add("w", random_tensor({3, 3}, rng));
  const auto before = ps;
  Adam adam(ps);
  for (int i = 0; i < 10; ++i) adam.step(ps, zero_grads(ps));
  EXPECT_EQ(ps, before);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  ParamSet ps;
  ps.add("w", Tensor({1}, 0.0));
  Adam adam(ps, {.learning_rate = 1e-2});
  GradSet g{Tensor({1}, 3.0)};
  double prev = 0.0, last_step = 0.0;
  for (int i = 0; i < 500; ++i) {
    adam.step(ps, g);
    last_step = prev - ps["w"][0];
    prev = ps["w"][0];
  }
  // m_hat = g, v_hat = g^2 exactly under bias correction -> step = lr * g / (|g| + eps)
  EXPECT_NEAR(last_step, 1e-2, 1e-8);
}

TEST(Adam, QuadraticBowlConverges) {
  ParamSet ps;
  ps.add("w", Tensor({4}, std::vector<double>{1.0, -2.0, 0.5, 3.0}));
  Adam adam(ps, {.learning_rate = 1e-2});
  double loss = 1.0;
  int steps = 0;
  for (; steps < 2000 && loss >= 1e-6; ++steps) {
    Tape tape;
    BoundParams b(tape, ps, true);
    auto l = sum(mul(b["w"], b["w"]));
    loss = l.value().item();
    tape.backward(l);
    GradSet g = zero_grads(ps);
    accumulate_grads(tape, b, g);
    adam.step(ps, g);
  }
  EXPECT_LT(loss, 1e-6);
  EXPECT_LE(steps, 2000);
}

TEST(Adam, RejectsMissingGradient) {
  ParamSet ps;
  ps.add("a", Tensor({2}));
  ps.add("b", Tensor({2}));
  Adam adam(ps);
  EXPECT_THROW(adam.step(ps, GradSet{Tensor({2})}), std::invalid_argument);
  EXPECT_THROW(adam.step(ps, GradSet{Tensor({2}), Tensor({3})}), ShapeError);
}

TEST(ParamSet, SerializationRoundTripIsStable) {
  std::mt19937_64 rng(17);
  ParamSet ps;
  ps.add("conv.w", kaiming_uniform({4, 3, 3, 3}, 27, rng));
  ps.add("conv.b", Tensor({4}));
  ps.add("lstm.wx", simple_uniform({8, 2}, 2, rng));
  std::stringstream ss;
  ps.save(ss);
  const auto loaded = ParamSet::load(ss);
  EXPECT_EQ(loaded, ps);
  EXPECT_EQ(loaded.bytes(), ps.bytes());
  EXPECT_THROW(ps.add("conv.b", Tensor({1})), std::invalid_argument);
}

TEST(ParamSet, LoadRejectsGarbage) {
  std::stringstream ss("not a param file");
  EXPECT_THROW(ParamSet::load(ss), std::runtime_error);
}

TEST(ParamSet, SeededInitIsDeterministic) {
  std::mt19937_64 a(123), b(123);
  EXPECT_EQ(kaiming_uniform({16, 3, 4, 4}, 48, a), kaiming_uniform({16, 3, 4, 4}, 48, b));
}
