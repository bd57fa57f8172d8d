#pragma once

// Gradient-check cases shared by the unit tests and the acceptance run.

#include <string>
#include <vector>

#include "fast/nn/lstm.hpp"
#include "fast/nn/ops.hpp"
#include "support/gradcheck.hpp"

namespace fast::testing {

struct GradCase {
  std::string name;
  std::vector<Tensor> inputs;
  ScalarFn fn;
};

// Keeps values away from the ReLU kink so finite differences stay smooth.
inline Tensor away_from_zero(nn::Shape shape, std::mt19937_64& rng) {
  auto t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (auto& v : t.vec()) v = flip(rng) ? -v : v;
  return t;
}

/// One case per differentiable primitive of the core.
inline std::vector<GradCase> primitive_cases(std::uint64_t seed = 42) {
  using namespace nn;
  std::mt19937_64 rng(seed);
  auto in = [&](std::initializer_list<Shape> shapes) {
    std::vector<Tensor> v;
    for (const auto& s : shapes) v.push_back(away_from_zero(s, rng));
    return v;
  };
  std::vector<GradCase> c;
  c.push_back({"conv2d", in({{2, 5, 5}, {3, 2, 3, 3}}),
               [](Tape&, std::span<const Var> x) { return project(conv2d(x[0], x[1], 2, 1)); }});
  c.push_back({"conv2d_transpose", in({{3, 3, 3}, {3, 2, 4, 4}}),
               [](Tape&, std::span<const Var> x) { return project(conv2d_transpose(x[0], x[1], 2, 1)); }});
  c.push_back({"dense", in({{4, 6}, {6}}), [](Tape&, std::span<const Var> x) { return project(dense(x[0], x[1])); }});
  c.push_back({"relu", in({{10}}), [](Tape&, std::span<const Var> x) { return project(relu(x[0])); }});
  c.push_back({"sigmoid", in({{10}}), [](Tape&, std::span<const Var> x) { return project(sigmoid(x[0])); }});
  c.push_back({"tanh", in({{10}}), [](Tape&, std::span<const Var> x) { return project(tanh(x[0])); }});
  c.push_back({"add", in({Shape{5}, Shape{5}}), [](Tape&, std::span<const Var> x) { return project(add(x[0], x[1])); }});
  c.push_back({"sub", in({Shape{5}, Shape{5}}), [](Tape&, std::span<const Var> x) { return project(sub(x[0], x[1])); }});
  c.push_back({"mul", in({Shape{5}, Shape{5}}), [](Tape&, std::span<const Var> x) { return project(mul(x[0], x[1])); }});
  c.push_back({"scale", in({{5}}), [](Tape&, std::span<const Var> x) { return project(scale(x[0], -1.7)); }});
  c.push_back({"sum", in({{2, 3, 3}}), [](Tape&, std::span<const Var> x) { return sum(x[0]); }});
  c.push_back({"global_avg_pool", in({{3, 4, 4}}),
               [](Tape&, std::span<const Var> x) { return project(global_avg_pool(x[0])); }});
  c.push_back({"avg_pool", in({{2, 4, 4}}), [](Tape&, std::span<const Var> x) { return project(avg_pool(x[0], 2)); }});
  c.push_back({"adaptive_avg_pool", in({{2, 8, 8}}),
               [](Tape&, std::span<const Var> x) { return project(adaptive_avg_pool(x[0], 5)); }});
  c.push_back({"mse", in({Shape{6}, Shape{6}}), [](Tape&, std::span<const Var> x) { return mse(x[0], x[1]); }});
  c.push_back({"bias_add_channels", in({{3, 2, 2}, {3}}),
               [](Tape&, std::span<const Var> x) { return project(bias_add(x[0], x[1])); }});
  c.push_back({"slice_concat", in({Shape{6}, Shape{3}}),
               [](Tape&, std::span<const Var> x) { return project(concat(slice(x[0], 1, 4), x[1])); }});
  c.push_back({"reshape", in({{2, 3}}), [](Tape&, std::span<const Var> x) { return project(reshape(x[0], {6})); }});
  const std::size_t hidden = 5, steps = 5;
  c.push_back({"lstm_bptt", in({{4 * hidden, 2}, {4 * hidden, hidden}, {4 * hidden}, {2 * steps}}),
               [=](Tape& tape, std::span<const Var> x) {
                 LstmWeights w{x[0], x[1], x[2]};
                 LstmState s = lstm_zero_state(tape, hidden);
                 for (std::size_t t = 0; t < steps; ++t) s = lstm_cell_step(slice(x[3], 2 * t, 2), s, w);
                 return project(s.h);
               }});
  return c;
}

/// Three randomly wired composite networks built from the full op set.
inline std::vector<GradCase> composite_cases() {
  using namespace nn;
  std::vector<GradCase> c;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, 2);
    const int variant = pick(rng);
    auto f = [variant](Tape&, std::span<const Var> in) {
      Var h = conv2d(in[0], in[1], 2, 1);          // 4x4x4
      h = bias_add(h, in[2]);
      h = variant == 0 ? tanh(h) : (variant == 1 ? sigmoid(h) : relu(h));
      Var t = conv2d_transpose(h, in[3], 2, 1);    // 2x8x8
      Var pooled = avg_pool(t, 2);                  // 2x4x4
      Var g = global_avg_pool(h);                   // 4
      Var d = sigmoid(dense(in[4], concat(pooled, g)));
      return add(mse(d, in[5]), scale(sum(mul(g, g)), 0.1));
    };
    std::vector<Tensor> inputs{
        away_from_zero({3, 8, 8}, rng), away_from_zero({4, 3, 4, 4}, rng), away_from_zero({4}, rng),
        away_from_zero({4, 2, 4, 4}, rng), away_from_zero({5, 36}, rng), away_from_zero({5}, rng)};
    c.push_back({"composite_" + std::to_string(seed), std::move(inputs), f});
  }
  return c;
}

}  // namespace fast::testing
