#pragma once

#include <random>
#include <string>

#include "fast/nn/ops.hpp"
#include "fast/nn/param_set.hpp"

namespace fast::nn {

struct LstmState {
  Var h;
  Var c;
};

/// Parameter names for one LSTM layer stored under `prefix`:
/// `<prefix>.wx` (4H x I), `<prefix>.wh` (4H x H), `<prefix>.b` (4H).
/// Gate rows are ordered input, forget, candidate, output.
inline void add_lstm_params(ParamSet& params, const std::string& prefix, std::size_t input,
                            std::size_t hidden, std::mt19937_64& rng) {
  params.add(prefix + ".wx", simple_uniform({4 * hidden, input}, hidden, rng));
  params.add(prefix + ".wh", simple_uniform({4 * hidden, hidden}, hidden, rng));
  params.add(prefix + ".b", simple_uniform({4 * hidden}, hidden, rng));
}

struct LstmWeights {
  Var wx, wh, b;
};

inline LstmState lstm_zero_state(Tape& tape, std::size_t hidden) {
  return {tape.constant(Tensor({hidden})), tape.constant(Tensor({hidden}))};
}

/// One step of a standard LSTM:
///   i = sig(.), f = sig(.), g = tanh(.), o = sig(.)
///   c' = f*c + i*g,  h' = o*tanh(c')
inline LstmState lstm_cell_step(const Var& x, const LstmState& state, const LstmWeights& w) {
  const auto& b = w.b.value();
  const auto& wh = w.wh.value();
  if (b.rank() != 1 || b.size() % 4 != 0) {
    throw ShapeError("lstm: bias must be a 4H vector, got " + to_string(b.shape()));
  }
  const std::size_t hidden = b.size() / 4;
  if (wh.rank() != 2 || wh.dim(0) != 4 * hidden || wh.dim(1) != hidden) {
    throw ShapeError("lstm: recurrent weights " + to_string(wh.shape()) + " for hidden size " +
                     std::to_string(hidden));
  }
  if (state.h.size() != hidden || state.c.size() != hidden) {
    throw ShapeError("lstm: state " + to_string(state.h.shape()) + "/" + to_string(state.c.shape()) +
                     " does not match hidden size " + std::to_string(hidden));
  }
  const Var z = add(add(dense(w.wx, x), dense(w.wh, state.h)), w.b);
  const Var i = sigmoid(slice(z, 0, hidden));
  const Var f = sigmoid(slice(z, hidden, hidden));
  const Var g = tanh(slice(z, 2 * hidden, hidden));
  const Var o = sigmoid(slice(z, 3 * hidden, hidden));
  const Var c = add(mul(f, state.c), mul(i, g));
  const Var h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace fast::nn
