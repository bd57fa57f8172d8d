#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/channel/sos.hpp"
#include "fast/nn/ops.hpp"
#include "fast/nn/tape.hpp"

namespace fast::priority {

using nn::Tape;
using nn::Tensor;
using nn::Var;

/// Anything that records g1(A) on a tape. The teacher algorithms only need
/// the decoder; the encoder and channel never appear here.
template <class D>
concept FeatureDecoder = requires(const D& d, Tape& tape, const Var& a) {
  { d.forward(tape, a) } -> std::convertible_to<Var>;
};

/// (v - min) / (max - min); a constant vector maps to 0.5 everywhere.
inline std::vector<double> normalize_minmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("normalize_minmax: empty vector");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double min = *lo, range = *hi - *lo;
  std::vector<double> out(v.size(), 0.5);
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp((v[i] - min) / range, 0.0, 1.0);
  return out;
}

struct ImportanceVector {
  std::vector<double> raw;   // signed channel averages of dL/dA
  std::vector<double> norm;  // min-max normalized
};

struct RobustnessVector {
  std::vector<double> delta_loss;  // clamped loss increments
  std::vector<double> raw;         // 1 / delta_loss
  std::vector<double> norm;
};

struct PriorityWeights {
  double alpha = 0.5;
  double beta = 0.5;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0) || std::abs(alpha + beta - 1.0) > 1e-12) {
      throw std::invalid_argument("priority weights need alpha, beta > 0 and alpha + beta = 1, got " +
                                  std::to_string(alpha) + ", " + std::to_string(beta));
    }
  }
};

/// L2 budget for the semantic noise on one feature map. The radius is
/// radius_fraction * ||A_k|| unless an absolute radius is set.
struct NoiseBudget {
  double radius_fraction = 0.1;
  double radius = 0.0;          // > 0 overrides radius_fraction
  std::size_t steps = 20;
  double step_fraction = 2.0;   // step size as a fraction of the radius
  std::uint64_t seed = 1;       // drives the restart vector on a zero gradient

  double epsilon_for(std::span<const double> feature) const {
    return radius > 0.0 ? radius : radius_fraction * std::sqrt(nn::squared_norm(feature));
  }
};

inline constexpr double kDeltaLossFloor = 1e-8;
inline constexpr double kRestartScale = 1e-6;

namespace detail {

inline void check_features(const Tensor& a) {
  if (a.rank() != 3) throw nn::ShapeError("feature tensor must be c x h x w, got " + nn::to_string(a.shape()));
}

/// Loss and its gradient with respect to the whole feature tensor.
template <FeatureDecoder D>
double loss_and_grad(const Tensor& a, const Tensor& s, const D& decoder, Tensor* grad) {
  Tape tape;
  const Var av = grad ? tape.variable(a) : tape.constant(a);
  const Var out = decoder.forward(tape, av);
  if (out.tape() != &tape) throw std::invalid_argument("decoder output is not recorded on the caller's tape");
  if (out.size() != s.size()) {
    throw nn::ShapeError("decoder output " + nn::to_string(out.shape()) + " does not match image " +
                         nn::to_string(s.shape()));
  }
  const Var loss = nn::mse(out, tape.constant(s.reshaped(out.shape())));
  if (grad) {
    tape.backward(loss);
    *grad = tape.grad(av);
  }
  return loss.value().item();
}

}  // namespace detail

/// L = (1/l)||s - g1(A)||^2; the decoder is frozen.
template <FeatureDecoder D>
double feature_loss(const Tensor& a, const Tensor& s, const D& decoder) {
  detail::check_features(a);
  return detail::loss_and_grad(a, s, decoder, nullptr);
}

/// Importance of feature k: global average pooling of dL/dA_k, kept signed.
template <FeatureDecoder D>
ImportanceVector compute_importance(const Tensor& a, const Tensor& s, const D& decoder) {
  detail::check_features(a);
  Tensor g;
  detail::loss_and_grad(a, s, decoder, &g);
  const std::size_t c = a.dim(0), hw = a.size() / c;
  ImportanceVector w;
  w.raw.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < hw; ++i) w.raw[k] += g[k * hw + i];
    w.raw[k] /= static_cast<double>(hw);
  }
  w.norm = normalize_minmax(w.raw);
  return w;
}

struct SemanticNoise {
  Tensor delta;             // h x w perturbation of feature k
  double epsilon = 0.0;
  double base_loss = 0.0;   // L(A)
  double loss = 0.0;        // L(A + P(delta))
};

/// Worst-case perturbation of feature k inside the L2 ball of radius eps:
/// projected gradient ascent on the system loss with normalized steps,
/// returning the iterate with the highest loss (the zero start included).
template <FeatureDecoder D>
SemanticNoise generate_semantic_noise(const Tensor& a, std::size_t k, const Tensor& s, const D& decoder,
                                      const NoiseBudget& budget = {}) {
  detail::check_features(a);
  const std::size_t c = a.dim(0), hw = a.size() / c;
  if (k >= c) throw std::out_of_range("feature index " + std::to_string(k) + " >= " + std::to_string(c));
  const std::span<const double> feature = a.data().subspan(k * hw, hw);
  SemanticNoise out;
  out.epsilon = budget.epsilon_for(feature);
  if (!(out.epsilon > 0.0)) throw std::invalid_argument("semantic noise radius must be positive");
  const double step = budget.step_fraction * out.epsilon;

  Tensor delta({a.dim(1), a.dim(2)});
  Tensor best = delta;
  Tensor perturbed = a;
  Tensor grad;
  auto rng = channel::make_rng(budget.seed, k);
  std::normal_distribution<double> normal;

  auto evaluate = [&](bool with_grad) {
    std::copy(a.data().begin(), a.data().end(), perturbed.data().begin());
    for (std::size_t i = 0; i < hw; ++i) perturbed[k * hw + i] += delta[i];
    return detail::loss_and_grad(perturbed, s, decoder, with_grad ? &grad : nullptr);
  };

  out.base_loss = evaluate(true);
  out.loss = out.base_loss;
  for (std::size_t it = 0; it < budget.steps; ++it) {
    std::vector<double> g(grad.data().begin() + static_cast<std::ptrdiff_t>(k * hw),
                          grad.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * hw));
    const double gnorm = std::sqrt(nn::squared_norm(g));
    if (gnorm > 0.0) {
      for (std::size_t i = 0; i < hw; ++i) delta[i] += step * g[i] / gnorm;
    } else {
      for (std::size_t i = 0; i < hw; ++i) delta[i] += kRestartScale * normal(rng);
    }
    const double dnorm = std::sqrt(nn::squared_norm(delta.data()));
    if (dnorm > out.epsilon) delta *= out.epsilon / dnorm;
    const double l = evaluate(it + 1 < budget.steps);
    if (l > out.loss) {
      out.loss = l;
      best = delta;
    }
  }
  out.delta = std::move(best);
  return out;
}

/// Robustness of every feature: r_k = 1 / max(L(A + P(delta*_k)) - L(A), 1e-8).
template <FeatureDecoder D>
RobustnessVector compute_robustness(const Tensor& a, const Tensor& s, const D& decoder,
                                    const NoiseBudget& budget = {}) {
  detail::check_features(a);
  RobustnessVector r;
  const std::size_t c = a.dim(0);
  for (std::size_t k = 0; k < c; ++k) {
    const auto noise = generate_semantic_noise(a, k, s, decoder, budget);
    const double dl = std::max(noise.loss - noise.base_loss, kDeltaLossFloor);
    r.delta_loss.push_back(dl);
    r.raw.push_back(1.0 / dl);
  }
  r.norm = normalize_minmax(r.raw);
  return r;
}

/// xi_k = alpha * w_k + beta * (1 - r_k)
inline std::vector<double> combine_priority(std::span<const double> w_norm, std::span<const double> r_norm,
                                            const PriorityWeights& weights = {}) {
  weights.validate();
  if (w_norm.size() != r_norm.size()) {
    throw nn::ShapeError("combine_priority: " + std::to_string(w_norm.size()) + " importances vs " +
                         std::to_string(r_norm.size()) + " robustness values");
  }
  std::vector<double> xi(w_norm.size());
  for (std::size_t k = 0; k < xi.size(); ++k) xi[k] = weights.alpha * w_norm[k] + weights.beta * (1.0 - r_norm[k]);
  return xi;
}

struct TeacherPriority {
  ImportanceVector importance;
  RobustnessVector robustness;
  std::vector<double> xi;
};

/// Algorithms 1 and 2 followed by the priority combination. Needs the source
/// image, so it is only available after transmission.
template <FeatureDecoder D>
TeacherPriority teacher_priority(const Tensor& a, const Tensor& s, const D& decoder,
                                 const NoiseBudget& budget = {}, const PriorityWeights& weights = {}) {
  TeacherPriority t;
  t.importance = compute_importance(a, s, decoder);
  t.robustness = compute_robustness(a, s, decoder, budget);
  t.xi = combine_priority(t.importance.norm, t.robustness.norm, weights);
  return t;
}

}  // namespace fast::priority
