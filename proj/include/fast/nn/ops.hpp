#pragma once

// Differentiable primitives. Every function records one node on the tape of
// its first operand and registers the matching adjoint.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "fast/nn/tape.hpp"
#include "fast/nn/tensor.hpp"

namespace fast::nn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline MatMap mat(double* p, std::size_t r, std::size_t c) {
  return MatMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline ConstMatMap mat(const double* p, std::size_t r, std::size_t c) {
  return ConstMatMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

inline void same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
}

/// Sliding-window geometry shared by conv2d and its transpose.
struct Window {
  std::size_t channels, height, width;  // image side
  std::size_t kernel, stride, pad;
  std::size_t out_h, out_w;             // number of window positions

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// Unfolds image patches into a (C*K*K) x (out_h*out_w) matrix.
inline void im2col(const Window& g, const double* img, double* col) {
  const auto k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.width);
            row[oy * g.out_w + ox] =
                inside ? img[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                             static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back into the image.
inline void col2im(const Window& g, const double* col, double* img) {
  const auto k = g.kernel;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            img[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                static_cast<std::size_t>(ix)] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

template <class F>
Var unary(const Var& x, Tensor out, F&& adj) {
  return x.tape()->record(std::move(out), {x}, std::forward<F>(adj));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  Tensor::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return a.tape()->record(std::move(out), {a, b},
                          [](const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0]) *gi[0] += g;
                            if (gi[1]) *gi[1] += g;
                          });
}

inline Var sub(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  Tensor::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape()->record(std::move(out), {a, b},
                          [](const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0]) *gi[0] += g;
                            if (gi[1]) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
                            }
                          });
}

inline Var mul(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  Tensor::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape()->record(std::move(out), {a, b},
                          [a, b](const Tensor& g, std::span<Tensor* const> gi) {
                            const auto& av = a.value();
                            const auto& bv = b.value();
                            if (gi[0]) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * bv[i];
                            }
                            if (gi[1]) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * av[i];
                            }
                          });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  return detail::unary(a, std::move(out), [s](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += s * g[i];
  });
}

inline Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
  return detail::unary(x, std::move(out), [x](const Tensor& g, std::span<Tensor* const> gi) {
    const auto& xv = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) (*gi[0])[i] += g[i];
    }
  });
}

inline Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.vec()) v = 1.0 / (1.0 + std::exp(-v));
  auto y = std::make_shared<const Tensor>(out);
  return detail::unary(x, std::move(out), [y](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = (*y)[i];
      (*gi[0])[i] += g[i] * s * (1.0 - s);
    }
  });
}

inline Var tanh(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.vec()) v = std::tanh(v);
  auto y = std::make_shared<const Tensor>(out);
  return detail::unary(x, std::move(out), [y](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = (*y)[i];
      (*gi[0])[i] += g[i] * (1.0 - t * t);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return detail::unary(x, Tensor::scalar(s), [](const Tensor& g, std::span<Tensor* const> gi) {
    for (auto& v : gi[0]->vec()) v += g[0];
  });
}

/// (1/N) * sum((a - b)^2)
inline Var mse(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  Tensor::require_same_shape(a.value(), b.value(), "mse");
  const auto& av = a.value();
  const auto& bv = b.value();
  const double n = static_cast<double>(av.size());
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return a.tape()->record(Tensor::scalar(s / n), {a, b},
                          [a, b, n](const Tensor& g, std::span<Tensor* const> gi) {
                            const auto& av = a.value();
                            const auto& bv = b.value();
                            const double k = 2.0 * g[0] / n;
                            for (std::size_t i = 0; i < av.size(); ++i) {
                              const double d = k * (av[i] - bv[i]);
                              if (gi[0]) (*gi[0])[i] += d;
                              if (gi[1]) (*gi[1])[i] -= d;
                            }
                          });
}

/// C x H x W -> C
inline Var global_avg_pool(const Var& x) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("global_avg_pool expects CxHxW, got " + to_string(xv.shape()));
  const std::size_t c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
  Tensor out({c});
  for (std::size_t k = 0; k < c; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += xv[k * hw + i];
    out[k] = s / static_cast<double>(hw);
  }
  return detail::unary(x, std::move(out), [c, hw](const Tensor& g, std::span<Tensor* const> gi) {
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t i = 0; i < hw; ++i) (*gi[0])[k * hw + i] += g[k] * inv;
    }
  });
}

/// Non-overlapping average pooling with a square window; C x H x W -> C x H/win x W/win.
inline Var avg_pool(const Var& x, std::size_t window) {
  const auto& xv = x.value();
  if (xv.rank() != 3 || window == 0 || xv.dim(1) % window || xv.dim(2) % window) {
    throw ShapeError("avg_pool window " + std::to_string(window) + " does not tile " +
                     to_string(xv.shape()));
  }
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const std::size_t oh = h / window, ow = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  Tensor out({c, oh, ow});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t z = 0; z < w; ++z) out.at(k, y / window, z / window) += xv.at(k, y, z) * inv;
  return detail::unary(x, std::move(out),
                       [c, h, w, window, inv](const Tensor& g, std::span<Tensor* const> gi) {
                         auto& gx = *gi[0];
                         for (std::size_t k = 0; k < c; ++k)
                           for (std::size_t y = 0; y < h; ++y)
                             for (std::size_t z = 0; z < w; ++z)
                               gx.at(k, y, z) += g.at(k, y / window, z / window) * inv;
                       });
}

/// Average pooling onto a fixed grid x grid output. Bin i along an axis of
/// length n covers [floor(i n / grid), ceil((i + 1) n / grid)), so bins may
/// overlap when grid does not divide n.
inline Var adaptive_avg_pool(const Var& x, std::size_t grid) {
  const auto& xv = x.value();
  if (xv.rank() != 3 || grid == 0 || grid > xv.dim(1) || grid > xv.dim(2)) {
    throw ShapeError("adaptive_avg_pool to " + std::to_string(grid) + "x" + std::to_string(grid) +
                     " is not possible for " + to_string(xv.shape()));
  }
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  auto bins = [grid](std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> b(grid);
    for (std::size_t i = 0; i < grid; ++i) b[i] = {i * n / grid, ((i + 1) * n + grid - 1) / grid};
    return b;
  };
  const auto by = bins(h), bx = bins(w);
  Tensor out({c, grid, grid});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < grid; ++i)
      for (std::size_t j = 0; j < grid; ++j) {
        double s = 0.0;
        for (std::size_t y = by[i].first; y < by[i].second; ++y)
          for (std::size_t z = bx[j].first; z < bx[j].second; ++z) s += xv.at(k, y, z);
        out.at(k, i, j) = s / static_cast<double>((by[i].second - by[i].first) * (bx[j].second - bx[j].first));
      }
  return detail::unary(x, std::move(out), [c, grid, by, bx](const Tensor& g, std::span<Tensor* const> gi) {
    auto& gx = *gi[0];
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < grid; ++i)
        for (std::size_t j = 0; j < grid; ++j) {
          const double d = g.at(k, i, j) /
                           static_cast<double>((by[i].second - by[i].first) * (bx[j].second - bx[j].first));
          for (std::size_t y = by[i].first; y < by[i].second; ++y)
            for (std::size_t z = bx[j].first; z < bx[j].second; ++z) gx.at(k, y, z) += d;
        }
  });
}

// ---------------------------------------------------------------------------
// Shape plumbing

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return detail::unary(x, std::move(out), [](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
  });
}

/// Flat slice [offset, offset + length) of any tensor, returned as 1-D.
inline Var slice(const Var& x, std::size_t offset, std::size_t length) {
  const auto& xv = x.value();
  if (length == 0 || offset + length > xv.size()) {
    throw ShapeError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                     ") out of range for " + to_string(xv.shape()));
  }
  Tensor out({length}, std::vector<double>(xv.vec().begin() + static_cast<std::ptrdiff_t>(offset),
                                           xv.vec().begin() +
                                               static_cast<std::ptrdiff_t>(offset + length)));
  return detail::unary(x, std::move(out), [offset](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[offset + i] += g[i];
  });
}

/// Flat concatenation of two tensors into a 1-D tensor.
inline Var concat(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  std::vector<double> d = a.value().vec();
  d.insert(d.end(), b.value().vec().begin(), b.value().vec().end());
  const std::size_t na = a.size();
  const std::size_t total = d.size();
  Tensor out({total}, std::move(d));
  return a.tape()->record(std::move(out), {a, b},
                          [na](const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < na; ++i) (*gi[0])[i] += g[i];
                            if (gi[1])
                              for (std::size_t i = na; i < g.size(); ++i) (*gi[1])[i - na] += g[i];
                          });
}

// ---------------------------------------------------------------------------
// Linear layers

/// weights: O x I, x: any tensor with I elements. Returns an O vector.
inline Var dense(const Var& weights, const Var& x) {
  detail::same_tape(weights, x);
  const auto& w = weights.value();
  const auto& xv = x.value();
  if (w.rank() != 2 || w.dim(1) != xv.size()) {
    throw ShapeError("dense: weights " + to_string(w.shape()) + " vs input " + to_string(xv.shape()));
  }
  const std::size_t o = w.dim(0), n = w.dim(1);
  Tensor out({o});
  Eigen::Map<Eigen::VectorXd>(out.data().data(), static_cast<Eigen::Index>(o)).noalias() =
      detail::mat(w.data().data(), o, n) *
      Eigen::Map<const Eigen::VectorXd>(xv.data().data(), static_cast<Eigen::Index>(n));
  return weights.tape()->record(
      std::move(out), {weights, x}, [weights, x, o, n](const Tensor& g, std::span<Tensor* const> gi) {
        Eigen::Map<const Eigen::VectorXd> gv(g.data().data(), static_cast<Eigen::Index>(o));
        if (gi[0]) {
          Eigen::Map<const Eigen::VectorXd> xm(x.value().data().data(), static_cast<Eigen::Index>(n));
          detail::mat(gi[0]->data().data(), o, n).noalias() += gv * xm.transpose();
        }
        if (gi[1]) {
          Eigen::Map<Eigen::VectorXd>(gi[1]->data().data(), static_cast<Eigen::Index>(n)).noalias() +=
              detail::mat(weights.value().data().data(), o, n).transpose() * gv;
        }
      });
}

/// Adds a per-channel bias to a C x H x W tensor, or an elementwise bias to a
/// 1-D tensor of matching length.
inline Var bias_add(const Var& x, const Var& bias) {
  detail::same_tape(x, bias);
  const auto& xv = x.value();
  const auto& b = bias.value();
  const std::size_t c = xv.rank() == 3 ? xv.dim(0) : xv.size();
  if (b.size() != c || (xv.rank() != 3 && xv.rank() != 1)) {
    throw ShapeError("bias_add: bias " + to_string(b.shape()) + " vs input " + to_string(xv.shape()));
  }
  const std::size_t stride = xv.size() / c;
  Tensor out = xv;
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < stride; ++i) out[k * stride + i] += b[k];
  return x.tape()->record(std::move(out), {x, bias},
                          [c, stride](const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0]) *gi[0] += g;
                            if (gi[1]) {
                              for (std::size_t k = 0; k < c; ++k) {
                                double s = 0.0;
                                for (std::size_t i = 0; i < stride; ++i) s += g[k * stride + i];
                                (*gi[1])[k] += s;
                              }
                            }
                          });
}

inline std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                    std::size_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

inline std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel,
                                              std::size_t stride, std::size_t pad) {
  return stride * (in - 1) + kernel - 2 * pad;
}

/// Cross-correlation. input: C_in x H x W, kernels: C_out x C_in x K x K.
inline Var conv2d(const Var& input, const Var& kernels, std::size_t stride, std::size_t pad) {
  detail::same_tape(input, kernels);
  const auto& x = input.value();
  const auto& w = kernels.value();
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3) || stride == 0) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " vs kernels " + to_string(w.shape()));
  }
  const std::size_t k = w.dim(2);
  if (x.dim(1) + 2 * pad < k || x.dim(2) + 2 * pad < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                     to_string(x.shape()));
  }
  const detail::Window g{x.dim(0),
                         x.dim(1),
                         x.dim(2),
                         k,
                         stride,
                         pad,
                         conv_output_size(x.dim(1), k, stride, pad),
                         conv_output_size(x.dim(2), k, stride, pad)};
  const std::size_t o = w.dim(0);
  auto col = std::make_shared<std::vector<double>>(g.rows() * g.cols());
  detail::im2col(g, x.data().data(), col->data());
  Tensor out({o, g.out_h, g.out_w});
  detail::mat(out.data().data(), o, g.cols()).noalias() =
      detail::mat(w.data().data(), o, g.rows()) * detail::mat(col->data(), g.rows(), g.cols());
  return input.tape()->record(
      std::move(out), {input, kernels},
      [g, o, col, kernels](const Tensor& grad, std::span<Tensor* const> gi) {
        auto gm = detail::mat(grad.data().data(), o, g.cols());
        if (gi[1]) {
          detail::mat(gi[1]->data().data(), o, g.rows()).noalias() +=
              gm * detail::mat(col->data(), g.rows(), g.cols()).transpose();
        }
        if (gi[0]) {
          std::vector<double> dcol(g.rows() * g.cols());
          detail::mat(dcol.data(), g.rows(), g.cols()).noalias() =
              detail::mat(kernels.value().data().data(), o, g.rows()).transpose() * gm;
          detail::col2im(g, dcol.data(), gi[0]->data().data());
        }
      });
}

/// Transposed convolution (adjoint of conv2d with the same geometry).
/// input: C_in x H x W, kernels: C_in x C_out x K x K.
/// Output side = stride * (H - 1) + K - 2 * pad.
inline Var conv2d_transpose(const Var& input, const Var& kernels, std::size_t stride,
                            std::size_t pad) {
  detail::same_tape(input, kernels);
  const auto& x = input.value();
  const auto& w = kernels.value();
  if (x.rank() != 3 || w.rank() != 4 || w.dim(0) != x.dim(0) || w.dim(2) != w.dim(3) || stride == 0) {
    throw ShapeError("conv2d_transpose: input " + to_string(x.shape()) + " vs kernels " +
                     to_string(w.shape()));
  }
  const std::size_t k = w.dim(2);
  if (stride * (x.dim(1) - 1) + k <= 2 * pad || stride * (x.dim(2) - 1) + k <= 2 * pad) {
    throw ShapeError("conv2d_transpose: padding " + std::to_string(pad) + " leaves no output for " +
                     to_string(x.shape()));
  }
  const std::size_t cin = x.dim(0), cout = w.dim(1);
  // Window over the output image whose positions enumerate the input pixels.
  const detail::Window g{cout,
                         conv_transpose_output_size(x.dim(1), k, stride, pad),
                         conv_transpose_output_size(x.dim(2), k, stride, pad),
                         k,
                         stride,
                         pad,
                         x.dim(1),
                         x.dim(2)};
  std::vector<double> col(g.rows() * g.cols());
  detail::mat(col.data(), g.rows(), g.cols()).noalias() =
      detail::mat(w.data().data(), cin, g.rows()).transpose() *
      detail::mat(x.data().data(), cin, g.cols());
  Tensor out({cout, g.height, g.width});
  detail::col2im(g, col.data(), out.data().data());
  return input.tape()->record(
      std::move(out), {input, kernels},
      [g, cin, input, kernels](const Tensor& grad, std::span<Tensor* const> gi) {
        std::vector<double> gcol(g.rows() * g.cols());
        detail::im2col(g, grad.data().data(), gcol.data());
        auto gc = detail::mat(gcol.data(), g.rows(), g.cols());
        if (gi[0]) {
          detail::mat(gi[0]->data().data(), cin, g.cols()).noalias() +=
              detail::mat(kernels.value().data().data(), cin, g.rows()) * gc;
        }
        if (gi[1]) {
          detail::mat(gi[1]->data().data(), cin, g.rows()).noalias() +=
              detail::mat(input.value().data().data(), cin, g.cols()) * gc.transpose();
        }
      });
}

}  // namespace fast::nn
