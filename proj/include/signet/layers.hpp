#pragma once

// Layer kinds of the SigNet stack with their backward rules. All spatial
// tensors are NCHW.

#include "signet/tensor.hpp"

namespace signet {

enum class Mode { train, infer };

template <std::floating_point T>
struct Conv2dParams {
  Tensor<T> weights;  // [out, in, kH, kW]
  Tensor<T> bias;     // [out]
  std::size_t stride = 1;
  std::size_t pad = 0;
};

struct LrnParams {
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 2.0;
  std::size_t n = 5;
};

struct PoolSpec {
  std::size_t window_h = 3;
  std::size_t window_w = 3;
  std::size_t stride = 2;
};

struct DropoutSpec {
  double rate = 0.0;
  Mode mode = Mode::infer;
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel) fail("conv2d: input extent ", in, " (pad ", pad, ") smaller than kernel ", kernel);
  return (in + 2 * pad - kernel) / stride + 1;
}

inline std::size_t pool_out_extent(std::size_t in, std::size_t window, std::size_t stride) {
  if (window > in) fail("maxpool2d: window ", window, " larger than input extent ", in);
  return (in - window) / stride + 1;
}

namespace detail {

// Range of output columns whose tap (ow * stride + kw - pad) lands inside [0, in_w).
inline std::pair<std::size_t, std::size_t> valid_cols(std::size_t in_w, std::size_t out_w, std::size_t kw,
                                                      std::size_t stride, std::size_t pad) {
  std::size_t lo = 0;
  if (kw < pad) lo = (pad - kw + stride - 1) / stride;
  if (in_w + pad < kw + 1) return {0, 0};
  std::size_t hi = (in_w - 1 + pad - kw) / stride + 1;
  hi = std::min(hi, out_w);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace detail

namespace detail {

// Unfolds one [C,H,W] image into a [C*KH*KW, OH*OW] column matrix; padded taps are 0.
template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t KH, std::size_t KW,
            std::size_t S, std::size_t P, std::size_t OH, std::size_t OW, T* col) {
  const std::size_t HW = OH * OW;
  for (std::size_t ic = 0; ic < C; ++ic) {
    for (std::size_t kh = 0; kh < KH; ++kh) {
      for (std::size_t kw = 0; kw < KW; ++kw) {
        T* row = col + ((ic * KH + kh) * KW + kw) * HW;
        const auto [lo, hi] = valid_cols(W, OW, kw, S, P);
        for (std::size_t oh = 0; oh < OH; ++oh) {
          T* r = row + oh * OW;
          const std::size_t ih_p = oh * S + kh;
          if (ih_p < P || ih_p - P >= H) {
            std::fill(r, r + OW, T(0));
            continue;
          }
          const T* xrow = x + (ic * H + ih_p - P) * W;
          std::fill(r, r + lo, T(0));
          for (std::size_t ow = lo; ow < hi; ++ow) r[ow] = xrow[ow * S + kw - P];
          std::fill(r + hi, r + OW, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates column gradients back into the image.
template <typename T>
void col2im_add(const T* col, std::size_t C, std::size_t H, std::size_t W, std::size_t KH, std::size_t KW,
                std::size_t S, std::size_t P, std::size_t OH, std::size_t OW, T* x) {
  const std::size_t HW = OH * OW;
  for (std::size_t ic = 0; ic < C; ++ic) {
    for (std::size_t kh = 0; kh < KH; ++kh) {
      for (std::size_t kw = 0; kw < KW; ++kw) {
        const T* row = col + ((ic * KH + kh) * KW + kw) * HW;
        const auto [lo, hi] = valid_cols(W, OW, kw, S, P);
        for (std::size_t oh = 0; oh < OH; ++oh) {
          const std::size_t ih_p = oh * S + kh;
          if (ih_p < P || ih_p - P >= H) continue;
          T* xrow = x + (ic * H + ih_p - P) * W;
          const T* r = row + oh * OW;
          for (std::size_t ow = lo; ow < hi; ++ow) xrow[ow * S + kw - P] += r[ow];
        }
      }
    }
  }
}

// Dot product with eight interleaved partial sums, combined in a fixed order.
template <typename T>
T dot8(const T* a, const T* b, std::size_t n) {
  T s[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) s[j] += a[i + j] * b[i + j];
  }
  for (std::size_t j = 0; i < n; ++i, ++j) s[j] += a[i] * b[i];
  return ((s[0] + s[4]) + (s[1] + s[5])) + ((s[2] + s[6]) + (s[3] + s[7]));
}

}  // namespace detail

/// 2-D cross-correlation (no kernel flip) with zero padding. Each output is
/// bias + sum over (ic, kh, kw) taps in that order.
template <std::floating_point T>
Tensor<T> conv2d(const Tensor<T>& input, const Conv2dParams<T>& params) {
  const auto& w = params.weights;
  const auto& b = params.bias;
  if (input.rank() != 4) fail("conv2d: input must be [N,C,H,W], got ", shape_str(input.shape()));
  if (w.rank() != 4) fail("conv2d: weights must be [out,in,kH,kW]");
  if (params.stride == 0) fail("conv2d: stride must be positive");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t OC = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  if (w.dim(1) != C) fail("conv2d: input has ", C, " channels, weights expect ", w.dim(1));
  if (b.rank() != 1 || b.dim(0) != OC) fail("conv2d: bias must be [", OC, "]");
  const std::size_t S = params.stride, P = params.pad;
  if (P >= std::max(KH, KW)) fail("conv2d: pad ", P, " must be smaller than the kernel");
  const std::size_t OH = conv_out_extent(H, KH, S, P);
  const std::size_t OW = conv_out_extent(W, KW, S, P);
  const std::size_t K = C * KH * KW, HW = OH * OW;

  std::vector<T> out(N * OC * HW);
  const T* X = input.data().data();
  const T* Wt = w.data().data();
  const T* B = b.data().data();

  parallel_for(N, [&](std::size_t n) {
    std::vector<T> col(K * HW);
    detail::im2col(X + n * C * H * W, C, H, W, KH, KW, S, P, OH, OW, col.data());
    for (std::size_t oc = 0; oc < OC; ++oc) {
      T* plane = out.data() + (n * OC + oc) * HW;
      std::fill(plane, plane + HW, B[oc]);
      const T* wrow = Wt + oc * K;
      for (std::size_t k = 0; k < K; ++k) {
        const T wv = wrow[k];
        const T* c = col.data() + k * HW;
        for (std::size_t i = 0; i < HW; ++i) plane[i] += wv * c[i];
      }
    }
  });

  Tensor<T> x = input, wt = w, bt = b;
  return detail::finish<T>(
      "conv2d", {input, w, b}, {N, OC, OH, OW}, std::move(out),
      [x, wt, bt, N, C, H, W, OC, KH, KW, OH, OW, S, P, K, HW](const Tensor<T>& y) {
        const T* G = y.grad().data();
        const T* X = x.data().data();
        const T* Wt = wt.data().data();
        if (bt.requires_grad()) {
          T* gb = bt.grad_buffer().data();
          for (std::size_t oc = 0; oc < OC; ++oc) {
            T acc = T(0);
            for (std::size_t n = 0; n < N; ++n) {
              const T* gp = G + (n * OC + oc) * HW;
              for (std::size_t i = 0; i < HW; ++i) acc += gp[i];
            }
            gb[oc] += acc;
          }
        }
        if (wt.requires_grad()) {
          T* gw = wt.grad_buffer().data();
          std::vector<T> col(K * HW);
          for (std::size_t n = 0; n < N; ++n) {
            detail::im2col(X + n * C * H * W, C, H, W, KH, KW, S, P, OH, OW, col.data());
            parallel_for(OC, [&](std::size_t oc) {
              const T* gp = G + (n * OC + oc) * HW;
              T* gwr = gw + oc * K;
              for (std::size_t k = 0; k < K; ++k) gwr[k] += detail::dot8(gp, col.data() + k * HW, HW);
            });
          }
        }
        if (x.requires_grad()) {
          T* gx = x.grad_buffer().data();
          parallel_for(N, [&](std::size_t n) {
            std::vector<T> gcol(K * HW, T(0));
            for (std::size_t oc = 0; oc < OC; ++oc) {
              const T* gp = G + (n * OC + oc) * HW;
              const T* wrow = Wt + oc * K;
              for (std::size_t k = 0; k < K; ++k) {
                const T wv = wrow[k];
                T* c = gcol.data() + k * HW;
                for (std::size_t i = 0; i < HW; ++i) c[i] += wv * gp[i];
              }
            }
            detail::col2im_add(gcol.data(), C, H, W, KH, KW, S, P, OH, OW, gx + n * C * H * W);
          });
        }
      });
}

/// Max pooling without padding; gradient goes to the first maximal cell.
template <std::floating_point T>
Tensor<T> maxpool2d(const Tensor<T>& input, const PoolSpec& spec) {
  if (input.rank() != 4) fail("maxpool2d: input must be [N,C,H,W], got ", shape_str(input.shape()));
  if (spec.stride == 0 || spec.window_h == 0 || spec.window_w == 0) fail("maxpool2d: invalid spec");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t OH = pool_out_extent(H, spec.window_h, spec.stride);
  const std::size_t OW = pool_out_extent(W, spec.window_w, spec.stride);
  std::vector<T> out(N * C * OH * OW);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const T* X = input.data().data();
  parallel_for(N * C, [&](std::size_t plane) {
    const T* xin = X + plane * H * W;
    for (std::size_t oh = 0; oh < OH; ++oh) {
      for (std::size_t ow = 0; ow < OW; ++ow) {
        std::size_t best = oh * spec.stride * W + ow * spec.stride;
        T best_v = xin[best];
        for (std::size_t i = 0; i < spec.window_h; ++i) {
          for (std::size_t j = 0; j < spec.window_w; ++j) {
            const std::size_t idx = (oh * spec.stride + i) * W + ow * spec.stride + j;
            if (xin[idx] > best_v) {
              best_v = xin[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (plane * OH + oh) * OW + ow;
        out[o] = best_v;
        (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  });
  Tensor<T> x = input;
  return detail::finish<T>("maxpool2d", {input}, {N, C, OH, OW}, std::move(out),
                           [x, argmax, H, W, OH, OW](const Tensor<T>& y) {
                             if (!x.requires_grad()) return;
                             auto gx = x.grad_buffer();
                             auto go = y.grad();
                             for (std::size_t o = 0; o < go.size(); ++o) {
                               const std::size_t plane = o / (OH * OW);
                               gx[plane * H * W + (*argmax)[o]] += go[o];
                             }
                           });
}

namespace detail {

// s^-beta; the default beta = 0.75 avoids pow.
template <typename T>
T inv_pow(T s, T beta) {
  if (beta == T(0.75)) return T(1) / (std::sqrt(s) * std::sqrt(std::sqrt(s)));
  return std::pow(s, -beta);
}

}  // namespace detail

/// Cross-channel local response normalization:
/// b_c = a_c / (k + alpha * sum_{j in window(c)} a_j^2)^beta,
/// window(c) = [c - n/2, c + n/2] clipped to the channel range.
template <std::floating_point T>
Tensor<T> lrn(const Tensor<T>& input, const LrnParams& params) {
  if (input.rank() != 4) fail("lrn: input must be [N,C,H,W], got ", shape_str(input.shape()));
  if (params.n == 0 || params.alpha <= 0 || params.beta <= 0) fail("lrn: invalid parameters");
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  const std::size_t half = params.n / 2;
  const T alpha = static_cast<T>(params.alpha), beta = static_cast<T>(params.beta), k = static_cast<T>(params.k);
  // Per element: the denominator s and s^-beta.
  auto scale = std::make_shared<std::vector<T>>(input.numel());
  auto inv = std::make_shared<std::vector<T>>(input.numel());
  std::vector<T> out(input.numel());
  const T* X = input.data().data();
  parallel_for(N, [&](std::size_t n) {
    const T* xs = X + n * C * HW;
    T* sc = scale->data() + n * C * HW;
    T* iv = inv->data() + n * C * HW;
    T* ys = out.data() + n * C * HW;
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t lo = c >= half ? c - half : 0;
      const std::size_t hi = std::min(C - 1, c + half);
      T* s = sc + c * HW;
      std::fill(s, s + HW, T(0));
      for (std::size_t j = lo; j <= hi; ++j) {
        const T* xj = xs + j * HW;
        for (std::size_t i = 0; i < HW; ++i) s[i] += xj[i] * xj[i];
      }
      for (std::size_t i = 0; i < HW; ++i) {
        s[i] = k + alpha * s[i];
        iv[c * HW + i] = detail::inv_pow(s[i], beta);
        ys[c * HW + i] = xs[c * HW + i] * iv[c * HW + i];
      }
    }
  });
  Tensor<T> x = input;
  return detail::finish<T>(
      "lrn", {input}, input.shape(), std::move(out), [x, scale, inv, N, C, HW, half, alpha, beta](const Tensor<T>& y) {
        if (!x.requires_grad()) return;
        const T* X = x.data().data();
        const T* G = y.grad().data();
        T* GX = x.grad_buffer().data();
        parallel_for(N, [&](std::size_t n) {
          const T* xs = X + n * C * HW;
          const T* gs = G + n * C * HW;
          const T* sc = scale->data() + n * C * HW;
          const T* iv = inv->data() + n * C * HW;
          T* gx = GX + n * C * HW;
          // t_c = g_c * a_c * s_c^(-beta-1)
          std::vector<T> t(C * HW);
          for (std::size_t i = 0; i < C * HW; ++i) t[i] = gs[i] * xs[i] * (iv[i] / sc[i]);
          std::vector<T> acc(HW);
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t lo = c >= half ? c - half : 0;
            const std::size_t hi = std::min(C - 1, c + half);
            std::fill(acc.begin(), acc.end(), T(0));
            for (std::size_t j = lo; j <= hi; ++j) {
              const T* tj = t.data() + j * HW;
              for (std::size_t i = 0; i < HW; ++i) acc[i] += tj[i];
            }
            for (std::size_t i = 0; i < HW; ++i) {
              const std::size_t idx = c * HW + i;
              gx[idx] += gs[idx] * iv[idx] - T(2) * alpha * beta * xs[idx] * acc[i];
            }
          }
        });
      });
}

/// Inverted dropout: survivors are scaled by 1/(1-p); inference is the identity.
template <std::floating_point T>
Tensor<T> dropout(const Tensor<T>& input, const DropoutSpec& spec, Rng& rng) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) fail("dropout: rate must be in [0,1), got ", spec.rate);
  if (spec.mode == Mode::infer || spec.rate == 0.0) return input;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - spec.rate));
  auto mask = std::make_shared<std::vector<T>>(input.numel());
  std::vector<T> out(input.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = uniform01(rng) >= spec.rate ? keep_scale : T(0);
    out[i] = input.data()[i] * (*mask)[i];
  }
  Tensor<T> x = input;
  return detail::finish<T>("dropout", {input}, input.shape(), std::move(out), [x, mask](const Tensor<T>& y) {
    if (!x.requires_grad()) return;
    auto gx = x.grad_buffer();
    auto go = y.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * (*mask)[i];
  });
}

/// Affine map [N,D] x [D,U] + [U].
template <std::floating_point T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (input.rank() != 2 || weights.rank() != 2) fail("dense: input [N,D] and weights [D,U] required");
  const std::size_t N = input.dim(0), D = input.dim(1), U = weights.dim(1);
  if (weights.dim(0) != D) {
    fail("dense: input width ", D, " does not match weights ", shape_str(weights.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != U) fail("dense: bias must be [", U, "]");
  std::vector<T> out(N * U);
  const T* X = input.data().data();
  const T* Wt = weights.data().data();
  const T* B = bias.data().data();
  parallel_for(N, [&](std::size_t n) {
    T* row = out.data() + n * U;
    std::copy(B, B + U, row);
    for (std::size_t d = 0; d < D; ++d) {
      const T xv = X[n * D + d];
      if (xv == T(0)) continue;
      const T* wrow = Wt + d * U;
      for (std::size_t u = 0; u < U; ++u) row[u] += xv * wrow[u];
    }
  });
  Tensor<T> x = input, w = weights, b = bias;
  return detail::finish<T>("dense", {input, weights, bias}, {N, U}, std::move(out),
                           [x, w, b, N, D, U](const Tensor<T>& y) {
                             const T* G = y.grad().data();
                             const T* X = x.data().data();
                             const T* Wt = w.data().data();
                             if (b.requires_grad()) {
                               auto gb = b.grad_buffer();
                               for (std::size_t n = 0; n < N; ++n)
                                 for (std::size_t u = 0; u < U; ++u) gb[u] += G[n * U + u];
                             }
                             if (w.requires_grad()) {
                               T* gw = w.grad_buffer().data();
                               parallel_for(D, [&](std::size_t d) {
                                 T* grow = gw + d * U;
                                 for (std::size_t n = 0; n < N; ++n) {
                                   const T xv = X[n * D + d];
                                   if (xv == T(0)) continue;
                                   const T* g = G + n * U;
                                   for (std::size_t u = 0; u < U; ++u) grow[u] += xv * g[u];
                                 }
                               });
                             }
                             if (x.requires_grad()) {
                               T* gx = x.grad_buffer().data();
                               parallel_for(N, [&](std::size_t n) {
                                 const T* g = G + n * U;
                                 for (std::size_t d = 0; d < D; ++d) {
                                   const T* wrow = Wt + d * U;
                                   T acc = T(0);
                                   for (std::size_t u = 0; u < U; ++u) acc += g[u] * wrow[u];
                                   gx[n * D + d] += acc;
                                 }
                               });
                             }
                           });
}

/// max(0, x); the subgradient at 0 is 0.
template <std::floating_point T>
Tensor<T> relu(const Tensor<T>& input) {
  return max_with_scalar(input, T(0));
}

/// [N, ...] -> [N, prod(...)].
template <std::floating_point T>
Tensor<T> flatten(const Tensor<T>& input) {
  return input.reshaped({input.dim(0), input.numel() / input.dim(0)});
}

inline double glorot_limit(double fan_in, double fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

/// Glorot/Xavier uniform init, bound sqrt(6 / (fan_in + fan_out)).
/// Rank 2 is a dense weight [in, out]; rank 4 is a conv kernel [out, in, kH, kW].
template <std::floating_point T>
Tensor<T> glorot_init(const Shape& shape, Rng& rng) {
  double fan_in = 0, fan_out = 0;
  if (shape.size() == 2) {
    fan_in = static_cast<double>(shape[0]);
    fan_out = static_cast<double>(shape[1]);
  } else if (shape.size() == 4) {
    const double receptive = static_cast<double>(shape[2] * shape[3]);
    fan_in = static_cast<double>(shape[1]) * receptive;
    fan_out = static_cast<double>(shape[0]) * receptive;
  } else {
    fail("glorot_init: unsupported rank ", shape.size(), " for shape ", shape_str(shape));
  }
  const double limit = glorot_limit(fan_in, fan_out);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(limit * (2.0 * uniform01(rng) - 1.0));
  return Tensor<T>(shape, std::move(v));
}

}  // namespace signet
