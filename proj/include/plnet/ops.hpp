#pragma once

// Numeric kernels: forward evaluation and gradient propagation for every
// primitive the network needs. Each output element is reduced by exactly one
// thread in a fixed order, so results are bitwise reproducible regardless of
// thread count.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "plnet/tensor.hpp"

namespace plnet::ops {

// ---------------------------------------------------------------- conv2d ---

// Same-padding, stride-1 convolution. weights: (out_ch, in_ch, k, k), k odd.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const std::string& where = "conv2d") {
  const int oc = weight.n, ic = weight.c, k = weight.h;
  if (weight.h != weight.w) throw ConfigError(where + ": kernel must be square");
  if (x.c != ic) {
    throw ConfigError(where + ": input has " + std::to_string(x.c) + " channels, expected " +
                      std::to_string(ic));
  }
  const int pad = k / 2;
  Tensor<T> out(x.n, oc, x.h, x.w);
  const int H = x.h, W = x.w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < x.n; ++b) {
    for (int o = 0; o < oc; ++o) {
      T* op_ = &out.data[out.index(b, o, 0, 0)];
      const T bv = bias.data[o];
      for (int i = 0; i < H * W; ++i) op_[i] = bv;
      for (int ci = 0; ci < ic; ++ci) {
        const T* xp = &x.data[x.index(b, ci, 0, 0)];
        const T* wp = &weight.data[weight.index(o, ci, 0, 0)];
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const T wv = wp[ky * k + kx];
            if (wv == T(0)) continue;
            const int dy = ky - pad, dx = kx - pad;
            const int y0 = dy < 0 ? -dy : 0, y1 = dy > 0 ? H - dy : H;
            const int x0 = dx < 0 ? -dx : 0, x1 = dx > 0 ? W - dx : W;
            for (int y = y0; y < y1; ++y) {
              T* orow = op_ + y * W;
              const T* xrow = xp + (y + dy) * W + dx;
              for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * xrow[xx];
            }
          }
        }
      }
    }
  }
  check_finite(out, where.c_str());
  return out;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& gout, const Tensor<T>& weight, int in_h,
                                int in_w) {
  const int oc = weight.n, ic = weight.c, k = weight.h;
  const int pad = k / 2;
  Tensor<T> gx(gout.n, ic, in_h, in_w);
  const int H = in_h, W = in_w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < gout.n; ++b) {
    for (int ci = 0; ci < ic; ++ci) {
      T* gp = &gx.data[gx.index(b, ci, 0, 0)];
      for (int o = 0; o < oc; ++o) {
        const T* gop = &gout.data[gout.index(b, o, 0, 0)];
        const T* wp = &weight.data[weight.index(o, ci, 0, 0)];
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const T wv = wp[ky * k + kx];
            if (wv == T(0)) continue;
            // out[y,x] consumed in[y+ky-pad, x+kx-pad]; scatter transposed.
            const int dy = ky - pad, dx = kx - pad;
            const int y0 = dy < 0 ? -dy : 0, y1 = dy > 0 ? H - dy : H;
            const int x0 = dx < 0 ? -dx : 0, x1 = dx > 0 ? W - dx : W;
            for (int y = y0; y < y1; ++y) {
              T* grow = gp + (y + dy) * W + dx;
              const T* gorow = gop + y * W;
              for (int xx = x0; xx < x1; ++xx) grow[xx] += wv * gorow[xx];
            }
          }
        }
      }
    }
  }
  return gx;
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& gout, const Tensor<T>& x, const Tensor<T>& weight,
                            Tensor<T>& gweight, Tensor<T>& gbias) {
  const int oc = weight.n, ic = weight.c, k = weight.h;
  const int pad = k / 2;
  const int H = x.h, W = x.w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int o = 0; o < oc; ++o) {
    for (int ci = 0; ci < ic; ++ci) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int dy = ky - pad, dx = kx - pad;
          const int y0 = dy < 0 ? -dy : 0, y1 = dy > 0 ? H - dy : H;
          const int x0 = dx < 0 ? -dx : 0, x1 = dx > 0 ? W - dx : W;
          double acc = 0.0;
          for (int b = 0; b < gout.n; ++b) {
            const T* gop = &gout.data[gout.index(b, o, 0, 0)];
            const T* xp = &x.data[x.index(b, ci, 0, 0)];
            for (int y = y0; y < y1; ++y) {
              const T* gorow = gop + y * W;
              const T* xrow = xp + (y + dy) * W + dx;
              double rowacc = 0.0;
              for (int xx = x0; xx < x1; ++xx) rowacc += double(gorow[xx]) * double(xrow[xx]);
              acc += rowacc;
            }
          }
          gweight.data[gweight.index(o, ci, ky, kx)] += T(acc);
        }
      }
    }
  }
#pragma omp parallel for schedule(static)
  for (int o = 0; o < oc; ++o) {
    double acc = 0.0;
    for (int b = 0; b < gout.n; ++b) {
      const T* gop = &gout.data[gout.index(b, o, 0, 0)];
      for (int i = 0; i < H * W; ++i) acc += double(gop[i]);
    }
    gbias.data[o] += T(acc);
  }
}

// ------------------------------------------------------------- batchnorm ---

// Mutable per-node normalization state; running statistics follow the batch
// statistics by exponential moving average.
template <typename T>
struct BnState {
  std::vector<T> running_mean, running_var;
  T eps = T(1e-5);
  T momentum = T(0.99);

  explicit BnState(int channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

template <typename T>
struct BnSaved {
  std::vector<T> mean, invstd;  // batch statistics captured by the forward
  bool train = false;
};

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    BnState<T>& state, bool train, BnSaved<T>* saved,
                    const std::string& where = "batchnorm") {
  const int C = x.c;
  if (static_cast<int>(state.running_mean.size()) != C) {
    throw ConfigError(where + ": input has " + std::to_string(C) + " channels, expected " +
                      std::to_string(state.running_mean.size()));
  }
  Tensor<T> out(x.n, x.c, x.h, x.w);
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  const double N = double(x.n) * plane;
  if (saved) {
    saved->mean.assign(C, T(0));
    saved->invstd.assign(C, T(0));
    saved->train = train;
  }
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < C; ++ch) {
    double mean, invstd;
    if (train) {
      double s = 0.0;
      for (int b = 0; b < x.n; ++b) {
        const T* xp = &x.data[x.index(b, ch, 0, 0)];
        for (size_t i = 0; i < plane; ++i) s += double(xp[i]);
      }
      mean = s / N;
      double v = 0.0;
      for (int b = 0; b < x.n; ++b) {
        const T* xp = &x.data[x.index(b, ch, 0, 0)];
        for (size_t i = 0; i < plane; ++i) {
          const double d = double(xp[i]) - mean;
          v += d * d;
        }
      }
      const double var = v / N;
      invstd = 1.0 / std::sqrt(var + double(state.eps));
      const double m = double(state.momentum);
      state.running_mean[ch] = T(m * double(state.running_mean[ch]) + (1.0 - m) * mean);
      const double rv = m * double(state.running_var[ch]) + (1.0 - m) * var;
      state.running_var[ch] = T(rv < 0 ? 0 : rv);
    } else {
      mean = double(state.running_mean[ch]);
      invstd = 1.0 / std::sqrt(double(state.running_var[ch]) + double(state.eps));
    }
    if (saved) {
      saved->mean[ch] = T(mean);
      saved->invstd[ch] = T(invstd);
    }
    const double g = double(gamma.data[ch]), bt = double(beta.data[ch]);
    for (int b = 0; b < x.n; ++b) {
      const T* xp = &x.data[x.index(b, ch, 0, 0)];
      T* op_ = &out.data[out.index(b, ch, 0, 0)];
      for (size_t i = 0; i < plane; ++i) {
        op_[i] = T(g * (double(xp[i]) - mean) * invstd + bt);
      }
    }
  }
  check_finite(out, where.c_str());
  return out;
}

template <typename T>
void batchnorm_backward(const Tensor<T>& gout, const Tensor<T>& x, const Tensor<T>& gamma,
                        const BnSaved<T>& saved, Tensor<T>& gx, Tensor<T>& ggamma,
                        Tensor<T>& gbeta) {
  const int C = x.c;
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  const double N = double(x.n) * plane;
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < C; ++ch) {
    const double mean = double(saved.mean[ch]);
    const double invstd = double(saved.invstd[ch]);
    const double g = double(gamma.data[ch]);
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (int b = 0; b < x.n; ++b) {
      const T* gp = &gout.data[gout.index(b, ch, 0, 0)];
      const T* xp = &x.data[x.index(b, ch, 0, 0)];
      for (size_t i = 0; i < plane; ++i) {
        const double gy = double(gp[i]);
        sum_gy += gy;
        sum_gy_xhat += gy * (double(xp[i]) - mean) * invstd;
      }
    }
    ggamma.data[ch] += T(sum_gy_xhat);
    gbeta.data[ch] += T(sum_gy);
    if (saved.train) {
      const double k1 = sum_gy / N, k2 = sum_gy_xhat / N;
      for (int b = 0; b < x.n; ++b) {
        const T* gp = &gout.data[gout.index(b, ch, 0, 0)];
        const T* xp = &x.data[x.index(b, ch, 0, 0)];
        T* gxp = &gx.data[gx.index(b, ch, 0, 0)];
        for (size_t i = 0; i < plane; ++i) {
          const double xhat = (double(xp[i]) - mean) * invstd;
          gxp[i] += T(g * invstd * (double(gp[i]) - k1 - xhat * k2));
        }
      }
    } else {
      for (int b = 0; b < x.n; ++b) {
        const T* gp = &gout.data[gout.index(b, ch, 0, 0)];
        T* gxp = &gx.data[gx.index(b, ch, 0, 0)];
        for (size_t i = 0; i < plane; ++i) gxp[i] += T(g * invstd * double(gp[i]));
      }
    }
  }
}

// ----------------------------------------------------------- activations ---

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.n, x.c, x.h, x.w);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(x.size()); ++i) {
    out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  }
  return out;
}

// Subgradient at the kink is 0: gradient flows only where x > 0.
template <typename T>
void relu_backward(const Tensor<T>& gout, const Tensor<T>& x, Tensor<T>& gx) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(x.size()); ++i) {
    if (x.data[i] > T(0)) gx.data[i] += gout.data[i];
  }
}

template <typename T>
inline T stable_sigmoid(T v) {
  if (v >= T(0)) {
    return T(1) / (T(1) + std::exp(-v));
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.n, x.c, x.h, x.w);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(x.size()); ++i) {
    out.data[i] = stable_sigmoid(x.data[i]);
  }
  check_finite(out, "sigmoid");
  return out;
}

template <typename T>
void sigmoid_backward(const Tensor<T>& gout, const Tensor<T>& out, Tensor<T>& gx) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(out.size()); ++i) {
    gx.data[i] += gout.data[i] * out.data[i] * (T(1) - out.data[i]);
  }
}

// ---------------------------------------------------------------- maxpool ---

// 2x2 window, stride 2. Ties go to the first-scanned element (row-major).
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x, std::vector<std::uint8_t>* argmax,
                   const std::string& where = "maxpool2") {
  if (x.h % 2 != 0 || x.w % 2 != 0) {
    throw ConfigError(where + ": spatial dims must be even, got " + x.shape_str());
  }
  const int OH = x.h / 2, OW = x.w / 2;
  Tensor<T> out(x.n, x.c, OH, OW);
  if (argmax) argmax->assign(out.size(), 0);
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < x.n; ++b) {
    for (int ch = 0; ch < x.c; ++ch) {
      const T* xp = &x.data[x.index(b, ch, 0, 0)];
      T* op_ = &out.data[out.index(b, ch, 0, 0)];
      std::uint8_t* ap = argmax ? argmax->data() + out.index(b, ch, 0, 0) : nullptr;
      for (int y = 0; y < OH; ++y) {
        for (int xx = 0; xx < OW; ++xx) {
          T best = xp[(2 * y) * x.w + 2 * xx];
          std::uint8_t code = 0;
          for (int d = 1; d < 4; ++d) {
            const T v = xp[(2 * y + d / 2) * x.w + 2 * xx + d % 2];
            if (v > best) {
              best = v;
              code = static_cast<std::uint8_t>(d);
            }
          }
          op_[y * OW + xx] = best;
          if (ap) ap[y * OW + xx] = code;
        }
      }
    }
  }
  return out;
}

template <typename T>
void maxpool2_backward(const Tensor<T>& gout, const std::vector<std::uint8_t>& argmax,
                       Tensor<T>& gx) {
  const int OH = gout.h, OW = gout.w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < gout.n; ++b) {
    for (int ch = 0; ch < gout.c; ++ch) {
      const T* gp = &gout.data[gout.index(b, ch, 0, 0)];
      const std::uint8_t* ap = argmax.data() + gout.index(b, ch, 0, 0);
      T* gxp = &gx.data[gx.index(b, ch, 0, 0)];
      for (int y = 0; y < OH; ++y) {
        for (int xx = 0; xx < OW; ++xx) {
          const std::uint8_t code = ap[y * OW + xx];
          gxp[(2 * y + code / 2) * gx.w + 2 * xx + code % 2] += gp[y * OW + xx];
        }
      }
    }
  }
}

// --------------------------------------------------------------- upsample ---

namespace detail {
struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<double> t;  // weight of i1
};
inline LerpAxis lerp_axis(int out_len, int in_len) {
  LerpAxis a;
  a.i0.resize(out_len);
  a.i1.resize(out_len);
  a.t.resize(out_len);
  for (int d = 0; d < out_len; ++d) {
    double s = (d + 0.5) * in_len / double(out_len) - 0.5;
    if (s < 0) s = 0;
    if (s > in_len - 1) s = in_len - 1;
    const int lo = static_cast<int>(std::floor(s));
    a.i0[d] = lo;
    a.i1[d] = lo + 1 < in_len ? lo + 1 : lo;
    a.t[d] = s - lo;
  }
  return a;
}
}  // namespace detail

// Parameter-free bilinear doubling of height and width. Linear in the input,
// so the backward pass is its transpose.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  const int OH = x.h * 2, OW = x.w * 2;
  const auto ay = detail::lerp_axis(OH, x.h);
  const auto ax = detail::lerp_axis(OW, x.w);
  Tensor<T> out(x.n, x.c, OH, OW);
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < x.n; ++b) {
    for (int ch = 0; ch < x.c; ++ch) {
      const T* xp = &x.data[x.index(b, ch, 0, 0)];
      T* op_ = &out.data[out.index(b, ch, 0, 0)];
      for (int y = 0; y < OH; ++y) {
        const T* r0 = xp + ay.i0[y] * x.w;
        const T* r1 = xp + ay.i1[y] * x.w;
        const double ty = ay.t[y];
        for (int xx = 0; xx < OW; ++xx) {
          const double tx = ax.t[xx];
          const double v = (1 - ty) * ((1 - tx) * r0[ax.i0[xx]] + tx * r0[ax.i1[xx]]) +
                           ty * ((1 - tx) * r1[ax.i0[xx]] + tx * r1[ax.i1[xx]]);
          op_[y * OW + xx] = T(v);
        }
      }
    }
  }
  return out;
}

template <typename T>
void upsample2_backward(const Tensor<T>& gout, Tensor<T>& gx) {
  const int OH = gout.h, OW = gout.w;
  const auto ay = detail::lerp_axis(OH, gx.h);
  const auto ax = detail::lerp_axis(OW, gx.w);
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < gout.n; ++b) {
    for (int ch = 0; ch < gout.c; ++ch) {
      const T* gp = &gout.data[gout.index(b, ch, 0, 0)];
      T* gxp = &gx.data[gx.index(b, ch, 0, 0)];
      for (int y = 0; y < OH; ++y) {
        const double ty = ay.t[y];
        T* r0 = gxp + ay.i0[y] * gx.w;
        T* r1 = gxp + ay.i1[y] * gx.w;
        for (int xx = 0; xx < OW; ++xx) {
          const double tx = ax.t[xx];
          const double g = double(gp[y * OW + xx]);
          r0[ax.i0[xx]] += T((1 - ty) * (1 - tx) * g);
          r0[ax.i1[xx]] += T((1 - ty) * tx * g);
          r1[ax.i0[xx]] += T(ty * (1 - tx) * g);
          r1[ax.i1[xx]] += T(ty * tx * g);
        }
      }
    }
  }
}

// ----------------------------------------------------------------- concat ---

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b,
                          const std::string& where_a = "lhs", const std::string& where_b = "rhs") {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ConfigError("concat: spatial/batch mismatch between " + where_a + " " + a.shape_str() +
                      " and " + where_b + " " + b.shape_str());
  }
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  const size_t plane = static_cast<size_t>(a.h) * a.w;
#pragma omp parallel for schedule(static)
  for (int bb = 0; bb < a.n; ++bb) {
    for (int ch = 0; ch < a.c; ++ch) {
      std::copy_n(&a.data[a.index(bb, ch, 0, 0)], plane, &out.data[out.index(bb, ch, 0, 0)]);
    }
    for (int ch = 0; ch < b.c; ++ch) {
      std::copy_n(&b.data[b.index(bb, ch, 0, 0)], plane, &out.data[out.index(bb, a.c + ch, 0, 0)]);
    }
  }
  return out;
}

// Adds the [ch_begin, ch_begin+channels) slice of gout into gx.
template <typename T>
void slice_channels_add(const Tensor<T>& gout, int ch_begin, Tensor<T>& gx) {
  const size_t plane = static_cast<size_t>(gout.h) * gout.w;
#pragma omp parallel for schedule(static)
  for (int b = 0; b < gout.n; ++b) {
    for (int ch = 0; ch < gx.c; ++ch) {
      const T* src = &gout.data[gout.index(b, ch_begin + ch, 0, 0)];
      T* dst = &gx.data[gx.index(b, ch, 0, 0)];
      for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  }
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int ch_begin, int channels) {
  Tensor<T> out(x.n, channels, x.h, x.w);
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  for (int b = 0; b < x.n; ++b) {
    for (int ch = 0; ch < channels; ++ch) {
      std::copy_n(&x.data[x.index(b, ch_begin + ch, 0, 0)], plane,
                  &out.data[out.index(b, ch, 0, 0)]);
    }
  }
  return out;
}

// ------------------------------------------------------------ elementwise ---

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw ConfigError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<T> out(a.n, a.c, a.h, a.w);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw ConfigError("mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<T> out(a.n, a.c, a.h, a.w);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

template <typename T>
double sum_all(const Tensor<T>& x) {
  double s = 0.0;
  for (T v : x.data) s += double(v);
  return s;
}

}  // namespace plnet::ops
