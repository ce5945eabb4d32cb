#pragma once

// Paired geometric augmentation: flip -> rotate -> shift, each gate drawn
// independently with probability 0.5. The same transform hits image and mask;
// the image samples bilinearly, the mask nearest-neighbor so it stays binary.
// Exposed borders are reflection-padded.

#include <cmath>

#include "plnet/rng.hpp"
#include "plnet/tensor.hpp"

namespace plnet {

struct AugmentConfig {
  double rotation_deg = 25.0;  // angle drawn uniformly in [-rotation_deg, +rotation_deg]
  double shift_frac = 0.15;    // horizontal and vertical shift bound as a fraction of size
  bool hflip = true;
  bool vflip = true;
  double apply_prob = 0.5;
};

struct AugmentParams {
  bool hflip = false, vflip = false;
  double angle_deg = 0.0;
  double shift_x = 0.0, shift_y = 0.0;  // fractions of width/height
};

inline AugmentParams draw_augment(const AugmentConfig& cfg, Rng& rng) {
  AugmentParams p;
  if (cfg.hflip && rng.uniform() < cfg.apply_prob) p.hflip = true;
  if (cfg.vflip && rng.uniform() < cfg.apply_prob) p.vflip = true;
  if (rng.uniform() < cfg.apply_prob) p.angle_deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
  if (rng.uniform() < cfg.apply_prob) {
    p.shift_x = rng.uniform(-cfg.shift_frac, cfg.shift_frac);
    p.shift_y = rng.uniform(-cfg.shift_frac, cfg.shift_frac);
  }
  return p;
}

namespace detail {
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - 1 - i;
  return i;
}
}  // namespace detail

// Applies the transform to one (1,C,H,W) tensor. Inverse-maps each output
// pixel through shift, rotation and flip about the image center.
template <typename T>
Tensor<T> warp(const Tensor<T>& src, const AugmentParams& p, bool nearest) {
  const int H = src.h, W = src.w;
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  const double rad = -p.angle_deg * 3.14159265358979323846 / 180.0;  // inverse rotation
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double dx = p.shift_x * W, dy = p.shift_y * H;
  Tensor<T> out(src.n, src.c, H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double ux = (x - cx) - dx;
      const double uy = (y - cy) - dy;
      double sx = ca * ux - sa * uy;
      double sy = sa * ux + ca * uy;
      if (p.hflip) sx = -sx;
      if (p.vflip) sy = -sy;
      sx += cx;
      sy += cy;
      for (int ch = 0; ch < src.c; ++ch) {
        T v;
        if (nearest) {
          const int ix = detail::reflect_index(static_cast<int>(std::lround(sx)), W);
          const int iy = detail::reflect_index(static_cast<int>(std::lround(sy)), H);
          v = src.at(0, ch, iy, ix);
        } else {
          const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
          const double tx = sx - x0, ty = sy - y0;
          const int xa = detail::reflect_index(x0, W), xb = detail::reflect_index(x0 + 1, W);
          const int ya = detail::reflect_index(y0, H), yb = detail::reflect_index(y0 + 1, H);
          const double v00 = src.at(0, ch, ya, xa), v01 = src.at(0, ch, ya, xb);
          const double v10 = src.at(0, ch, yb, xa), v11 = src.at(0, ch, yb, xb);
          v = T((1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11));
        }
        out.at(0, ch, y, x) = v;
      }
    }
  }
  return out;
}

template <typename T>
void apply_augment(Tensor<T>& image, Tensor<T>& mask, const AugmentParams& p) {
  image = warp(image, p, /*nearest=*/false);
  mask = warp(mask, p, /*nearest=*/true);
}

template <typename T>
void augment(Tensor<T>& image, Tensor<T>& mask, const AugmentConfig& cfg, Rng& rng) {
  apply_augment(image, mask, draw_augment(cfg, rng));
}

}  // namespace plnet
