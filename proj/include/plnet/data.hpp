#pragma once

// Dataset ingestion and preprocessing: gray-world color constancy, resizing,
// deterministic k-fold splitting, the synthetic desk-scale generator, and
// directory loading (images/<id>.png paired with masks/<id>.png).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "plnet/png_io.hpp"
#include "plnet/rng.hpp"
#include "plnet/tensor.hpp"

namespace plnet {

struct Sample {
  Tensor<float> image;  // (1,3,H,W) in [0,1]
  Tensor<float> mask;   // (1,1,H,W) in {0,1}
  std::string id;
};

using Dataset = std::vector<Sample>;

// ------------------------------------------------------------- gray world ---

// Scales each channel by (mean of channel means) / (channel mean) and clips
// to [0,1]. A channel with mean below 1e-6 is left untouched with a warning.
inline Tensor<float> gray_world_normalize(const Tensor<float>& image) {
  if (image.c != 3) throw ConfigError("gray_world_normalize: expected 3 channels");
  const size_t plane = static_cast<size_t>(image.h) * image.w;
  double mean[3];
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int b = 0; b < image.n; ++b) {
      const float* p = &image.data[image.index(b, c, 0, 0)];
      for (size_t i = 0; i < plane; ++i) s += p[i];
    }
    mean[c] = s / double(plane * image.n);
  }
  const double target = (mean[0] + mean[1] + mean[2]) / 3.0;
  Tensor<float> out = image;
  for (int c = 0; c < 3; ++c) {
    if (mean[c] < 1e-6) {
      std::cerr << "gray_world: channel " << c << " mean " << mean[c]
                << " too small, skipping scale\n";
      continue;
    }
    const double scale = target / mean[c];
    for (int b = 0; b < image.n; ++b) {
      float* p = &out.data[out.index(b, c, 0, 0)];
      for (size_t i = 0; i < plane; ++i) {
        float v = static_cast<float>(p[i] * scale);
        p[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      }
    }
  }
  return out;
}

// ----------------------------------------------------------------- resize ---

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& src, int oh, int ow) {
  Tensor<T> out(src.n, src.c, oh, ow);
  for (int b = 0; b < src.n; ++b) {
    for (int c = 0; c < src.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        double sy = (y + 0.5) * src.h / double(oh) - 0.5;
        sy = sy < 0 ? 0 : (sy > src.h - 1 ? src.h - 1 : sy);
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = y0 + 1 < src.h ? y0 + 1 : y0;
        const double ty = sy - y0;
        for (int x = 0; x < ow; ++x) {
          double sx = (x + 0.5) * src.w / double(ow) - 0.5;
          sx = sx < 0 ? 0 : (sx > src.w - 1 ? src.w - 1 : sx);
          const int x0 = static_cast<int>(std::floor(sx));
          const int x1 = x0 + 1 < src.w ? x0 + 1 : x0;
          const double tx = sx - x0;
          const double v = (1 - ty) * ((1 - tx) * src.at(b, c, y0, x0) + tx * src.at(b, c, y0, x1)) +
                           ty * ((1 - tx) * src.at(b, c, y1, x0) + tx * src.at(b, c, y1, x1));
          out.at(b, c, y, x) = T(v);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& src, int oh, int ow) {
  Tensor<T> out(src.n, src.c, oh, ow);
  for (int b = 0; b < src.n; ++b) {
    for (int c = 0; c < src.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        int sy = static_cast<int>((y + 0.5) * src.h / double(oh));
        if (sy >= src.h) sy = src.h - 1;
        for (int x = 0; x < ow; ++x) {
          int sx = static_cast<int>((x + 0.5) * src.w / double(ow));
          if (sx >= src.w) sx = src.w - 1;
          out.at(b, c, y, x) = src.at(b, c, sy, sx);
        }
      }
    }
  }
  return out;
}

// Bilinear for the image, nearest-neighbor for the mask so it stays binary.
inline Sample resize_sample(const Sample& s, int target) {
  if (target < 1) throw ConfigError("resize: target must be >= 1");
  Sample out;
  out.id = s.id;
  out.image = resize_bilinear(s.image, target, target);
  out.mask = resize_nearest(s.mask, target, target);
  return out;
}

// ------------------------------------------------------------ k-fold split ---

struct SplitPlan {
  std::map<std::string, int> fold_of;
  int k = 0;
  std::uint64_t seed = 0;
};

// Deterministic: ids are sorted, shuffled by the seed, assigned round-robin.
// Fold sizes differ by at most one.
inline SplitPlan kfold_split(std::vector<std::string> ids, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: k must be >= 2");
  if (static_cast<int>(ids.size()) < k) {
    throw ConfigError("kfold_split: need at least k ids, got " + std::to_string(ids.size()));
  }
  std::sort(ids.begin(), ids.end());
  Rng rng(hash_mix(seed, 0x6b666f6cULL));
  for (size_t i = ids.size() - 1; i > 0; --i) {
    const size_t j = static_cast<size_t>(rng.uniform() * (i + 1));
    std::swap(ids[i], ids[j]);
  }
  SplitPlan plan;
  plan.k = k;
  plan.seed = seed;
  for (size_t i = 0; i < ids.size(); ++i) plan.fold_of[ids[i]] = static_cast<int>(i % k);
  return plan;
}

inline void save_split(const SplitPlan& plan, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write split plan: " + path);
  f << "# k=" << plan.k << " seed=" << plan.seed << "\n";
  for (const auto& [id, fold] : plan.fold_of) f << id << " " << fold << "\n";
}

inline SplitPlan load_split(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read split plan: " + path);
  SplitPlan plan;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string id;
    int fold;
    if (!(ss >> id >> fold)) throw ConfigError("bad split plan line: " + line);
    plan.fold_of[id] = fold;
    if (fold + 1 > plan.k) plan.k = fold + 1;
  }
  if (plan.fold_of.empty()) throw ConfigError("empty split plan: " + path);
  return plan;
}

// -------------------------------------------------------------- synthetic ---

// Desk-scale stand-in dataset: 1-3 filled ellipses on a textured background
// with brightness gradients, channel tints, thin dark curve overlays, and
// additive noise. Masks are the exact ellipse unions. Fully deterministic per
// (seed, index).
inline Sample synth_sample(int size, std::uint64_t seed, int index, double difficulty) {
  Rng rng(hash_mix(seed, static_cast<std::uint64_t>(index) + 0x73796eULL));
  Sample s;
  s.id = "synth_" + std::to_string(index);
  s.image = Tensor<float>(1, 3, size, size);
  s.mask = Tensor<float>(1, 1, size, size);

  struct Ellipse {
    double cx, cy, a, b, cos_t, sin_t;
  };
  const int n_ell = 1 + rng.uniform_int(3);
  std::vector<Ellipse> ells;
  for (int e = 0; e < n_ell; ++e) {
    Ellipse el;
    el.cx = rng.uniform(0.25, 0.75) * size;
    el.cy = rng.uniform(0.25, 0.75) * size;
    el.a = rng.uniform(0.10, 0.28) * size;
    el.b = rng.uniform(0.10, 0.28) * size;
    const double t = rng.uniform(0.0, 3.14159265358979323846);
    el.cos_t = std::cos(t);
    el.sin_t = std::sin(t);
    ells.push_back(el);
  }
  auto inside = [&](double x, double y) {
    for (const auto& el : ells) {
      const double dx = x - el.cx, dy = y - el.cy;
      const double u = (dx * el.cos_t + dy * el.sin_t) / el.a;
      const double v = (-dx * el.sin_t + dy * el.cos_t) / el.b;
      if (u * u + v * v <= 1.0) return true;
    }
    return false;
  };

  const double grad_x = rng.uniform(-0.25, 0.25), grad_y = rng.uniform(-0.25, 0.25);
  const double wave_amp = 0.05 + 0.05 * difficulty;
  const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
  const double px = rng.uniform(0.0, 6.28), py = rng.uniform(0.0, 6.28);
  const double tint[3] = {rng.uniform(0.75, 1.0), rng.uniform(0.75, 1.0), rng.uniform(0.75, 1.0)};
  const double contrast = 0.18 + rng.uniform(0.0, 0.17);
  const double noise_sigma = 0.015 + 0.025 * difficulty;

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool fg = inside(x + 0.5, y + 0.5);
      s.mask.at(0, 0, y, x) = fg ? 1.0f : 0.0f;
      double base = 0.58 + grad_x * (x / double(size) - 0.5) + grad_y * (y / double(size) - 0.5) +
                    wave_amp * std::sin(6.28318 * (fx * x / size) + px) *
                        std::sin(6.28318 * (fy * y / size) + py);
      if (fg) base -= contrast;
      for (int c = 0; c < 3; ++c) {
        double v = base * tint[c] + noise_sigma * rng.normal();
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        s.image.at(0, c, y, x) = static_cast<float>(v);
      }
    }
  }

  // Thin dark curves crossing the frame, the occlusion flavor of dermoscopy.
  const int n_curves = rng.uniform_int(3) + (difficulty > 0.7 ? 1 : 0);
  for (int cidx = 0; cidx < n_curves; ++cidx) {
    const double x0 = rng.uniform(0.0, size), x1 = rng.uniform(0.0, size);
    const double y0 = rng.uniform(0.0, size), y1 = rng.uniform(0.0, size);
    const double amp = rng.uniform(2.0, 8.0), freq = rng.uniform(1.0, 3.0);
    const double ph = rng.uniform(0.0, 6.28);
    const int steps = 3 * size;
    for (int t = 0; t <= steps; ++t) {
      const double u = t / double(steps);
      const double cxp = x0 + (x1 - x0) * u;
      const double cyp = y0 + (y1 - y0) * u + amp * std::sin(6.28318 * freq * u + ph);
      const int ix = static_cast<int>(cxp), iy = static_cast<int>(cyp);
      if (ix < 0 || ix >= size || iy < 0 || iy >= size) continue;
      for (int c = 0; c < 3; ++c) {
        float& v = s.image.at(0, c, iy, ix);
        v = std::max(0.0f, v - 0.3f);
      }
    }
  }
  return s;
}

inline Dataset synth_generate(int count, int size, std::uint64_t seed, double difficulty = 0.5) {
  if (size % 16 != 0) throw ConfigError("synth_generate: size must be a multiple of 16");
  Dataset out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(synth_sample(size, seed, i, difficulty));
  return out;
}

// ----------------------------------------------------------- directory IO ---

inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  for (const auto& s : ds) {
    pngio::write_png((fs::path(dir) / "images" / (s.id + ".png")).string(),
                     pngio::from_tensor_rgb(s.image));
    pngio::write_png((fs::path(dir) / "masks" / (s.id + ".png")).string(),
                     pngio::from_tensor_gray(s.mask));
  }
}

// Pairs images/<id>.png with masks/<id>.png. Unmatched files are reported and
// skipped; zero pairs is an error. Masks binarize at pixel value >= 128.
inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path images = fs::path(dir) / "images";
  const fs::path masks = fs::path(dir) / "masks";
  if (!fs::is_directory(images) || !fs::is_directory(masks)) {
    throw ConfigError("dataset directory must contain images/ and masks/: " + dir);
  }
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(images)) {
    if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  Dataset out;
  for (const auto& id : ids) {
    const fs::path mask_path = masks / (id + ".png");
    if (!fs::exists(mask_path)) {
      std::cerr << "load_dataset: no mask for image '" << id << "', skipping\n";
      continue;
    }
    Sample s;
    s.id = id;
    s.image = pngio::to_tensor_rgb(pngio::read_png((images / (id + ".png")).string(), false));
    s.mask = pngio::to_mask_tensor(pngio::read_png(mask_path.string(), true));
    if (s.image.h != s.mask.h || s.image.w != s.mask.w) {
      std::cerr << "load_dataset: size mismatch for '" << id << "', skipping\n";
      continue;
    }
    out.push_back(std::move(s));
  }
  for (const auto& e : fs::directory_iterator(masks)) {
    if (e.path().extension() != ".png") continue;
    if (!fs::exists(images / e.path().filename())) {
      std::cerr << "load_dataset: no image for mask '" << e.path().stem().string() << "'\n";
    }
  }
  if (out.empty()) throw ConfigError("no image/mask pairs found in " + dir);
  return out;
}

}  // namespace plnet
