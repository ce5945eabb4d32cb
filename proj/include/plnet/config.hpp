#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "plnet/tensor.hpp"

namespace plnet {

enum class Variant { plnet, unet };

inline std::string to_string(Variant v) { return v == Variant::plnet ? "plnet" : "unet"; }

inline Variant variant_from_string(const std::string& s) {
  if (s == "plnet") return Variant::plnet;
  if (s == "unet") return Variant::unet;
  throw ConfigError("unknown variant '" + s + "' (expected plnet or unet)");
}

// All architecture hyperparameters. The channel schedule at encoder level l
// (1-indexed) is round(base_channels * ocs * 2^(l-1)), rounded half up,
// minimum 1. stage_depths lists encoder depths per stage, strictly
// increasing; the default [4, 5] bottoms stage 1 out two pool levels above
// stage 2's bottleneck.
struct NetworkConfig {
  Variant variant = Variant::plnet;
  int input_size = 224;
  int in_channels = 3;
  int out_channels = 1;
  int base_channels = 32;
  double ocs = 1.0;  // output channel scale; 0.5 is the compact variant, sweep range [0.5, 2.0]
  int steps = 2;     // encoder-decoder passes per stage
  std::vector<int> stage_depths = {4, 5};

  int num_stages() const {
    return variant == Variant::unet ? 1 : static_cast<int>(stage_depths.size());
  }

  int max_depth() const {
    return variant == Variant::unet ? 5 : stage_depths.back();
  }

  int stage_depth(int stage) const {
    return variant == Variant::unet ? 5 : stage_depths[stage - 1];
  }

  // The classic baseline starts at twice the progressive net's width.
  int width_base() const {
    return variant == Variant::unet ? 2 * base_channels : base_channels;
  }

  int channels_at(int level) const {
    const double v = width_base() * ocs * std::pow(2.0, level - 1);
    const int r = static_cast<int>(std::floor(v + 0.5));
    return r < 1 ? 1 : r;
  }

  void validate() const {
    if (input_size < 1) throw ConfigError("input_size must be >= 1");
    if (in_channels < 1 || out_channels < 1) throw ConfigError("channel counts must be >= 1");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (!(ocs > 0.0)) throw ConfigError("ocs must be positive");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (variant == Variant::plnet) {
      if (stage_depths.empty()) throw ConfigError("stage_depths must not be empty");
      for (size_t i = 0; i < stage_depths.size(); ++i) {
        if (stage_depths[i] < 2) throw ConfigError("stage depths must be >= 2");
        if (i > 0 && stage_depths[i] <= stage_depths[i - 1]) {
          throw ConfigError("stage_depths must be strictly increasing");
        }
      }
    }
    const int down = 1 << (max_depth() - 1);
    if (input_size % down != 0) {
      throw ConfigError("input_size " + std::to_string(input_size) +
                        " not divisible by 2^(max depth - 1) = " + std::to_string(down));
    }
  }

  std::string depths_str() const {
    std::ostringstream os;
    for (size_t i = 0; i < stage_depths.size(); ++i) {
      if (i) os << ",";
      os << stage_depths[i];
    }
    return os.str();
  }
};

inline std::vector<int> parse_depths(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw ConfigError("stage_depths: expected comma-separated integers, got '" + s + "'");
  return out;
}

}  // namespace plnet
