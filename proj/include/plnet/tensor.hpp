#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace plnet {

// Configuration / usage errors (bad shapes, bad config keys, mismatched
// checkpoints). The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failures during training (non-finite loss or gradient). Exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace debug {
// Post-op finite checks. On by default in debug builds only; tests can toggle.
inline bool& finite_checks() {
#ifdef NDEBUG
  static bool enabled = false;
#else
  static bool enabled = true;
#endif
  return enabled;
}
}  // namespace debug

// Dense rank-4 array in (batch, channels, height, width) layout, row-major,
// innermost dimension contiguous. The universal activation/weight carrier;
// weights reuse it as (out_ch, in_ch, kh, kw).
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0)) : n(n_), c(c_), h(h_), w(w_) {
    if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1) {
      throw ConfigError("tensor dimensions must all be >= 1, got (" + std::to_string(n_) + "," +
                        std::to_string(c_) + "," + std::to_string(h_) + "," + std::to_string(w_) +
                        ")");
    }
    data.assign(static_cast<size_t>(n_) * c_ * h_ * w_, fill);
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  size_t index(int b, int ch, int y, int x) const {
    return ((static_cast<size_t>(b) * c + ch) * h + y) * w + x;
  }
  T& at(int b, int ch, int y, int x) { return data[index(b, ch, y, x)]; }
  const T& at(int b, int ch, int y, int x) const { return data[index(b, ch, y, x)]; }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
inline void check_finite(const Tensor<T>& t, const char* where) {
  if (!debug::finite_checks()) return;
  if (!t.all_finite()) throw NumericError(std::string("non-finite values after ") + where);
}

}  // namespace plnet
