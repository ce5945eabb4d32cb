#pragma once

// Adam with bias correction, plus the patience-based early-stopping rule.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plnet/runtime.hpp"

namespace plnet {

template <typename T>
class Adam {
 public:
  struct Slot {
    Tensor<T> m, v;
  };

  Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Missing gradients count as zero: moments decay, fresh parameters stay put.
  void step(const std::vector<ParamRef<T>>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (const auto& p : params) {
      Tensor<T>& w = p.var.value();
      Slot& slot = slots_[p.name];
      if (slot.m.empty()) {
        slot.m = Tensor<T>(w.n, w.c, w.h, w.w, T(0));
        slot.v = Tensor<T>(w.n, w.c, w.h, w.w, T(0));
      }
      const Tensor<T>& g = p.var.grad();
      const bool has_grad = !g.empty();
      for (size_t i = 0; i < w.size(); ++i) {
        const double gi = has_grad ? double(g.data[i]) : 0.0;
        if (!std::isfinite(gi)) {
          throw NumericError("non-finite gradient in " + p.name + "[" + std::to_string(i) + "]");
        }
        const double m = beta1_ * double(slot.m.data[i]) + (1.0 - beta1_) * gi;
        const double v = beta2_ * double(slot.v.data[i]) + (1.0 - beta2_) * gi * gi;
        slot.m.data[i] = T(m);
        slot.v.data[i] = T(v);
        w.data[i] = T(double(w.data[i]) - lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  std::map<std::string, Slot>& slots() { return slots_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

// Stops once no improvement greater than min_delta has been seen for
// `patience` consecutive updates. Any qualifying improvement resets the
// counter.
struct EarlyStop {
  double best = std::numeric_limits<double>::infinity();
  int patience = 20;
  double min_delta = 1e-4;
  int stale = 0;
  bool improved_last = false;

  explicit EarlyStop(int patience_ = 20, double min_delta_ = 1e-4)
      : patience(patience_), min_delta(min_delta_) {}

  // Returns true when training should stop.
  bool update(double val_loss) {
    if (val_loss < best - min_delta) {
      best = val_loss;
      stale = 0;
      improved_last = true;
      return false;
    }
    improved_last = false;
    return ++stale >= patience;
  }
};

}  // namespace plnet
