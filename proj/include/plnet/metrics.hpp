#pragma once

// Confusion-matrix evaluation for binary segmentation and cross-fold
// aggregation (mean and sample standard deviation).

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "plnet/tensor.hpp"

namespace plnet {

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }

  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

template <typename T>
Confusion confusion(const Tensor<T>& pred_mask, const Tensor<T>& truth_mask) {
  if (!pred_mask.same_shape(truth_mask)) {
    throw ConfigError("confusion: shape mismatch " + pred_mask.shape_str() + " vs " +
                      truth_mask.shape_str());
  }
  Confusion c;
  for (size_t i = 0; i < pred_mask.size(); ++i) {
    const bool p = pred_mask.data[i] > T(0.5);
    const bool g = truth_mask.data[i] > T(0.5);
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

struct Metrics {
  double acc = 0, iou = 0, dice = 0, sens = 0, spec = 0;
};

// Zero-denominator conventions: an empty class predicted empty is perfect, so
// sens = 1 when tp+fn = 0, spec = 1 when tn+fp = 0, and iou = dice = 1 when
// both masks are empty.
inline Metrics evaluate(const Confusion& c) {
  Metrics m;
  const double total = double(c.total());
  if (total <= 0) throw ConfigError("evaluate: empty confusion");
  m.acc = double(c.tp + c.tn) / total;
  const std::uint64_t denom_iou = c.tp + c.fp + c.fn;
  m.iou = denom_iou == 0 ? 1.0 : double(c.tp) / double(denom_iou);
  const std::uint64_t denom_dice = 2 * c.tp + c.fp + c.fn;
  m.dice = denom_dice == 0 ? 1.0 : double(2 * c.tp) / double(denom_dice);
  m.sens = c.tp + c.fn == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fn);
  m.spec = c.tn + c.fp == 0 ? 1.0 : double(c.tn) / double(c.tn + c.fp);
  return m;
}

struct MetricsReport {
  std::vector<Metrics> folds;
  Metrics mean;
  Metrics stddev;  // sample std, n-1 denominator; 0 for a single fold
};

inline MetricsReport aggregate(const std::vector<Metrics>& per_fold) {
  if (per_fold.empty()) throw ConfigError("aggregate: no folds");
  MetricsReport r;
  r.folds = per_fold;
  const size_t n = per_fold.size();
  auto stat = [&](double Metrics::*f, double& mean_out, double& std_out) {
    double s = 0;
    for (const auto& m : per_fold) s += m.*f;
    mean_out = s / double(n);
    if (n < 2) {
      std_out = 0;
      return;
    }
    double v = 0;
    for (const auto& m : per_fold) {
      const double d = m.*f - mean_out;
      v += d * d;
    }
    std_out = std::sqrt(v / double(n - 1));
  };
  stat(&Metrics::acc, r.mean.acc, r.stddev.acc);
  stat(&Metrics::iou, r.mean.iou, r.stddev.iou);
  stat(&Metrics::dice, r.mean.dice, r.stddev.dice);
  stat(&Metrics::sens, r.mean.sens, r.stddev.sens);
  stat(&Metrics::spec, r.mean.spec, r.stddev.spec);
  return r;
}

inline std::string metrics_table(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(10) << "fold" << std::right << std::setw(8) << "Acc"
     << std::setw(8) << "IoU" << std::setw(8) << "Dice" << std::setw(8) << "Sens" << std::setw(8)
     << "Spec" << "\n";
  for (size_t i = 0; i < r.folds.size(); ++i) {
    const auto& m = r.folds[i];
    os << std::left << std::setw(10) << i << std::right << std::setw(8) << m.acc << std::setw(8)
       << m.iou << std::setw(8) << m.dice << std::setw(8) << m.sens << std::setw(8) << m.spec
       << "\n";
  }
  os << std::left << std::setw(10) << "mean" << std::right << std::setw(8) << r.mean.acc
     << std::setw(8) << r.mean.iou << std::setw(8) << r.mean.dice << std::setw(8) << r.mean.sens
     << std::setw(8) << r.mean.spec << "\n";
  os << std::left << std::setw(10) << "std" << std::right << std::setw(8) << r.stddev.acc
     << std::setw(8) << r.stddev.iou << std::setw(8) << r.stddev.dice << std::setw(8)
     << r.stddev.sens << std::setw(8) << r.stddev.spec << "\n";
  return os.str();
}

}  // namespace plnet
