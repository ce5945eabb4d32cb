#pragma once

// Finite-difference verification harness. Compares analytic gradients against
// central differences on a random subsample of parameter coordinates.
// Intended to run at 64-bit.
//
// Piecewise-smooth losses (ReLU zero crossings, max-pool near-ties) bias the
// central quotient when the window straddles a kink, so after the first
// quotient at the nominal step the coordinate is refined until two successive
// quotients agree; the second difference |l+ - 2*l0 + l-|/(2h) bounds any
// residual straddle bias and is subtracted. A wrong backward disagrees with
// the converged quotient at every h and still fails.

#include <functional>
#include <string>
#include <vector>

#include "plnet/autograd.hpp"
#include "plnet/rng.hpp"

namespace plnet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t coords_checked = 0;
  std::string worst_coord;

  bool passed(double tol) const { return max_rel_err <= tol; }
};

// `f` rebuilds the scalar loss from the current parameter values; it must be
// deterministic. Step size is 1e-5 scaled by coordinate magnitude.
template <typename T>
GradCheckReport grad_check(const std::function<Var<T>(Tape<T>&)>& f,
                           const std::vector<ParamRef<T>>& params, int samples_per_tensor = 8,
                           std::uint64_t seed = 0, double step = 1e-5) {
  // Analytic pass.
  std::vector<Tensor<T>> analytic;
  double l0 = 0.0;
  {
    for (const auto& p : params) p.var.zero_grad();
    Tape<T> tape;
    Var<T> loss = f(tape);
    tape.backward(loss);
    l0 = loss.scalar();
    for (const auto& p : params) {
      Tensor<T> g = p.var.grad().empty()
                        ? Tensor<T>(p.var.value().n, p.var.value().c, p.var.value().h,
                                    p.var.value().w, T(0))
                        : p.var.grad();
      if (!g.all_finite()) {
        throw NumericError("grad_check: non-finite analytic gradient at " + p.name);
      }
      analytic.push_back(std::move(g));
    }
  }

  auto eval = [&]() -> double {
    Tape<T> tape(false);
    return f(tape).scalar();
  };

  GradCheckReport report;
  Rng rng(hash_mix(seed, 0x67726164ULL));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& w = params[pi].var.value();
    const size_t n = w.size();
    const int k = samples_per_tensor < static_cast<int>(n) ? samples_per_tensor
                                                           : static_cast<int>(n);
    for (int s = 0; s < k; ++s) {
      const size_t idx = n == 1 ? 0 : static_cast<size_t>(rng.uniform() * n);
      const T w0 = w.data[idx];
      const double a = double(analytic[pi].data[idx]);
      auto quotient = [&](double h, double& kink_out) {
        w.data[idx] = T(double(w0) + h);
        const double lp = eval();
        w.data[idx] = T(double(w0) - h);
        const double lm = eval();
        w.data[idx] = w0;
        kink_out = std::abs(lp - 2.0 * l0 + lm) / (2.0 * h);
        const double q = (lp - lm) / (2.0 * h);
        if (!std::isfinite(q)) {
          throw NumericError("grad_check: non-finite numeric gradient at " + params[pi].name +
                             "[" + std::to_string(idx) + "]");
        }
        return q;
      };
      double h = step * std::max(1.0, std::abs(double(w0)));
      double kink = 0.0;
      double numeric = quotient(h, kink);
      for (int attempt = 0; attempt < 4; ++attempt) {
        double kink_fine = 0.0;
        const double fine = quotient(h / 8.0, kink_fine);
        const double agree_tol =
            3e-5 * std::max({std::abs(a), std::abs(numeric), std::abs(fine)}) + 1e-11;
        const bool agreed = std::abs(fine - numeric) <= agree_tol;
        numeric = fine;
        kink = kink_fine;
        h /= 8.0;
        if (agreed) break;
      }
      const double denom = std::max(std::abs(a), std::abs(numeric));
      ++report.coords_checked;
      if (denom < 1e-6) continue;  // both effectively zero against quotient noise
      const double err = std::abs(a - numeric);
      const double rel = (err > kink ? err - kink : 0.0) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_coord = params[pi].name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  return report;
}

}  // namespace plnet
