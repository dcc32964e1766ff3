#pragma once

// Finite-difference gradient oracle shared by the unit and acceptance tests.
//
// The numeric derivative is the fourth-order central stencil
//   (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h
// evaluated at steps h and h/2. When the two estimates disagree by more than
// `consistency` (relative), the oracle cannot resolve that coordinate: either
// a ReLU or max-pool switch lies inside the stencil, or the derivative is
// below the roundoff floor of the loss. Such coordinates are counted as
// skipped. The screen uses only the oracle's own values, never the analytic
// gradient.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>

#include "qkdfl/param_vec.hpp"
#include "qkdfl/rng.hpp"

namespace qkdfl::testing {

struct GradCheck {
  std::size_t coords = 0;   // compared against the analytic gradient
  std::size_t skipped = 0;  // unresolved by the oracle
  double max_rel_error = 0.0;
};

struct GradCheckOptions {
  std::size_t per_tensor = 8;
  std::uint64_t seed = 0;
  double step = 1e-4;
  double consistency = 1e-5;
};

inline GradCheck check_gradient(const std::function<double(const ParamVec&)>& f, const ParamVec& params,
                                const ParamVec& analytic, const GradCheckOptions& opt) {
  Rng rng(opt.seed);
  GradCheck out;
  ParamVec p = params;
  auto stencil = [&](std::size_t t, std::size_t e, double h) {
    const double x = p[t][e];
    auto at = [&](double dx) {
      p[t][e] = x + dx;
      const double v = f(p);
      p[t][e] = x;
      return v;
    };
    return (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
  };
  for (std::size_t t = 0; t < p.num_tensors(); ++t) {
    const std::size_t n = p[t].size();
    for (std::size_t s = 0; s < std::min(opt.per_tensor, n); ++s) {
      const std::size_t e = opt.per_tensor >= n ? s : rng.below(n);
      const double coarse = stencil(t, e, opt.step);
      const double fine = stencil(t, e, opt.step / 2);
      if (std::abs(coarse - fine) > opt.consistency * std::max(std::abs(coarse), std::abs(fine))) {
        ++out.skipped;
        continue;
      }
      const double a = analytic[t][e];
      const double denom = std::max(std::abs(a), std::abs(fine));
      const double rel = denom == 0.0 ? 0.0 : std::abs(a - fine) / denom;
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.coords;
    }
  }
  return out;
}

}  // namespace qkdfl::testing
