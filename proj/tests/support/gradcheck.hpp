#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "codi/rng.hpp"
#include "codi/tensor.hpp"

namespace testsupport {

// Central finite differences over a flat input vector. `f` must evaluate
// the scalar independently of any recorded graph (a fresh graph per call).
template <typename F>
std::vector<double> central_diff(F&& f, std::vector<double> x, double eps = 1e-5) {
  std::vector<double> g(x.size(), 0.0);
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double hi = f(x);
    x[i] = orig - eps;
    const double lo = f(x);
    x[i] = orig;
    g[i] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

// Relative to max(1, |analytic|) per coordinate.
inline double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

inline std::vector<double> random_values(codi::Rng& rng, size_t n, double lo = -1.5,
                                         double hi = 1.5) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Random fixed projection of a tensor to a scalar, so gradient checks see
// non-uniform upstream gradients.
inline codi::Tensor project_to_scalar(codi::Graph& g, const codi::Tensor& t, uint64_t seed) {
  codi::Rng rng(seed);
  codi::Tensor w = g.constant(t.shape(), random_values(rng, static_cast<size_t>(t.numel())));
  return g.sum(g.mul(t, w));
}

}  // namespace testsupport
