// Small dense-vector helpers shared by the numeric modules.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace adloco {

// Flat model parameters. Dimension is fixed for the lifetime of a run.
using ParameterVector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

inline bool all_finite(std::span<const double> a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace adloco
