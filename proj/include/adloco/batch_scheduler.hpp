// Adaptive batch-size tests.
//
// Each test turns per-sample gradient statistics of the most recent batch into
// the batch size requested for the next round. Three variants: the norm test
// (variance of the per-sample gradients against the squared mean-gradient
// norm), the inner-product test (variance of per-sample projections onto the
// mean gradient), and the augmented test (inner-product test plus a bound on
// the variance orthogonal to the mean gradient).
//
// Vector variance here is the trace of the sample covariance with the
// unbiased 1/(b-1) normalizer. All tests clamp to [1, cap]; a vanishing mean
// gradient requests the cap, since the tests are unbounded at stationary
// points.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "adloco/errors.hpp"
#include "adloco/objectives.hpp"
#include "adloco/vec.hpp"

namespace adloco {

inline constexpr long kDefaultBatchCap = 65536;  // 2^16

// Squared-norm threshold below which the mean gradient counts as vanished.
inline constexpr double kVanishedGradNormSq = 1e-24;

enum class BatchTestKind { kNorm, kInnerProduct, kAugmented };

inline const char* to_string(BatchTestKind k) {
  switch (k) {
    case BatchTestKind::kNorm: return "norm";
    case BatchTestKind::kInnerProduct: return "inner_product";
    case BatchTestKind::kAugmented: return "augmented";
  }
  return "?";
}

inline BatchTestKind parse_batch_test(const std::string& name) {
  if (name == "norm") return BatchTestKind::kNorm;
  if (name == "inner_product") return BatchTestKind::kInnerProduct;
  if (name == "augmented") return BatchTestKind::kAugmented;
  throw ConfigError("unknown batch test '" + name + "'");
}

// Summary statistics of one batch's per-sample gradients.
struct GradientStats {
  ParameterVector mean_grad;
  double grad_norm_sq = 0.0;
  double variance_trace = 0.0;          // trace of sample covariance, 1/(b-1)
  std::vector<double> inner_products;   // <g_i, mean_grad> per sample
  int batch_size_used = 0;
  bool degenerate = false;  // fewer than 2 samples: variances undefined
};

inline GradientStats compute_stats(const GradMatrix& per_sample) {
  GradientStats st;
  const int b = per_sample.batch;
  const int d = per_sample.dim;
  st.batch_size_used = b;
  st.mean_grad.assign(d, 0.0);
  if (b == 0) {
    st.degenerate = true;
    return st;
  }
  for (int i = 0; i < b; ++i) {
    const double* row = per_sample.row(i);
    for (int j = 0; j < d; ++j) st.mean_grad[j] += row[j];
  }
  for (int j = 0; j < d; ++j) st.mean_grad[j] /= static_cast<double>(b);
  st.grad_norm_sq = norm_sq(st.mean_grad);
  st.inner_products.resize(b);
  for (int i = 0; i < b; ++i) st.inner_products[i] = dot(per_sample.row_span(i), st.mean_grad);
  if (b < 2) {
    st.degenerate = true;  // variance of a single draw is undefined
    return st;
  }
  double acc = 0.0;
  for (int i = 0; i < b; ++i) {
    const double* row = per_sample.row(i);
    for (int j = 0; j < d; ++j) {
      const double r = row[j] - st.mean_grad[j];
      acc += r * r;
    }
  }
  st.variance_trace = acc / static_cast<double>(b - 1);
  return st;
}

inline GradientStats compute_stats(const std::vector<ParameterVector>& per_sample) {
  GradMatrix m;
  if (!per_sample.empty()) {
    m.resize(static_cast<int>(per_sample.size()), static_cast<int>(per_sample[0].size()));
    for (std::size_t i = 0; i < per_sample.size(); ++i) {
      if (per_sample[i].size() != per_sample[0].size())
        throw UsageError("compute_stats: ragged per-sample gradients");
      double* row = m.row(static_cast<int>(i));
      for (std::size_t j = 0; j < per_sample[i].size(); ++j) row[j] = per_sample[i][j];
    }
  }
  return compute_stats(m);
}

namespace detail {

// Ceil-and-clamp into [1, cap], saturating in the double domain so that huge
// ratios never overflow the integer type.
inline long clamp_batch(double value, long cap) {
  if (!(value > 0.0)) return 1;  // also catches NaN
  if (value >= static_cast<double>(cap)) return cap;
  const long b = static_cast<long>(std::ceil(value));
  return b < 1 ? 1 : (b > cap ? cap : b);
}

// Unbiased sample variance of a scalar sequence; 0 when fewer than 2 values.
inline double scalar_variance(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(n - 1);
}

}  // namespace detail

// Norm test: b_next = ceil(variance_trace / (eta^2 * ||mean_grad||^2)).
inline long norm_test_batch(const GradientStats& stats, double eta,
                            long cap = kDefaultBatchCap) {
  if (!(eta > 0.0)) throw ConfigError("norm test: eta must be positive");
  if (stats.grad_norm_sq < kVanishedGradNormSq) return cap;
  return detail::clamp_batch(stats.variance_trace / (eta * eta * stats.grad_norm_sq), cap);
}

// Inner-product test: b_next = ceil(Var_i(<g_i, mean>) / (theta^2 ||mean||^4)).
inline long inner_product_test_batch(const GradientStats& stats, double theta,
                                     long cap = kDefaultBatchCap) {
  if (!(theta > 0.0)) throw ConfigError("inner-product test: theta must be positive");
  if (stats.grad_norm_sq < kVanishedGradNormSq) return cap;
  const double var_ip = detail::scalar_variance(stats.inner_products);
  return detail::clamp_batch(var_ip / (theta * theta * stats.grad_norm_sq * stats.grad_norm_sq),
                             cap);
}

// Augmented test: max(base, ceil(Var of the residuals orthogonal to the mean
// gradient / (nu^2 ||mean||^2))). `base` is normally the inner-product test's
// answer.
inline long augmented_test_batch(const GradientStats& stats, const GradMatrix& per_sample,
                                 long base, double nu, long cap = kDefaultBatchCap) {
  if (!(nu > 0.0)) throw ConfigError("augmented test: nu must be positive");
  if (stats.grad_norm_sq < kVanishedGradNormSq) return cap;
  const int b = per_sample.batch;
  const int d = per_sample.dim;
  long extra = 1;
  if (b >= 2) {
    // r_i = g_i - (<g_i, mean>/||mean||^2) mean; variance of the r_i around
    // their mean, as a covariance trace.
    std::vector<double> residuals(static_cast<std::size_t>(b) * d);
    std::vector<double> rbar(d, 0.0);
    for (int i = 0; i < b; ++i) {
      const double* row = per_sample.row(i);
      const double coef = stats.inner_products[i] / stats.grad_norm_sq;
      double* r = residuals.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) {
        r[j] = row[j] - coef * stats.mean_grad[j];
        rbar[j] += r[j];
      }
    }
    for (int j = 0; j < d; ++j) rbar[j] /= static_cast<double>(b);
    double acc = 0.0;
    for (int i = 0; i < b; ++i) {
      const double* r = residuals.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) {
        const double v = r[j] - rbar[j];
        acc += v * v;
      }
    }
    const double var_orth = acc / static_cast<double>(b - 1);
    extra = detail::clamp_batch(var_orth / (nu * nu * stats.grad_norm_sq), cap);
  }
  const long out = base > extra ? base : extra;
  return out < 1 ? 1 : (out > cap ? cap : out);
}

struct BatchTestConfig {
  BatchTestKind kind = BatchTestKind::kNorm;
  double eta = 0.8;
  double theta = 0.01;
  double nu = 0.3;
  long cap = kDefaultBatchCap;
};

// Requested batch size plus the diagnostics that produced it.
struct BatchDecision {
  long requested = 1;
  BatchTestKind test_used = BatchTestKind::kNorm;
  GradientStats diagnostics;
};

// Apply the configured test. The augmented test uses the inner-product test's
// answer as its base, taking the max of the two bounds.
inline BatchDecision decide_batch(const BatchTestConfig& cfg, const GradMatrix& per_sample) {
  BatchDecision d;
  d.test_used = cfg.kind;
  d.diagnostics = compute_stats(per_sample);
  switch (cfg.kind) {
    case BatchTestKind::kNorm:
      d.requested = norm_test_batch(d.diagnostics, cfg.eta, cfg.cap);
      break;
    case BatchTestKind::kInnerProduct:
      d.requested = inner_product_test_batch(d.diagnostics, cfg.theta, cfg.cap);
      break;
    case BatchTestKind::kAugmented: {
      const long base = inner_product_test_batch(d.diagnostics, cfg.theta, cfg.cap);
      d.requested = augmented_test_batch(d.diagnostics, per_sample, base, cfg.nu, cfg.cap);
      break;
    }
  }
  return d;
}

}  // namespace adloco
