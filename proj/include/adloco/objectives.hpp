// Differentiable per-sample loss families with exact analytic gradients.
//
// Three families cover the convex and smooth non-convex cases the simulations
// need: a quadratic bowl, binary logistic regression, and a one-hidden-layer
// tanh MLP with squared loss. Gradients are hand-derived and validated against
// central finite differences in the test suite; everything is double precision
// and pure, so calls are safe from any number of threads.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "adloco/errors.hpp"
#include "adloco/vec.hpp"

namespace adloco {

struct Sample {
  std::vector<double> features;
  double target = 0.0;  // real target or 0/1 class label
};

enum class ObjectiveKind { kQuadratic, kLogistic, kMlp };

inline const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::kQuadratic: return "quadratic";
    case ObjectiveKind::kLogistic: return "logistic";
    case ObjectiveKind::kMlp: return "mlp";
  }
  return "?";
}

// A loss family plus its fixed structure constants. The parameter dimension is
// determined by the family and the input dimension.
struct Objective {
  ObjectiveKind kind = ObjectiveKind::kQuadratic;
  int input_dim = 1;
  int hidden_width = 8;  // MLP only

  static Objective quadratic(int d) { return {ObjectiveKind::kQuadratic, d, 0}; }
  static Objective logistic(int d) { return {ObjectiveKind::kLogistic, d, 0}; }
  static Objective mlp(int d, int hidden) { return {ObjectiveKind::kMlp, d, hidden}; }

  // MLP parameter layout: W1 (hidden x input, row-major), b1, w2, b2.
  int param_dim() const {
    switch (kind) {
      case ObjectiveKind::kQuadratic:
      case ObjectiveKind::kLogistic: return input_dim;
      case ObjectiveKind::kMlp: return hidden_width * input_dim + 2 * hidden_width + 1;
    }
    return 0;
  }
};

namespace detail {

inline void check_dims(const Objective& obj, std::span<const double> x, const Sample& s) {
  if (static_cast<int>(s.features.size()) != obj.input_dim)
    throw ConfigError("objective '" + std::string(to_string(obj.kind)) + "' expects " +
                      std::to_string(obj.input_dim) + "-dimensional samples, got " +
                      std::to_string(s.features.size()));
  if (static_cast<int>(x.size()) != obj.param_dim())
    throw ConfigError("objective '" + std::string(to_string(obj.kind)) + "' expects " +
                      std::to_string(obj.param_dim()) + " parameters, got " +
                      std::to_string(x.size()));
}

// log(1 + e^z) without overflow for large |z|.
inline double log1p_exp(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

struct MlpForward {
  double prediction = 0.0;
  std::vector<double> hidden;  // tanh activations
};

inline MlpForward mlp_forward(const Objective& obj, std::span<const double> x,
                              std::span<const double> a) {
  const int h = obj.hidden_width;
  const int d = obj.input_dim;
  const double* w1 = x.data();
  const double* b1 = x.data() + h * d;
  const double* w2 = b1 + h;
  const double b2 = w2[h];
  MlpForward f;
  f.hidden.resize(h);
  double y = b2;
  for (int j = 0; j < h; ++j) {
    double z = b1[j];
    const double* row = w1 + j * d;
    for (int i = 0; i < d; ++i) z += row[i] * a[i];
    f.hidden[j] = std::tanh(z);
    y += w2[j] * f.hidden[j];
  }
  f.prediction = y;
  return f;
}

}  // namespace detail

// Per-sample loss f(x; s). Pure.
inline double loss(const Objective& obj, std::span<const double> x, const Sample& s) {
  detail::check_dims(obj, x, s);
  switch (obj.kind) {
    case ObjectiveKind::kQuadratic: {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i] - s.features[i];
        acc += r * r;
      }
      return 0.5 * acc;
    }
    case ObjectiveKind::kLogistic: {
      const double z = dot(x, s.features);
      return detail::log1p_exp(z) - s.target * z;
    }
    case ObjectiveKind::kMlp: {
      const double e = detail::mlp_forward(obj, x, s.features).prediction - s.target;
      return 0.5 * e * e;
    }
  }
  return 0.0;
}

// Analytic gradient of f at x for sample s, written into out (param_dim).
inline void grad_sample_into(const Objective& obj, std::span<const double> x, const Sample& s,
                             double* out) {
  detail::check_dims(obj, x, s);
  switch (obj.kind) {
    case ObjectiveKind::kQuadratic: {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - s.features[i];
      return;
    }
    case ObjectiveKind::kLogistic: {
      const double z = dot(x, s.features);
      // d/dx [log(1+e^z) - y z] = (sigma(z) - y) a
      const double sig = 1.0 / (1.0 + std::exp(-z));
      const double c = sig - s.target;
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * s.features[i];
      return;
    }
    case ObjectiveKind::kMlp: {
      const int h = obj.hidden_width;
      const int d = obj.input_dim;
      const auto f = detail::mlp_forward(obj, x, s.features);
      const double e = f.prediction - s.target;
      const double* w2 = x.data() + h * d + h;
      double* gw1 = out;
      double* gb1 = out + h * d;
      double* gw2 = gb1 + h;
      for (int j = 0; j < h; ++j) {
        const double t = f.hidden[j];
        const double back = e * w2[j] * (1.0 - t * t);
        gb1[j] = back;
        gw2[j] = e * t;
        double* row = gw1 + j * d;
        for (int i = 0; i < d; ++i) row[i] = back * s.features[i];
      }
      gw2[h] = e;  // b2
      return;
    }
  }
}

inline ParameterVector grad_sample(const Objective& obj, std::span<const double> x,
                                   const Sample& s) {
  ParameterVector g(x.size());
  grad_sample_into(obj, x, s, g.data());
  return g;
}

// Dense row-major (batch x dim) matrix of per-sample gradients.
struct GradMatrix {
  int batch = 0;
  int dim = 0;
  std::vector<double> data;

  void resize(int b, int d) {
    batch = b;
    dim = d;
    data.assign(static_cast<std::size_t>(b) * d, 0.0);
  }
  double* row(int i) { return data.data() + static_cast<std::size_t>(i) * dim; }
  const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * dim; }
  std::span<const double> row_span(int i) const { return {row(i), static_cast<std::size_t>(dim)}; }

  void append_rows(const GradMatrix& other) {
    dim = other.dim;
    data.insert(data.end(), other.data.begin(), other.data.end());
    batch += other.batch;
  }
};

struct BatchGrad {
  ParameterVector mean;
  GradMatrix per_sample;
};

// Mini-batch gradient: the arithmetic mean of the per-sample gradients, which
// are returned alongside it for the variance statistics.
inline BatchGrad grad_batch(const Objective& obj, std::span<const double> x,
                            std::span<const Sample> batch) {
  if (batch.empty()) throw UsageError("grad_batch: empty batch");
  BatchGrad out;
  const int d = static_cast<int>(x.size());
  out.per_sample.resize(static_cast<int>(batch.size()), d);
  out.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double* row = out.per_sample.row(static_cast<int>(i));
    grad_sample_into(obj, x, batch[i], row);
    for (int j = 0; j < d; ++j) out.mean[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (int j = 0; j < d; ++j) out.mean[j] *= inv;
  return out;
}

// Mean loss over a batch; used for held-out evaluation.
inline double mean_loss(const Objective& obj, std::span<const double> x,
                        std::span<const Sample> batch) {
  if (batch.empty()) throw UsageError("mean_loss: empty batch");
  double acc = 0.0;
  for (const Sample& s : batch) acc += loss(obj, x, s);
  return acc / static_cast<double>(batch.size());
}

}  // namespace adloco
