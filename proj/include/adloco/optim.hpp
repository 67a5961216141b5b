// Inner (per-worker) and outer (per-sync) optimizers.
//
// The inner optimizer consumes stochastic mini-batch gradients; the outer
// optimizer consumes the averaged parameter delta produced at a sync barrier
// and treats it as a pseudo-gradient. Both keep their state in plain structs
// so trainers can be copied, merged, and inspected freely.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "adloco/errors.hpp"
#include "adloco/vec.hpp"

namespace adloco {

enum class InnerOptKind { kSgd, kAdamW };
enum class OuterOptKind { kSgd, kNesterov };

inline InnerOptKind parse_inner_opt(const std::string& name) {
  if (name == "sgd") return InnerOptKind::kSgd;
  if (name == "adamw") return InnerOptKind::kAdamW;
  throw ConfigError("unknown inner optimizer '" + name + "'");
}

inline OuterOptKind parse_outer_opt(const std::string& name) {
  if (name == "sgd") return OuterOptKind::kSgd;
  if (name == "nesterov") return OuterOptKind::kNesterov;
  throw ConfigError("unknown outer optimizer '" + name + "'");
}

struct InnerOptConfig {
  InnerOptKind kind = InnerOptKind::kSgd;
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

// Per-parameter first/second moment state (AdamW); empty for plain SGD.
struct InnerOptState {
  ParameterVector m;
  ParameterVector v;
  long step = 0;

  void reset(std::size_t dim, InnerOptKind kind) {
    step = 0;
    if (kind == InnerOptKind::kAdamW) {
      m.assign(dim, 0.0);
      v.assign(dim, 0.0);
    } else {
      m.clear();
      v.clear();
    }
  }
};

// One inner update x <- x - lr * direction(g). Mutates x and state in place.
inline void inner_step(const InnerOptConfig& cfg, InnerOptState& state,
                       std::span<double> x, std::span<const double> g) {
  if (x.size() != g.size()) throw UsageError("inner_step: parameter/gradient size mismatch");
  switch (cfg.kind) {
    case InnerOptKind::kSgd: {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= cfg.lr * g[i];
      return;
    }
    case InnerOptKind::kAdamW: {
      if (state.m.size() != x.size()) state.reset(x.size(), cfg.kind);
      ++state.step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
      for (std::size_t i = 0; i < x.size(); ++i) {
        // Decoupled weight decay: shrink first, then the adaptive step.
        x[i] -= cfg.lr * cfg.weight_decay * x[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        x[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
      return;
    }
  }
}

struct OuterOptConfig {
  OuterOptKind kind = OuterOptKind::kSgd;
  double lr = 0.5;
  double momentum = 0.9;  // Nesterov only
};

struct OuterOptState {
  ParameterVector momentum_buf;
};

// One outer update from the averaged delta. Plain SGD moves against the delta
// directly; Nesterov momentum folds the delta into a velocity buffer first
// and applies the lookahead combination.
inline void outer_step(const OuterOptConfig& cfg, OuterOptState& state,
                       std::span<double> x, std::span<const double> delta) {
  if (x.size() != delta.size()) throw UsageError("outer_step: parameter/delta size mismatch");
  switch (cfg.kind) {
    case OuterOptKind::kSgd: {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= cfg.lr * delta[i];
      return;
    }
    case OuterOptKind::kNesterov: {
      if (state.momentum_buf.size() != x.size()) state.momentum_buf.assign(x.size(), 0.0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        state.momentum_buf[i] = cfg.momentum * state.momentum_buf[i] + delta[i];
        x[i] -= cfg.lr * (delta[i] + cfg.momentum * state.momentum_buf[i]);
      }
      return;
    }
  }
}

}  // namespace adloco
