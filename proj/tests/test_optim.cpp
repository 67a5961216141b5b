#include <catch2/catch_amalgamated.hpp>

#include "adloco/errors.hpp"
#include "adloco/optim.hpp"

#include <cmath>

using namespace adloco;

TEST_CASE("sgd inner step moves against the gradient", "[optim]") {
  InnerOptConfig cfg;
  cfg.kind = InnerOptKind::kSgd;
  cfg.lr = 0.1;
  InnerOptState state;
  ParameterVector x{1.0, 2.0};
  const ParameterVector g{0.5, -1.0};

  inner_step(cfg, state, x, g);
  REQUIRE(x[0] == Catch::Approx(0.95).epsilon(1e-15));
  REQUIRE(x[1] == Catch::Approx(2.1).epsilon(1e-15));
  REQUIRE(state.m.empty());  // sgd keeps no moments
}

TEST_CASE("adamw first step matches the closed form", "[optim]") {
  InnerOptConfig cfg;
  cfg.kind = InnerOptKind::kAdamW;
  cfg.lr = 0.1;
  InnerOptState state;
  ParameterVector x{1.0};
  const ParameterVector g{2.0};

  // After bias correction the first step is lr * g / (|g| + eps).
  inner_step(cfg, state, x, g);
  const double expected = 1.0 - 0.1 * 2.0 / (2.0 + cfg.eps);
  REQUIRE(x[0] == Catch::Approx(expected).epsilon(1e-15));
  REQUIRE(state.step == 1);
  REQUIRE(state.m[0] == Catch::Approx(0.2).epsilon(1e-15));    // (1-beta1) g
  REQUIRE(state.v[0] == Catch::Approx(0.004).epsilon(1e-12));  // (1-beta2) g^2
}

TEST_CASE("adamw weight decay is decoupled from the adaptive step", "[optim]") {
  InnerOptConfig cfg;
  cfg.kind = InnerOptKind::kAdamW;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  InnerOptState state;
  ParameterVector x{1.0};
  const ParameterVector g{2.0};

  inner_step(cfg, state, x, g);
  // Shrink to 1 - lr*wd = 0.95 first, then the same adaptive step as above.
  const double expected = 0.95 - 0.1 * 2.0 / (2.0 + cfg.eps);
  REQUIRE(x[0] == Catch::Approx(expected).epsilon(1e-15));
}

TEST_CASE("outer sgd applies the delta as a pseudo-gradient", "[optim]") {
  OuterOptConfig cfg;
  cfg.kind = OuterOptKind::kSgd;
  cfg.lr = 0.5;
  OuterOptState state;
  ParameterVector x{1.0};
  outer_step(cfg, state, x, ParameterVector{0.4});
  REQUIRE(x[0] == Catch::Approx(0.8).epsilon(1e-15));
  REQUIRE(state.momentum_buf.empty());
}

TEST_CASE("nesterov outer momentum accumulates across steps", "[optim]") {
  OuterOptConfig cfg;
  cfg.kind = OuterOptKind::kNesterov;
  cfg.lr = 0.5;
  cfg.momentum = 0.5;
  OuterOptState state;
  ParameterVector x{1.0};

  // Step 1: buf = 0.4; x -= 0.5 * (0.4 + 0.5*0.4) = 0.3.
  outer_step(cfg, state, x, ParameterVector{0.4});
  REQUIRE(x[0] == Catch::Approx(0.7).epsilon(1e-15));
  REQUIRE(state.momentum_buf[0] == Catch::Approx(0.4).epsilon(1e-15));

  // Step 2: buf = 0.5*0.4 + 0.2 = 0.4; x -= 0.5 * (0.2 + 0.5*0.4) = 0.2.
  outer_step(cfg, state, x, ParameterVector{0.2});
  REQUIRE(x[0] == Catch::Approx(0.5).epsilon(1e-15));
  REQUIRE(state.momentum_buf[0] == Catch::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("size mismatches are rejected", "[optim]") {
  InnerOptConfig icfg;
  InnerOptState istate;
  ParameterVector x{1.0, 2.0};
  REQUIRE_THROWS_AS(inner_step(icfg, istate, x, ParameterVector{1.0}), UsageError);

  OuterOptConfig ocfg;
  OuterOptState ostate;
  REQUIRE_THROWS_AS(outer_step(ocfg, ostate, x, ParameterVector{1.0}), UsageError);
}

TEST_CASE("optimizer names parse and reject unknowns", "[optim]") {
  REQUIRE(parse_inner_opt("sgd") == InnerOptKind::kSgd);
  REQUIRE(parse_inner_opt("adamw") == InnerOptKind::kAdamW);
  REQUIRE(parse_outer_opt("sgd") == OuterOptKind::kSgd);
  REQUIRE(parse_outer_opt("nesterov") == OuterOptKind::kNesterov);
  REQUIRE_THROWS_AS(parse_inner_opt("adam"), ConfigError);
  REQUIRE_THROWS_AS(parse_outer_opt("momentum"), ConfigError);
}
