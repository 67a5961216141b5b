#include <catch2/catch_amalgamated.hpp>

#include "adloco/errors.hpp"
#include "adloco/objectives.hpp"
#include "adloco/rng.hpp"

#include <cmath>
#include <vector>

using namespace adloco;

TEST_CASE("quadratic loss and gradient at hand-computed points", "[objectives]") {
  const Objective obj = Objective::quadratic(2);
  const Sample s{{3.0, 4.0}, 0.0};
  const ParameterVector x{0.0, 0.0};

  REQUIRE(loss(obj, x, s) == 12.5);  // (9 + 16) / 2
  const auto g = grad_sample(obj, x, s);
  REQUIRE(g == ParameterVector{-3.0, -4.0});

  const ParameterVector y{3.0, 4.0};
  REQUIRE(loss(obj, y, s) == 0.0);
  REQUIRE(grad_sample(obj, y, s) == ParameterVector{0.0, 0.0});
}

TEST_CASE("logistic loss and gradient at hand-computed points", "[objectives]") {
  const Objective obj = Objective::logistic(2);

  // z = 0: loss is ln 2 for either label, gradient is (1/2 - y) a.
  const ParameterVector zero{0.0, 0.0};
  const Sample pos{{1.0, 2.0}, 1.0};
  const Sample neg{{1.0, 2.0}, 0.0};
  REQUIRE(loss(obj, zero, pos) == Catch::Approx(std::log(2.0)).epsilon(1e-15));
  REQUIRE(loss(obj, zero, neg) == Catch::Approx(std::log(2.0)).epsilon(1e-15));
  const auto gp = grad_sample(obj, zero, pos);
  REQUIRE(gp[0] == Catch::Approx(-0.5).epsilon(1e-15));
  REQUIRE(gp[1] == Catch::Approx(-1.0).epsilon(1e-15));

  // z = 1, y = 0: loss ln(1 + e), gradient sigmoid(1) * a.
  const ParameterVector x{1.0, 0.0};
  const Sample s{{1.0, 1.0}, 0.0};
  const double sigmoid1 = 1.0 / (1.0 + std::exp(-1.0));
  REQUIRE(loss(obj, x, s) == Catch::Approx(std::log1p(std::exp(1.0))).epsilon(1e-15));
  const auto g = grad_sample(obj, x, s);
  REQUIRE(g[0] == Catch::Approx(sigmoid1).epsilon(1e-14));
  REQUIRE(g[1] == Catch::Approx(sigmoid1).epsilon(1e-14));
}

TEST_CASE("logistic loss is finite for extreme margins", "[objectives]") {
  const Objective obj = Objective::logistic(1);
  const Sample s{{1.0}, 1.0};
  REQUIRE(std::isfinite(loss(obj, ParameterVector{800.0}, s)));
  REQUIRE(std::isfinite(loss(obj, ParameterVector{-800.0}, s)));
  // For a strongly correct prediction the loss approaches zero.
  REQUIRE(loss(obj, ParameterVector{800.0}, s) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("mlp parameter layout and finite differences", "[objectives]") {
  const Objective obj = Objective::mlp(3, 4);
  REQUIRE(obj.param_dim() == 4 * 3 + 2 * 4 + 1);

  RngStream rng = derive(2024, 0);
  ParameterVector x(obj.param_dim());
  for (double& v : x) v = 0.5 * rng.next_gaussian();
  Sample s;
  s.features = {0.3, -0.7, 1.1};
  s.target = 0.4;

  const auto g = grad_sample(obj, x, s);
  const double h = 1e-6;
  for (int i = 0; i < obj.param_dim(); ++i) {
    ParameterVector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss(obj, xp, s) - loss(obj, xm, s)) / (2.0 * h);
    REQUIRE(g[i] == Catch::Approx(fd).margin(1e-6));
  }
}

TEST_CASE("batch gradient averages the per-sample rows", "[objectives]") {
  const Objective obj = Objective::quadratic(1);
  const ParameterVector x{0.0};
  const std::vector<Sample> batch{{{1.0}, 0.0}, {{3.0}, 0.0}};

  const BatchGrad bg = grad_batch(obj, x, batch);
  REQUIRE(bg.per_sample.batch == 2);
  REQUIRE(bg.per_sample.dim == 1);
  REQUIRE(bg.per_sample.row(0)[0] == -1.0);
  REQUIRE(bg.per_sample.row(1)[0] == -3.0);
  REQUIRE(bg.mean == ParameterVector{-2.0});

  REQUIRE(mean_loss(obj, x, batch) == 2.5);  // (0.5 + 4.5) / 2
}

TEST_CASE("empty batch and dimension mismatches are rejected", "[objectives]") {
  const Objective obj = Objective::quadratic(2);
  const ParameterVector x{0.0, 0.0};
  REQUIRE_THROWS_AS(grad_batch(obj, x, std::vector<Sample>{}), UsageError);

  const Sample wrong{{1.0}, 0.0};  // 1 feature for a 2-dimensional objective
  REQUIRE_THROWS_AS(loss(obj, x, wrong), ConfigError);
  const ParameterVector short_x{0.0};
  const Sample ok{{1.0, 1.0}, 0.0};
  REQUIRE_THROWS_AS(grad_sample(obj, short_x, ok), ConfigError);
}

TEST_CASE("grad matrix append keeps rows in order", "[objectives]") {
  const Objective obj = Objective::quadratic(1);
  const ParameterVector x{0.0};
  GradMatrix all;
  all.append_rows(grad_batch(obj, x, std::vector<Sample>{{{1.0}, 0.0}}).per_sample);
  all.append_rows(grad_batch(obj, x, std::vector<Sample>{{{2.0}, 0.0}, {{5.0}, 0.0}}).per_sample);
  REQUIRE(all.batch == 3);
  REQUIRE(all.row(0)[0] == -1.0);
  REQUIRE(all.row(1)[0] == -2.0);
  REQUIRE(all.row(2)[0] == -5.0);
}
