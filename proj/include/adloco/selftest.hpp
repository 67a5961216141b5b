// Self-contained oracle and invariant checks, runnable from the CLI.
//
// Every check re-derives its expected values through an independent route:
// finite differences for gradients, from-scratch statistics for the batch
// tests, brute-force selection for merging, and closed-form sequences for the
// growth fits. The engine checks compare whole runs against the identities
// that must hold by construction (baseline reductions, federated averaging,
// determinism under parallelism).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "adloco/batch_scheduler.hpp"
#include "adloco/engine.hpp"
#include "adloco/experiment.hpp"
#include "adloco/objectives.hpp"
#include "adloco/rng.hpp"
#include "adloco/trainer_pool.hpp"

namespace adloco::selftest {

struct CheckResult {
  std::string name;
  bool pass = true;
  std::string detail;
};

namespace detail {

inline void fail(CheckResult& r, const std::string& msg) {
  r.pass = false;
  if (!r.detail.empty()) r.detail += "; ";
  r.detail += msg;
}

// Central finite-difference gradient, the oracle for the analytic formulas.
inline ParameterVector finite_diff_grad(const Objective& obj, const ParameterVector& x,
                                        const Sample& s, double h) {
  ParameterVector g(x.size());
  ParameterVector xp = x, xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (loss(obj, xp, s) - loss(obj, xm, s)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

inline double rel_l2_error(const ParameterVector& a, const ParameterVector& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// From-scratch recomputations of the three batch tests, structured around
// per-coordinate accumulations rather than the library's row loops.
inline long oracle_ceil_clamp(double v, long cap) {
  if (!(v > 0.0)) return 1;
  if (v >= static_cast<double>(cap)) return cap;
  long r = static_cast<long>(std::ceil(v));
  if (r < 1) r = 1;
  if (r > cap) r = cap;
  return r;
}

struct OracleStats {
  std::vector<double> mean;
  double gnsq = 0.0;
  double var_trace = 0.0;
  std::vector<double> ips;
};

inline OracleStats oracle_stats(const std::vector<std::vector<double>>& rows) {
  const std::size_t b = rows.size();
  const std::size_t d = rows[0].size();
  OracleStats st;
  st.mean.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < b; ++i) st.mean[j] += rows[i][j];
    st.mean[j] /= static_cast<double>(b);
  }
  for (std::size_t j = 0; j < d; ++j) st.gnsq += st.mean[j] * st.mean[j];
  if (b >= 2) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t i = 0; i < b; ++i) {
        const double r = rows[i][j] - st.mean[j];
        acc += r * r;
      }
    st.var_trace = acc / static_cast<double>(b - 1);
  }
  st.ips.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    double ip = 0.0;
    for (std::size_t j = 0; j < d; ++j) ip += rows[i][j] * st.mean[j];
    st.ips[i] = ip;
  }
  return st;
}

inline long oracle_norm(const std::vector<std::vector<double>>& rows, double eta, long cap) {
  const OracleStats st = oracle_stats(rows);
  if (st.gnsq < 1e-24) return cap;
  return oracle_ceil_clamp(st.var_trace / (eta * eta * st.gnsq), cap);
}

inline long oracle_inner_product(const std::vector<std::vector<double>>& rows, double theta,
                                 long cap) {
  const OracleStats st = oracle_stats(rows);
  if (st.gnsq < 1e-24) return cap;
  const std::size_t b = st.ips.size();
  double var = 0.0;
  if (b >= 2) {
    double m = 0.0;
    for (double v : st.ips) m += v;
    m /= static_cast<double>(b);
    for (double v : st.ips) var += (v - m) * (v - m);
    var /= static_cast<double>(b - 1);
  }
  return oracle_ceil_clamp(var / (theta * theta * st.gnsq * st.gnsq), cap);
}

inline long oracle_augmented(const std::vector<std::vector<double>>& rows, long base, double nu,
                             long cap) {
  const OracleStats st = oracle_stats(rows);
  if (st.gnsq < 1e-24) return cap;
  const std::size_t b = rows.size();
  const std::size_t d = rows[0].size();
  long extra = 1;
  if (b >= 2) {
    std::vector<std::vector<double>> res(b, std::vector<double>(d));
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j)
        res[i][j] = rows[i][j] - (st.ips[i] / st.gnsq) * st.mean[j];
    std::vector<double> rbar(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < b; ++i) rbar[j] += res[i][j];
      rbar[j] /= static_cast<double>(b);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double r = res[i][j] - rbar[j];
        acc += r * r;
      }
    extra = oracle_ceil_clamp((acc / static_cast<double>(b - 1)) / (nu * nu * st.gnsq), cap);
  }
  long out = std::max(base, extra);
  if (out > cap) out = cap;
  return out < 1 ? 1 : out;
}

inline GradMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
  GradMatrix m;
  m.resize(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) m.row(static_cast<int>(i))[j] = rows[i][j];
  return m;
}

}  // namespace detail

// Analytic gradients against central finite differences, 100 random points
// per loss family.
inline CheckResult check_gradients() {
  CheckResult r{"gradient-finite-difference", true, ""};
  RngStream rng = derive(0x67726164u, 0);
  const struct {
    Objective obj;
    double x_scale;
  } cases[] = {
      {Objective::quadratic(5), 1.0},
      {Objective::logistic(6), 1.0},
      {Objective::mlp(4, 5), 0.6},
  };
  double worst = 0.0;
  for (const auto& c : cases) {
    for (int trial = 0; trial < 100; ++trial) {
      ParameterVector x(c.obj.param_dim());
      for (double& v : x) v = c.x_scale * rng.next_gaussian();
      Sample s;
      s.features.resize(c.obj.input_dim);
      for (double& v : s.features) v = rng.next_gaussian();
      s.target = c.obj.kind == ObjectiveKind::kLogistic ? (rng.next_double() < 0.5 ? 0.0 : 1.0)
                                                        : rng.next_gaussian();
      const ParameterVector ga = grad_sample(c.obj, x, s);
      const ParameterVector gf = detail::finite_diff_grad(c.obj, x, s, 1e-5);
      worst = std::max(worst, detail::rel_l2_error(ga, gf));
    }
  }
  std::ostringstream os;
  os << "worst relative L2 error " << worst;
  r.detail = os.str();
  if (!(worst <= 1e-6)) detail::fail(r, "tolerance 1e-6 exceeded");
  return r;
}

// The three batch tests against from-scratch recomputations on random small
// batches, exact integer agreement.
inline CheckResult check_scheduler_oracle() {
  CheckResult r{"batch-test-oracle", true, ""};
  RngStream rng = derive(0x73636865u, 0);
  const long cap = kDefaultBatchCap;
  int mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int b = 2 + static_cast<int>(rng.next_below(7));  // 2..8
    const int d = 1 + static_cast<int>(rng.next_below(4));  // 1..4
    std::vector<std::vector<double>> rows(b, std::vector<double>(d));
    for (auto& row : rows)
      for (double& v : row) v = rng.next_gaussian();
    const GradMatrix m = detail::to_matrix(rows);
    const GradientStats st = compute_stats(m);

    const double eta = 0.2 + rng.next_double();
    const double theta = 0.01 + rng.next_double();
    const double nu = 0.1 + rng.next_double();

    const long norm_lib = norm_test_batch(st, eta, cap);
    const long norm_orc = detail::oracle_norm(rows, eta, cap);
    const long ip_lib = inner_product_test_batch(st, theta, cap);
    const long ip_orc = detail::oracle_inner_product(rows, theta, cap);
    const long aug_lib = augmented_test_batch(st, m, ip_lib, nu, cap);
    const long aug_orc = detail::oracle_augmented(rows, ip_orc, nu, cap);
    if (norm_lib != norm_orc || ip_lib != ip_orc || aug_lib != aug_orc) {
      ++mismatches;
      std::ostringstream os;
      os << "trial " << trial << ": norm " << norm_lib << "/" << norm_orc << " ip " << ip_lib
         << "/" << ip_orc << " aug " << aug_lib << "/" << aug_orc;
      detail::fail(r, os.str());
    }
  }
  // Vanished mean gradient requests the cap in all tests.
  std::vector<std::vector<double>> zero(3, std::vector<double>(2, 0.0));
  const GradientStats zst = compute_stats(detail::to_matrix(zero));
  if (norm_test_batch(zst, 0.8, cap) != cap || inner_product_test_batch(zst, 0.01, cap) != cap ||
      augmented_test_batch(zst, detail::to_matrix(zero), 1, 0.3, cap) != cap)
    detail::fail(r, "vanished-gradient case did not return the cap");
  if (r.pass) r.detail = "20 random batches x 3 tests, exact agreement";
  return r;
}

// Weighted merge identity, pool contraction, and representative selection on
// random pools.
inline CheckResult check_merge_algebra() {
  CheckResult r{"merge-algebra", true, ""};
  RngStream rng = derive(0x6d657267u, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng.next_below(5));  // 2..6
    const int d = 1 + static_cast<int>(rng.next_below(5));  // 1..5
    PoolState pool;
    pool.trainers.resize(k);
    for (int i = 0; i < k; ++i) {
      pool.trainers[i].id = i;
      pool.trainers[i].requested_batch = 1 + static_cast<long>(rng.next_below(16));
      pool.trainers[i].params.resize(d);
      for (double& v : pool.trainers[i].params) v = 2.0 * rng.next_double() - 1.0;
    }
    // Random merge set of size 2..k.
    const int set_size = 2 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k - 1)));
    std::vector<int> ids(k);
    for (int i = 0; i < k; ++i) ids[i] = i;
    for (int i = 0; i < set_size; ++i) {
      const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k - i)));
      std::swap(ids[i], ids[j]);
    }
    ids.resize(set_size);

    // Independent expectations.
    std::vector<double> weighted_sum(d, 0.0);
    double weight_total = 0.0;
    int expect_rep = -1;
    long best_req = -1;
    for (int id : ids) {
      const auto& t = pool.trainers[id];
      weight_total += static_cast<double>(t.requested_batch);
      for (int j = 0; j < d; ++j)
        weighted_sum[j] += static_cast<double>(t.requested_batch) * t.params[j];
      if (t.requested_batch > best_req || (t.requested_batch == best_req && id < expect_rep)) {
        best_req = t.requested_batch;
        expect_rep = id;
      }
    }

    const int alive_before = pool.alive_count();
    const MergeEvent ev = do_merge(pool, ids);
    const TrainerState* rep = pool.find(ev.representative);

    if (ev.representative != expect_rep) detail::fail(r, "representative selection mismatch");
    if (pool.alive_count() != alive_before - set_size + 1)
      detail::fail(r, "pool did not shrink by |set|-1");
    if (rep == nullptr || !rep->alive || rep->requested_batch != best_req) {
      detail::fail(r, "representative state not preserved");
      continue;
    }
    for (int j = 0; j < d; ++j) {
      const double lhs = weighted_sum[j];
      const double rhs = weight_total * rep->params[j];
      if (std::abs(lhs - rhs) > 1e-12) detail::fail(r, "weighted-average identity violated");
    }
    for (int id : ids)
      if (id != ev.representative && pool.find(id)->alive)
        detail::fail(r, "merged trainer still alive");
  }
  if (r.pass) r.detail = "50 random merges, identity within 1e-12";
  return r;
}

// The three accumulation-planning cases, exact.
inline CheckResult check_switch_table() {
  CheckResult r{"switch-mode-table", true, ""};
  const auto p1 = plan_batch(5, 4, 2);
  if (p1.use_accumulation || p1.micro_batch != 4 || p1.accum_steps != 1)
    detail::fail(r, "requested 5, b_max 4: expected single micro-batch of 4");
  const auto p2 = plan_batch(9, 4, 2);
  if (!p2.use_accumulation || p2.accum_steps != 3 || p2.micro_batch != 4)
    detail::fail(r, "requested 9, b_max 4: expected 3 accumulation steps of 4");
  const auto p3 = plan_batch(8, 4, 2);
  if (p3.use_accumulation || p3.micro_batch != 4 || p3.accum_steps != 1)
    detail::fail(r, "requested 8 = n*b_max boundary: expected no accumulation");
  if (r.pass) r.detail = "5/4/2, 9/4/2, 8/4/2 all exact";
  return r;
}

namespace detail {

inline RunConfig reduction_base(std::uint64_t seed) {
  RunConfig cfg;
  cfg.algorithm = Algorithm::kAdLoCo;
  cfg.outer_steps = 8;
  cfg.inner_steps = 1;
  cfg.workers_per_trainer = 1;
  cfg.num_trainers = 1;
  cfg.initial_batch = 4;
  cfg.adaptive_batching = false;
  cfg.trainer_merging = false;
  cfg.switch_mode = false;
  cfg.inner.kind = InnerOptKind::kSgd;
  cfg.inner.lr = 0.05;
  cfg.outer.kind = OuterOptKind::kSgd;
  cfg.outer.lr = 1.0;
  cfg.objective = ObjectiveKind::kLogistic;
  cfg.recipe = DataRecipe::kTwoCluster;
  cfg.dim = 6;
  cfg.dataset_size = 512;
  cfg.eval_batch = 64;
  cfg.init_scale = 0.5;
  cfg.seed = seed;
  return cfg;
}

}  // namespace detail

// The baseline reduction identities, bit-exact on frozen seeds.
inline CheckResult check_reduction_identities(const std::vector<std::uint64_t>& seeds = {3, 7,
                                                                                         11}) {
  CheckResult r{"baseline-reductions", true, ""};
  for (const std::uint64_t seed : seeds) {
    // Single trainer, single worker, one inner step, unit outer rate: the
    // outer update telescopes to the plain SGD trajectory.
    RunConfig ad = detail::reduction_base(seed);
    RunConfig sg = ad;
    sg.algorithm = Algorithm::kSgd;
    const RunMetrics m_ad = run(ad);
    const RunMetrics m_sg = run(sg);
    if (m_ad.final_params != m_sg.final_params)
      detail::fail(r, "adloco(k=1,M=1,H=1,lr_outer=1) differs from sgd, seed " +
                          std::to_string(seed));
    if (metrics_to_csv(m_ad) != metrics_to_csv(m_sg))
      detail::fail(r, "adloco/sgd reduction: csv differs, seed " + std::to_string(seed));

    // Fixed-batch baseline is the adaptive loop with features off.
    RunConfig di = detail::reduction_base(seed);
    di.num_trainers = 3;
    di.workers_per_trainer = 2;
    di.inner_steps = 4;
    di.outer_steps = 5;
    di.outer.lr = 0.5;
    RunConfig ad2 = di;
    di.algorithm = Algorithm::kDiLoCo;
    ad2.algorithm = Algorithm::kAdLoCo;
    ad2.adaptive_batching = false;
    ad2.trainer_merging = false;
    ad2.switch_mode = false;
    if (metrics_to_csv(run(di)) != metrics_to_csv(run(ad2)))
      detail::fail(r, "diloco differs from feature-off adloco, seed " + std::to_string(seed));

    // LocalSGD with one worker is plain SGD.
    RunConfig ls = detail::reduction_base(seed);
    ls.algorithm = Algorithm::kLocalSgd;
    ls.workers_per_trainer = 1;
    ls.inner_steps = 5;
    RunConfig sg2 = ls;
    sg2.algorithm = Algorithm::kSgd;
    if (metrics_to_csv(run(ls)) != metrics_to_csv(run(sg2)))
      detail::fail(r, "localsgd(M=1) differs from sgd, seed " + std::to_string(seed));

    // LocalSGD averaging replaces every worker model with the same average.
    RunConfig lw = detail::reduction_base(seed);
    lw.algorithm = Algorithm::kLocalSgd;
    lw.workers_per_trainer = 3;
    lw.inner_steps = 4;
    lw.outer_steps = 3;
    lw.record_workers = true;
    const RunMetrics m_lw = run(lw);
    if (m_lw.last_worker_finals.size() != 1 || m_lw.last_post_outer.size() != 1) {
      detail::fail(r, "localsgd did not record workers");
    } else {
      const auto& finals = m_lw.last_worker_finals[0];
      ParameterVector avg(finals[0].size(), 0.0);
      for (const auto& w : finals)
        for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += w[j];
      for (std::size_t j = 0; j < avg.size(); ++j) avg[j] *= 1.0 / static_cast<double>(finals.size());
      if (avg != m_lw.last_post_outer[0] || m_lw.final_params != m_lw.last_post_outer[0])
        detail::fail(r, "localsgd post-averaging model mismatch, seed " + std::to_string(seed));
    }
  }
  if (r.pass) r.detail = "all reductions bit-exact on " + std::to_string(seeds.size()) + " seeds";
  return r;
}

// Outer SGD at unit rate equals federated averaging: synthetic random worker
// sets, plus whole-engine runs with recorded workers.
inline CheckResult check_federated_identity() {
  CheckResult r{"federated-averaging-identity", true, ""};
  RngStream rng = derive(0x66656461u, 0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 1 + static_cast<int>(rng.next_below(8));
    const int m = 1 + static_cast<int>(rng.next_below(6));
    ParameterVector x_prev(d);
    for (double& v : x_prev) v = rng.next_gaussian();
    std::vector<ParameterVector> workers(m, ParameterVector(d));
    for (auto& w : workers)
      for (double& v : w) v = rng.next_gaussian();

    ParameterVector delta(d, 0.0);
    for (const auto& w : workers)
      for (int j = 0; j < d; ++j) delta[j] += x_prev[j] - w[j];
    for (int j = 0; j < d; ++j) delta[j] *= 1.0 / static_cast<double>(m);

    OuterOptConfig cfg;
    cfg.kind = OuterOptKind::kSgd;
    cfg.lr = 1.0;
    OuterOptState st;
    ParameterVector x = x_prev;
    outer_step(cfg, st, x, delta);

    for (int j = 0; j < d; ++j) {
      double mean = 0.0;
      for (const auto& w : workers) mean += w[j];
      mean /= static_cast<double>(m);
      worst = std::max(worst, std::abs(x[j] - mean));
    }
  }
  if (!(worst <= 1e-12)) detail::fail(r, "synthetic identity exceeded 1e-12");

  for (const std::uint64_t seed : {21ull, 22ull}) {
    RunConfig cfg = detail::reduction_base(seed);
    cfg.num_trainers = 2;
    cfg.workers_per_trainer = 3;
    cfg.inner_steps = 2;
    cfg.outer_steps = 3;
    cfg.outer.lr = 1.0;
    cfg.adaptive_batching = true;
    cfg.record_workers = true;
    const RunMetrics m = run(cfg);
    if (m.last_post_outer.size() != m.last_worker_finals.size() || m.last_post_outer.empty()) {
      detail::fail(r, "engine did not record workers");
      continue;
    }
    for (std::size_t i = 0; i < m.last_post_outer.size(); ++i) {
      const auto& finals = m.last_worker_finals[i];
      for (std::size_t j = 0; j < m.last_post_outer[i].size(); ++j) {
        double mean = 0.0;
        for (const auto& w : finals) mean += w[j];
        mean /= static_cast<double>(finals.size());
        worst = std::max(worst, std::abs(m.last_post_outer[i][j] - mean));
      }
    }
  }
  std::ostringstream os;
  os << "worst deviation " << worst;
  if (!(worst <= 1e-12)) detail::fail(r, "engine identity exceeded 1e-12");
  if (r.pass) r.detail = os.str();
  return r;
}

// Closed-form oracles for the growth fit: harmonic numbers are logarithmic, a
// ramp is linear, a constant has no explainable variance.
inline CheckResult check_fit_oracle() {
  CheckResult r{"growth-fit-oracle", true, ""};
  std::vector<double> harmonic(200);
  double h = 0.0;
  for (int n = 1; n <= 200; ++n) {
    h += 1.0 / n;
    harmonic[n - 1] = h;
  }
  const LogFit hf = fit_log_growth(harmonic);
  if (!(hf.r2_log > 0.999)) detail::fail(r, "harmonic r2_log <= 0.999");
  if (!(hf.r2_log >= hf.r2_lin)) detail::fail(r, "harmonic series not classified logarithmic");

  std::vector<double> ramp(50);
  for (int i = 0; i < 50; ++i) ramp[i] = 3.0 * (i + 1) + 2.0;
  const LogFit rf = fit_log_growth(ramp);
  if (!(rf.r2_lin > 1.0 - 1e-12)) detail::fail(r, "exact ramp r2_linear != 1");
  if (!(rf.r2_log < rf.r2_lin)) detail::fail(r, "ramp not classified linear");

  const std::vector<double> flat(20, 5.0);
  const LogFit ff = fit_log_growth(flat);
  if (ff.r2_log != 0.0 || ff.r2_lin != 0.0) detail::fail(r, "constant sequence r2 not 0");
  if (r.pass) {
    std::ostringstream os;
    os << "harmonic r2_log " << hf.r2_log << ", ramp r2_linear " << rf.r2_lin;
    r.detail = os.str();
  }
  return r;
}

// Scale and range properties of the tests and the planner.
inline CheckResult check_scheduler_properties() {
  CheckResult r{"scheduler-properties", true, ""};
  RngStream rng = derive(0x70726f70u, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int b = 2 + static_cast<int>(rng.next_below(7));
    const int d = 1 + static_cast<int>(rng.next_below(4));
    GradMatrix m;
    m.resize(b, d);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < d; ++j) m.row(i)[j] = rng.next_gaussian();
    const GradientStats st = compute_stats(m);
    const double eta = 0.2 + rng.next_double();

    // Halving eta cannot shrink the requested batch, and the pre-ceiling
    // value scales exactly by 4 (eta/2 and the squares are exact in binary).
    const long full = norm_test_batch(st, eta);
    const long half = norm_test_batch(st, eta / 2.0);
    if (half < full) detail::fail(r, "norm test not monotone in 1/eta");
    if (st.grad_norm_sq >= 1e-24) {
      const double v1 = st.variance_trace / (eta * eta * st.grad_norm_sq);
      const double v2 =
          st.variance_trace / ((eta / 2.0) * (eta / 2.0) * st.grad_norm_sq);
      if (v2 != 4.0 * v1) detail::fail(r, "pre-ceiling eta scaling not exactly 4x");
    }

    // All tests stay inside [1, cap]; the augmented test dominates its base.
    const long cap = 64;
    const long nt = norm_test_batch(st, eta, cap);
    const long ip = inner_product_test_batch(st, 0.01 + rng.next_double(), cap);
    const long aug = augmented_test_batch(st, m, ip, 0.1 + rng.next_double(), cap);
    if (nt < 1 || nt > cap || ip < 1 || ip > cap || aug < 1 || aug > cap)
      detail::fail(r, "test output escaped [1, cap]");
    if (aug < ip) detail::fail(r, "augmented test below its base");
  }

  // Degenerate single-sample stats: variance undefined, reported as zero.
  GradMatrix one;
  one.resize(1, 3);
  one.row(0)[0] = 5.0;
  const GradientStats st1 = compute_stats(one);
  if (!st1.degenerate || st1.variance_trace != 0.0)
    detail::fail(r, "single-sample stats not flagged degenerate");
  if (norm_test_batch(st1, 0.8) != 1) detail::fail(r, "degenerate norm test != 1");

  for (int trial = 0; trial < 100; ++trial) {
    const long req = 1 + static_cast<long>(rng.next_below(400));
    const long bmax = 1 + static_cast<long>(rng.next_below(64));
    const long n = 1 + static_cast<long>(rng.next_below(4));
    const AccumulationPlan p = plan_batch(req, bmax, n);
    if (p.micro_batch > bmax) detail::fail(r, "micro-batch exceeds b_max");
    if (p.use_accumulation != (req > n * bmax)) detail::fail(r, "switch threshold not strict");
    if (p.use_accumulation && p.total() < req)
      detail::fail(r, "accumulation plan undershoots request");
    if (!p.use_accumulation && p.accum_steps != 1) detail::fail(r, "single-pass plan accum != 1");
  }
  if (r.pass) r.detail = "scaling, range, and planner properties hold";
  return r;
}

// check_merge edge cases and size contract.
inline CheckResult check_pool_properties() {
  CheckResult r{"merge-selection-properties", true, ""};
  PoolState pool;
  pool.trainers.resize(4);
  const long reqs[] = {5, 2, 9, 2};
  for (int i = 0; i < 4; ++i) {
    pool.trainers[i].id = i + 1;
    pool.trainers[i].requested_batch = reqs[i];
  }
  if (!check_merge(pool, 0).empty()) detail::fail(r, "w=0 must select nothing");
  if (!check_merge(pool, 5).empty()) detail::fail(r, "w > alive must select nothing");
  const auto two = check_merge(pool, 2);
  if (two != std::vector<int>{2, 4})
    detail::fail(r, "smallest-batch selection with id tie-break failed");
  for (int w = 0; w <= 5; ++w) {
    const auto s = check_merge(pool, w);
    if (!(s.empty() || static_cast<int>(s.size()) == w))
      detail::fail(r, "selection size not in {0, w}");
  }
  PoolState single;
  single.trainers.resize(1);
  single.trainers[0].id = 0;
  if (!check_merge(single, 1).empty()) detail::fail(r, "k=1 pool must never merge");
  if (r.pass) r.detail = "selection contract holds";
  return r;
}

// Byte-identical reruns, with and without worker parallelism.
inline CheckResult check_determinism() {
  CheckResult r{"determinism", true, ""};
  RunConfig cfg;
  cfg.algorithm = Algorithm::kAdLoCo;
  cfg.outer_steps = 4;
  cfg.inner_steps = 3;
  cfg.num_trainers = 3;
  cfg.workers_per_trainer = 2;
  cfg.initial_batch = 2;
  cfg.b_max = 8;
  cfg.merge_w = 2;
  cfg.merge_frequency = 2;
  cfg.inner.lr = 0.05;
  cfg.objective = ObjectiveKind::kLogistic;
  cfg.recipe = DataRecipe::kTwoCluster;
  cfg.dim = 5;
  cfg.dataset_size = 256;
  cfg.eval_batch = 32;
  cfg.seed = 17;
  cfg.parallel = true;

  const std::string a = metrics_to_csv(run(cfg));
  const std::string b = metrics_to_csv(run(cfg));
  if (a != b) detail::fail(r, "parallel rerun differs");
  RunConfig seq = cfg;
  seq.parallel = false;
  if (metrics_to_csv(run(seq)) != a) detail::fail(r, "parallel and sequential runs differ");

  RunConfig ls = cfg;
  ls.algorithm = Algorithm::kLocalSgd;
  ls.workers_per_trainer = 3;
  if (metrics_to_csv(run(ls)) != metrics_to_csv(run(ls))) detail::fail(r, "localsgd rerun differs");
  if (r.pass) r.detail = "csv bytes identical across reruns and thread modes";
  return r;
}

inline std::vector<CheckResult> run_all() {
  return {
      check_gradients(),        check_scheduler_oracle(),    check_merge_algebra(),
      check_switch_table(),     check_reduction_identities(), check_federated_identity(),
      check_fit_oracle(),       check_scheduler_properties(), check_pool_properties(),
      check_determinism(),
  };
}

}  // namespace adloco::selftest
