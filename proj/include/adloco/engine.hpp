// Simulation engine: the adaptive inner/outer training loop, the LocalSGD and
// single-stream SGD baselines, communication accounting, and the growth-curve
// fit used by the scaling checks.
//
// Structure of one outer step of the adaptive loop:
//   1. at merge boundaries, fold the weakest trainers into a representative;
//   2. plan each trainer's (micro-batch, accumulation) from its requested batch;
//   3. every worker copies its trainer's model and runs H inner steps;
//   4. per-sample gradients of the final inner batch drive the batch test,
//      producing the next requested batch;
//   5. the averaged worker delta feeds the outer optimizer;
//   6. the sync is charged b_max/b per alive trainer and metrics are appended.
//
// Determinism contract: given the same config (seed included), results are
// bit-identical regardless of whether workers run in parallel, because every
// worker owns a private RNG stream and all reductions happen in a fixed order
// on the coordinating thread.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <string>
#include <vector>

#include "adloco/batch_scheduler.hpp"
#include "adloco/datagen.hpp"
#include "adloco/errors.hpp"
#include "adloco/objectives.hpp"
#include "adloco/optim.hpp"
#include "adloco/trainer_pool.hpp"
#include "adloco/vec.hpp"

namespace adloco {

enum class Algorithm { kAdLoCo, kDiLoCo, kLocalSgd, kSgd };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kAdLoCo: return "adloco";
    case Algorithm::kDiLoCo: return "diloco";
    case Algorithm::kLocalSgd: return "localsgd";
    case Algorithm::kSgd: return "sgd";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& name) {
  if (name == "adloco") return Algorithm::kAdLoCo;
  if (name == "diloco") return Algorithm::kDiLoCo;
  if (name == "localsgd") return Algorithm::kLocalSgd;
  if (name == "sgd") return Algorithm::kSgd;
  throw ConfigError("unknown algorithm '" + name + "'");
}

struct RunConfig {
  Algorithm algorithm = Algorithm::kAdLoCo;
  long outer_steps = 20;        // T
  long inner_steps = 200;       // H
  int workers_per_trainer = 1;  // M
  int num_trainers = 4;         // k

  long initial_batch = 1;
  long b_max = 64;
  int n_switch = 2;
  int merge_w = 1;
  int merge_frequency = 3;

  InnerOptConfig inner;         // lr_inner default 2e-5
  OuterOptConfig outer;         // lr_outer default 0.5
  BatchTestConfig test;         // eta 0.8, theta 0.01, nu 0.3

  bool adaptive_batching = true;
  bool trainer_merging = true;
  bool switch_mode = true;
  bool parallel = true;
  bool record_workers = false;  // keep final-step worker models for checks

  ObjectiveKind objective = ObjectiveKind::kQuadratic;
  DataRecipe recipe = DataRecipe::kGaussianQuadratic;
  int dim = 8;
  int mlp_hidden = 8;
  int dataset_size = 4096;
  double shard_fraction = 0.0;  // 0 = automatic 1/k
  double init_scale = 0.5;
  int eval_batch = 256;
  std::uint64_t seed = 1;
};

inline void validate(const RunConfig& cfg) {
  if (cfg.outer_steps < 1) throw ConfigError("outer_steps must be >= 1");
  if (cfg.inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
  if (cfg.workers_per_trainer < 1) throw ConfigError("workers_per_trainer must be >= 1");
  if (cfg.num_trainers < 1) throw ConfigError("num_trainers must be >= 1");
  if (cfg.initial_batch < 1) throw ConfigError("initial_batch must be >= 1");
  if (cfg.b_max < 1) throw ConfigError("b_max must be >= 1");
  if (cfg.n_switch < 1) throw ConfigError("n_switch must be >= 1");
  if (cfg.merge_w < 0) throw ConfigError("merge_w must be >= 0");
  if (cfg.merge_frequency < 1) throw ConfigError("merge_frequency must be >= 1");
  if (!(cfg.inner.lr > 0.0)) throw ConfigError("lr_inner must be positive");
  if (!(cfg.outer.lr > 0.0)) throw ConfigError("lr_outer must be positive");
  if (!(cfg.test.eta > 0.0)) throw ConfigError("eta must be positive");
  if (!(cfg.test.theta > 0.0)) throw ConfigError("theta must be positive");
  if (!(cfg.test.nu > 0.0)) throw ConfigError("nu must be positive");
  if (cfg.test.cap < 1) throw ConfigError("batch_cap must be >= 1");
  if (cfg.dim < 1) throw ConfigError("dim must be >= 1");
  if (cfg.mlp_hidden < 1) throw ConfigError("mlp_hidden must be >= 1");
  if (cfg.dataset_size < 1) throw ConfigError("dataset_size must be >= 1");
  if (cfg.shard_fraction < 0.0 || cfg.shard_fraction > 1.0)
    throw ConfigError("shard_fraction must lie in [0, 1] (0 = automatic)");
  if (cfg.init_scale < 0.0) throw ConfigError("init_scale must be >= 0");
  if (cfg.eval_batch < 1) throw ConfigError("eval_batch must be >= 1");
  if (cfg.inner.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

// One CSV row: the state of one trainer at one outer step. comm_step and
// comm_cum are step-level values, repeated on every row of the step.
struct StepRow {
  long step = 0;
  int trainer_id = 0;
  double loss = 0.0;
  long requested_batch = 1;
  int accum_flag = 0;
  int alive_trainers = 0;
  double comm_step = 0.0;
  double comm_cum = 0.0;
};

struct RunMetrics {
  std::vector<StepRow> rows;
  std::vector<MergeEvent> merges;
  std::vector<double> comm_curve;      // cumulative C after sync t = 1..T
  std::vector<double> mean_requested;  // per step (incl. t=0), mean over alive
  std::vector<double> min_loss;        // per step (incl. t=0), best alive trainer
  std::vector<double> wall_ms;         // per step; not part of the CSV schema
  double total_comm = 0.0;
  double final_loss = std::numeric_limits<double>::infinity();
  long inner_updates_per_worker = 0;
  ParameterVector final_params;  // best alive trainer's model at the end

  // Filled only when record_workers is set: per alive trainer at the final
  // outer step, the pre-outer model, each worker's final inner model, and the
  // model after the outer update (for LocalSGD, after averaging).
  std::vector<ParameterVector> last_pre_outer;
  std::vector<std::vector<ParameterVector>> last_worker_finals;
  std::vector<ParameterVector> last_post_outer;
};

namespace detail {

inline Objective make_objective(const RunConfig& cfg) {
  switch (cfg.objective) {
    case ObjectiveKind::kQuadratic: return Objective::quadratic(cfg.dim);
    case ObjectiveKind::kLogistic: return Objective::logistic(cfg.dim);
    case ObjectiveKind::kMlp: return Objective::mlp(cfg.dim, cfg.mlp_hidden);
  }
  throw ConfigError("bad objective kind");
}

struct WorkerOutput {
  ParameterVector params;
  GradMatrix stats_rows;  // final-step per-sample gradients (stats worker only)
};

// H inner steps from x0 on the worker's own shard stream. When the plan
// accumulates, each inner step averages accum_steps micro-batch means into one
// update. The stats worker keeps the per-sample gradients of its final inner
// batch; a single-sample batch gets one extra stats-only draw at the same
// evaluation point so the variance is defined.
inline WorkerOutput run_worker(const RunConfig& cfg, const Objective& obj, const Dataset& ds,
                               const ParameterVector& x0, const AccumulationPlan& plan,
                               Shard& shard, InnerOptState& opt_state, bool want_stats) {
  WorkerOutput out;
  out.params = x0;
  const int d = static_cast<int>(x0.size());
  ParameterVector g(d);
  for (long h = 1; h <= cfg.inner_steps; ++h) {
    const bool last = h == cfg.inner_steps;
    std::fill(g.begin(), g.end(), 0.0);
    GradMatrix rows;
    for (long s = 0; s < plan.accum_steps; ++s) {
      const auto batch = next_batch(ds, shard, static_cast<int>(plan.micro_batch));
      auto bg = grad_batch(obj, out.params, batch);
      for (int j = 0; j < d; ++j) g[j] += bg.mean[j];
      if (want_stats && last) rows.append_rows(bg.per_sample);
    }
    if (plan.accum_steps > 1)
      for (int j = 0; j < d; ++j) g[j] /= static_cast<double>(plan.accum_steps);
    if (want_stats && last) {
      if (rows.batch < 2) {
        const auto extra = next_batch(ds, shard, 1);
        rows.append_rows(grad_batch(obj, out.params, extra).per_sample);
      }
      out.stats_rows = std::move(rows);
    }
    inner_step(cfg.inner, opt_state, out.params, g);
  }
  return out;
}

inline void append_step_rows(RunMetrics& m, const Objective& obj,
                             const std::vector<Sample>& eval_set,
                             const std::vector<const TrainerState*>& alive, long step,
                             const std::vector<long>& used_batch,
                             const std::vector<int>& used_accum, double comm_step,
                             double comm_cum) {
  double best = std::numeric_limits<double>::infinity();
  double req_sum = 0.0;
  for (std::size_t i = 0; i < alive.size(); ++i) {
    StepRow r;
    r.step = step;
    r.trainer_id = alive[i]->id;
    r.loss = mean_loss(obj, alive[i]->params, eval_set);
    r.requested_batch = used_batch[i];
    r.accum_flag = used_accum[i];
    r.alive_trainers = static_cast<int>(alive.size());
    r.comm_step = comm_step;
    r.comm_cum = comm_cum;
    m.rows.push_back(r);
    best = std::min(best, r.loss);
    req_sum += static_cast<double>(r.requested_batch);
  }
  m.min_loss.push_back(best);
  m.mean_requested.push_back(req_sum / static_cast<double>(alive.size()));
}

// The adaptive loop; also the fixed-batch baseline when the feature flags are
// off (same code path, so their equivalence is structural).
inline RunMetrics run_pool(const RunConfig& cfg) {
  validate(cfg);
  const Objective obj = make_objective(cfg);
  const Dataset ds = generate_dataset(cfg.recipe, cfg.dataset_size, cfg.dim, cfg.seed);
  const auto eval_set = eval_batch(ds, cfg.seed, cfg.eval_batch);
  const double fraction =
      cfg.shard_fraction > 0.0 ? cfg.shard_fraction : 1.0 / static_cast<double>(cfg.num_trainers);

  PoolState pool;
  pool.merge_w = cfg.merge_w;
  pool.merge_frequency = cfg.merge_frequency;
  pool.n_switch = cfg.n_switch;
  pool.b_max = cfg.b_max;
  pool.trainers.resize(cfg.num_trainers);
  for (int i = 0; i < cfg.num_trainers; ++i) {
    TrainerState& t = pool.trainers[i];
    t.id = i;
    t.params = init_params(obj.param_dim(), cfg.init_scale, cfg.seed, i);
    t.requested_batch = cfg.initial_batch;
    t.workers = cfg.workers_per_trainer;
    t.shards = make_shards(ds, cfg.workers_per_trainer, fraction, cfg.seed, i);
    t.worker_inner_states.resize(cfg.workers_per_trainer);
    for (auto& s : t.worker_inner_states) s.reset(obj.param_dim(), cfg.inner.kind);
  }

  RunMetrics metrics;
  metrics.inner_updates_per_worker = cfg.outer_steps * cfg.inner_steps;

  {
    std::vector<const TrainerState*> alive;
    for (const auto& t : pool.trainers) alive.push_back(&t);
    std::vector<long> used(alive.size(), cfg.initial_batch);
    std::vector<int> accum(alive.size(), 0);
    metrics.wall_ms.push_back(0.0);
    append_step_rows(metrics, obj, eval_set, alive, 0, used, accum, 0.0, 0.0);
  }

  double comm_cum = 0.0;
  for (long t = 1; t <= cfg.outer_steps; ++t) {
    const auto t_start = std::chrono::steady_clock::now();

    if (cfg.trainer_merging && t % cfg.merge_frequency == 0) {
      const auto merge_set = check_merge(pool, cfg.merge_w);
      if (merge_set.size() >= 2) {
        MergeEvent ev = do_merge(pool, merge_set);
        ev.step = t;
        metrics.merges.push_back(ev);
      }
    }

    std::vector<TrainerState*> alive;
    for (auto& tr : pool.trainers)
      if (tr.alive) alive.push_back(&tr);

    // Plan every trainer's round from its current requested batch. With
    // switch-mode off, oversized requests are hard-capped at b_max instead of
    // accumulating.
    std::vector<AccumulationPlan> plans(alive.size());
    std::vector<long> used_batch(alive.size());
    std::vector<int> used_accum(alive.size());
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (cfg.switch_mode) {
        plans[i] = plan_batch(alive[i]->requested_batch, cfg.b_max, cfg.n_switch);
      } else {
        plans[i].use_accumulation = false;
        plans[i].accum_steps = 1;
        plans[i].micro_batch = std::min(alive[i]->requested_batch, cfg.b_max);
      }
      used_batch[i] = alive[i]->requested_batch;
      used_accum[i] = plans[i].use_accumulation ? 1 : 0;
    }

    // Inner loops: one task per (trainer, worker). Each task owns its shard
    // stream, optimizer state, and output slot; nothing else is shared.
    const int M = cfg.workers_per_trainer;
    std::vector<std::vector<WorkerOutput>> outs(alive.size());
    for (auto& v : outs) v.resize(M);
    if (cfg.parallel) {
      std::vector<std::future<void>> tasks;
      tasks.reserve(alive.size() * static_cast<std::size_t>(M));
      for (std::size_t i = 0; i < alive.size(); ++i) {
        TrainerState* tr = alive[i];
        for (int m = 0; m < M; ++m) {
          const bool want_stats = cfg.adaptive_batching && m == 0;
          tasks.push_back(std::async(std::launch::async, [&, tr, i, m, want_stats] {
            outs[i][m] = run_worker(cfg, obj, ds, tr->params, plans[i], tr->shards[m],
                                    tr->worker_inner_states[m], want_stats);
          }));
        }
      }
      for (auto& f : tasks) f.get();
    } else {
      for (std::size_t i = 0; i < alive.size(); ++i) {
        TrainerState* tr = alive[i];
        for (int m = 0; m < M; ++m) {
          const bool want_stats = cfg.adaptive_batching && m == 0;
          outs[i][m] = run_worker(cfg, obj, ds, tr->params, plans[i], tr->shards[m],
                                  tr->worker_inner_states[m], want_stats);
        }
      }
    }

    if (cfg.record_workers && t == cfg.outer_steps) {
      for (std::size_t i = 0; i < alive.size(); ++i) {
        metrics.last_pre_outer.push_back(alive[i]->params);
        std::vector<ParameterVector> finals;
        for (int m = 0; m < M; ++m) finals.push_back(outs[i][m].params);
        metrics.last_worker_finals.push_back(std::move(finals));
      }
    }

    // Outer updates and next requested batches, in fixed trainer order.
    for (std::size_t i = 0; i < alive.size(); ++i) {
      TrainerState* tr = alive[i];
      const int d = static_cast<int>(tr->params.size());
      ParameterVector delta(d, 0.0);
      for (int m = 0; m < M; ++m)
        for (int j = 0; j < d; ++j) delta[j] += tr->params[j] - outs[i][m].params[j];
      const double inv_m = 1.0 / static_cast<double>(M);
      for (int j = 0; j < d; ++j) delta[j] *= inv_m;
      outer_step(cfg.outer, tr->outer_state, tr->params, delta);
      if (cfg.record_workers && t == cfg.outer_steps)
        metrics.last_post_outer.push_back(tr->params);

      if (cfg.adaptive_batching)
        tr->requested_batch = decide_batch(cfg.test, outs[i][0].stats_rows).requested;
    }

    // Each sync ships b_max/b per alive trainer, at the batch used this step.
    double comm_step = 0.0;
    for (std::size_t i = 0; i < alive.size(); ++i)
      comm_step += static_cast<double>(cfg.b_max) / static_cast<double>(used_batch[i]);
    comm_cum += comm_step;
    metrics.comm_curve.push_back(comm_cum);

    std::vector<const TrainerState*> alive_const(alive.begin(), alive.end());
    metrics.wall_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count());
    append_step_rows(metrics, obj, eval_set, alive_const, t, used_batch, used_accum, comm_step,
                     comm_cum);
  }

  metrics.total_comm = comm_cum;
  metrics.final_loss = metrics.min_loss.back();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tr : pool.trainers) {
    if (!tr.alive) continue;
    const double l = mean_loss(obj, tr.params, eval_set);
    if (l < best) {
      best = l;
      metrics.final_params = tr.params;
    }
  }
  return metrics;
}

// W parallel SGD streams whose models are replaced by their average every H
// steps. One logical trainer; one metrics row per averaging round.
inline RunMetrics run_local_sgd(const RunConfig& cfg) {
  validate(cfg);
  const Objective obj = make_objective(cfg);
  const Dataset ds = generate_dataset(cfg.recipe, cfg.dataset_size, cfg.dim, cfg.seed);
  const auto eval_set = eval_batch(ds, cfg.seed, cfg.eval_batch);
  const int W = cfg.workers_per_trainer;
  const double fraction = cfg.shard_fraction > 0.0 ? cfg.shard_fraction : 1.0;

  auto shards = make_shards(ds, W, fraction, cfg.seed, 0);
  ParameterVector shared = init_params(obj.param_dim(), cfg.init_scale, cfg.seed, 0);
  std::vector<InnerOptState> opt_states(W);
  for (auto& s : opt_states) s.reset(obj.param_dim(), cfg.inner.kind);

  const long b = std::min(cfg.initial_batch, cfg.b_max);
  AccumulationPlan plan;
  plan.use_accumulation = false;
  plan.accum_steps = 1;
  plan.micro_batch = b;

  RunMetrics metrics;
  metrics.inner_updates_per_worker = cfg.outer_steps * cfg.inner_steps;
  const int d = obj.param_dim();

  auto log_step = [&](long step, double comm_step, double comm_cum) {
    StepRow r;
    r.step = step;
    r.trainer_id = 0;
    r.loss = mean_loss(obj, shared, eval_set);
    r.requested_batch = b;
    r.accum_flag = 0;
    r.alive_trainers = 1;
    r.comm_step = comm_step;
    r.comm_cum = comm_cum;
    metrics.rows.push_back(r);
    metrics.min_loss.push_back(r.loss);
    metrics.mean_requested.push_back(static_cast<double>(b));
  };

  metrics.wall_ms.push_back(0.0);
  log_step(0, 0.0, 0.0);

  double comm_cum = 0.0;
  for (long t = 1; t <= cfg.outer_steps; ++t) {
    const auto t_start = std::chrono::steady_clock::now();
    std::vector<WorkerOutput> outs(W);
    if (cfg.parallel && W > 1) {
      std::vector<std::future<void>> tasks;
      tasks.reserve(W);
      for (int w = 0; w < W; ++w)
        tasks.push_back(std::async(std::launch::async, [&, w] {
          outs[w] = run_worker(cfg, obj, ds, shared, plan, shards[w], opt_states[w], false);
        }));
      for (auto& f : tasks) f.get();
    } else {
      for (int w = 0; w < W; ++w)
        outs[w] = run_worker(cfg, obj, ds, shared, plan, shards[w], opt_states[w], false);
    }

    if (cfg.record_workers && t == cfg.outer_steps) {
      metrics.last_pre_outer.push_back(shared);
      std::vector<ParameterVector> finals;
      for (int w = 0; w < W; ++w) finals.push_back(outs[w].params);
      metrics.last_worker_finals.push_back(std::move(finals));
    }

    // Every model is replaced by the average of the post-update models.
    ParameterVector avg(d, 0.0);
    for (int w = 0; w < W; ++w)
      for (int j = 0; j < d; ++j) avg[j] += outs[w].params[j];
    const double inv_w = 1.0 / static_cast<double>(W);
    for (int j = 0; j < d; ++j) avg[j] *= inv_w;
    shared = std::move(avg);
    if (cfg.record_workers && t == cfg.outer_steps) metrics.last_post_outer.push_back(shared);

    const double comm_step =
        static_cast<double>(W) * static_cast<double>(cfg.b_max) / static_cast<double>(b);
    comm_cum += comm_step;
    metrics.comm_curve.push_back(comm_cum);
    metrics.wall_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count());
    log_step(t, comm_step, comm_cum);
  }

  metrics.total_comm = comm_cum;
  metrics.final_loss = metrics.min_loss.back();
  metrics.final_params = shared;
  return metrics;
}

}  // namespace detail

// Run the configured algorithm. The fixed-batch baseline is the adaptive loop
// with every adaptive feature off; the single-stream baseline is LocalSGD
// with one worker. Keeping them on shared code paths makes the reduction
// identities hold by construction.
inline RunMetrics run(const RunConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::kAdLoCo:
      return detail::run_pool(cfg);
    case Algorithm::kDiLoCo: {
      RunConfig c = cfg;
      c.adaptive_batching = false;
      c.trainer_merging = false;
      c.switch_mode = false;
      return detail::run_pool(c);
    }
    case Algorithm::kLocalSgd:
      return detail::run_local_sgd(cfg);
    case Algorithm::kSgd: {
      RunConfig c = cfg;
      c.workers_per_trainer = 1;
      return detail::run_local_sgd(c);
    }
  }
  throw ConfigError("bad algorithm");
}

struct LogFit {
  double a_log = 0.0;
  double b_log = 0.0;
  double r2_log = 0.0;
  double a_lin = 0.0;
  double b_lin = 0.0;
  double r2_lin = 0.0;
};

namespace detail {

// Simple least squares y ~ a x + b; r2 clamped into [0, 1], 0 for a constant y.
inline void least_squares(const std::vector<double>& xs, const std::vector<double>& ys,
                          double& a, double& b, double& r2) {
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (syy <= 0.0 || sxx <= 0.0) {
    a = 0.0;
    b = my;
    r2 = 0.0;
    return;
  }
  a = sxy / sxx;
  b = my - a * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (a * xs[i] + b);
    ss_res += e * e;
  }
  r2 = 1.0 - ss_res / syy;
  if (r2 < 0.0) r2 = 0.0;
  if (r2 > 1.0) r2 = 1.0;
}

}  // namespace detail

// Fit the cumulative communication curve against ln(N+1) and against N, for
// the sub-linear growth check. Points are indexed N = 1..len.
inline LogFit fit_log_growth(const std::vector<double>& cum_comm) {
  if (cum_comm.size() < 10) throw UsageError("fit_log_growth: need at least 10 points");
  std::vector<double> x_log(cum_comm.size()), x_lin(cum_comm.size());
  for (std::size_t i = 0; i < cum_comm.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    x_log[i] = std::log(n + 1.0);
    x_lin[i] = n;
  }
  LogFit fit;
  detail::least_squares(x_log, cum_comm, fit.a_log, fit.b_log, fit.r2_log);
  detail::least_squares(x_lin, cum_comm, fit.a_lin, fit.b_lin, fit.r2_lin);
  return fit;
}

}  // namespace adloco
