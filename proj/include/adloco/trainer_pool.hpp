// Trainer pool: merge selection, weighted merging, and accumulation planning.
//
// A pool starts with k trainers and only ever contracts. Merging folds the w
// trainers with the smallest requested batches into a single representative
// whose parameters become the batch-size-weighted average of the merged
// models; the representative keeps its own optimizer state, shard, and
// requested batch. Accumulation planning maps a requested batch onto
// (micro-batch, accumulation steps) under the per-step hardware cap b_max.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "adloco/datagen.hpp"
#include "adloco/errors.hpp"
#include "adloco/optim.hpp"
#include "adloco/vec.hpp"

namespace adloco {

struct TrainerState {
  int id = 0;
  ParameterVector params;
  long requested_batch = 1;
  std::vector<Shard> shards;  // one per worker
  InnerOptState inner_state;  // merged across workers only notionally; see engine
  std::vector<InnerOptState> worker_inner_states;
  OuterOptState outer_state;
  int workers = 1;
  bool alive = true;
};

struct PoolState {
  std::vector<TrainerState> trainers;
  int merge_w = 1;
  int merge_frequency = 3;
  int n_switch = 2;
  long b_max = 64;

  int alive_count() const {
    int n = 0;
    for (const auto& t : trainers) n += t.alive ? 1 : 0;
    return n;
  }

  TrainerState* find(int id) {
    for (auto& t : trainers)
      if (t.id == id) return &t;
    return nullptr;
  }
};

// Pick the w alive trainers with the smallest requested batch, ties broken by
// smaller id. Empty result when w = 0, when at most one trainer is alive, or
// when w exceeds the alive count.
inline std::vector<int> check_merge(const PoolState& pool, int w) {
  std::vector<const TrainerState*> alive;
  for (const auto& t : pool.trainers)
    if (t.alive) alive.push_back(&t);
  const int k = static_cast<int>(alive.size());
  if (w <= 0 || k <= 1 || w > k) return {};
  std::sort(alive.begin(), alive.end(), [](const TrainerState* a, const TrainerState* b) {
    if (a->requested_batch != b->requested_batch) return a->requested_batch < b->requested_batch;
    return a->id < b->id;
  });
  std::vector<int> out(w);
  for (int i = 0; i < w; ++i) out[i] = alive[i]->id;
  std::sort(out.begin(), out.end());
  return out;
}

struct MergeEvent {
  long step = 0;
  std::vector<int> merged_ids;
  int representative = 0;
  int alive_after = 0;
};

// Weighted merge: x_merge = sum_j b_j x_j / sum_j b_j over the merge set. The
// member with the largest requested batch (tie: smaller id) survives as the
// representative with its optimizer state, shard, and requested batch intact;
// the rest are marked dead.
inline MergeEvent do_merge(PoolState& pool, const std::vector<int>& merge_set) {
  if (merge_set.size() < 2) throw UsageError("do_merge: merge set needs at least 2 trainers");
  std::vector<TrainerState*> members;
  members.reserve(merge_set.size());
  for (int id : merge_set) {
    TrainerState* t = pool.find(id);
    if (t == nullptr) throw UsageError("do_merge: unknown trainer id " + std::to_string(id));
    if (!t->alive) throw UsageError("do_merge: trainer " + std::to_string(id) + " is not alive");
    members.push_back(t);
  }

  TrainerState* rep = members[0];
  for (TrainerState* t : members) {
    if (t->requested_batch > rep->requested_batch ||
        (t->requested_batch == rep->requested_batch && t->id < rep->id))
      rep = t;
  }

  const std::size_t dim = rep->params.size();
  ParameterVector merged(dim, 0.0);
  double weight_sum = 0.0;
  for (const TrainerState* t : members) {
    const double w = static_cast<double>(t->requested_batch);
    weight_sum += w;
    for (std::size_t i = 0; i < dim; ++i) merged[i] += w * t->params[i];
  }
  for (std::size_t i = 0; i < dim; ++i) merged[i] /= weight_sum;

  rep->params = std::move(merged);
  for (TrainerState* t : members) {
    if (t != rep) {
      t->alive = false;
      t->shards.clear();  // dead trainers' shards are released, not reassigned
    }
  }

  MergeEvent ev;
  ev.merged_ids = merge_set;
  std::sort(ev.merged_ids.begin(), ev.merged_ids.end());
  ev.representative = rep->id;
  ev.alive_after = pool.alive_count();
  return ev;
}

struct AccumulationPlan {
  bool use_accumulation = false;
  long accum_steps = 1;
  long micro_batch = 1;

  long total() const { return accum_steps * micro_batch; }
};

// Gradient accumulation kicks in only when the requested batch is strictly
// larger than n * b_max; mildly oversized requests run as a single capped
// micro-batch instead.
inline AccumulationPlan plan_batch(long requested, long b_max, long n) {
  if (requested < 1 || b_max < 1 || n < 1)
    throw ConfigError("plan_batch: requested, b_max and n must all be >= 1");
  AccumulationPlan plan;
  if (requested > n * b_max) {
    plan.use_accumulation = true;
    plan.accum_steps = (requested + b_max - 1) / b_max;
    plan.micro_batch = b_max;
  } else {
    plan.use_accumulation = false;
    plan.accum_steps = 1;
    plan.micro_batch = std::min(requested, b_max);
  }
  return plan;
}

}  // namespace adloco
