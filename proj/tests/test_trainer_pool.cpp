#include <catch2/catch_amalgamated.hpp>

#include "adloco/errors.hpp"
#include "adloco/trainer_pool.hpp"

#include <vector>

using namespace adloco;

namespace {

PoolState pool_with(const std::vector<std::pair<int, long>>& id_req, std::size_t dim = 2) {
  PoolState pool;
  for (const auto& [id, req] : id_req) {
    TrainerState t;
    t.id = id;
    t.requested_batch = req;
    t.params.assign(dim, static_cast<double>(id));
    t.shards.resize(1);
    t.shards[0].indices = {0};
    pool.trainers.push_back(std::move(t));
  }
  return pool;
}

}  // namespace

TEST_CASE("merge selection picks the smallest requested batches", "[pool]") {
  const PoolState pool = pool_with({{1, 5}, {2, 2}, {3, 9}, {4, 2}});

  REQUIRE(check_merge(pool, 2) == std::vector<int>{2, 4});  // tie on 2 -> both
  REQUIRE(check_merge(pool, 3) == std::vector<int>{1, 2, 4});
  REQUIRE(check_merge(pool, 4) == std::vector<int>{1, 2, 3, 4});

  REQUIRE(check_merge(pool, 0).empty());
  REQUIRE(check_merge(pool, -1).empty());
  REQUIRE(check_merge(pool, 5).empty());  // w exceeds the alive count
}

TEST_CASE("merge selection ignores dead trainers and lone pools", "[pool]") {
  PoolState pool = pool_with({{1, 5}, {2, 2}, {3, 9}});
  pool.trainers[1].alive = false;

  REQUIRE(check_merge(pool, 2) == std::vector<int>{1, 3});
  REQUIRE(check_merge(pool, 3).empty());  // only 2 alive

  pool.trainers[0].alive = false;
  REQUIRE(check_merge(pool, 1).empty());  // a single survivor never merges
}

TEST_CASE("merging averages parameters weighted by requested batch", "[pool]") {
  PoolState pool = pool_with({{1, 1}, {2, 2}});
  pool.trainers[0].params = {0.0, 0.0};
  pool.trainers[1].params = {3.0, 3.0};

  const MergeEvent ev = do_merge(pool, {1, 2});
  // (1*(0,0) + 2*(3,3)) / 3 = (2,2); the trainer with the larger request survives.
  REQUIRE(ev.representative == 2);
  REQUIRE(ev.merged_ids == std::vector<int>{1, 2});
  REQUIRE(ev.alive_after == 1);

  const TrainerState* rep = pool.find(2);
  REQUIRE(rep->alive);
  REQUIRE(rep->params[0] == Catch::Approx(2.0).epsilon(1e-15));
  REQUIRE(rep->params[1] == Catch::Approx(2.0).epsilon(1e-15));
  REQUIRE(rep->requested_batch == 2);  // representative keeps its own request

  const TrainerState* dead = pool.find(1);
  REQUIRE_FALSE(dead->alive);
  REQUIRE(dead->shards.empty());  // shards released, not reassigned
}

TEST_CASE("representative ties break toward the smaller id", "[pool]") {
  PoolState pool = pool_with({{7, 4}, {3, 4}, {5, 4}});
  const MergeEvent ev = do_merge(pool, {7, 3, 5});
  REQUIRE(ev.representative == 3);
  REQUIRE(ev.alive_after == 1);
  // Equal weights: plain average of ids 7, 3, 5 as parameter values.
  REQUIRE(pool.find(3)->params[0] == Catch::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("invalid merge sets are rejected", "[pool]") {
  PoolState pool = pool_with({{1, 1}, {2, 2}});
  REQUIRE_THROWS_AS(do_merge(pool, {1}), UsageError);       // too small
  REQUIRE_THROWS_AS(do_merge(pool, {1, 9}), UsageError);    // unknown id

  PoolState pool2 = pool_with({{1, 1}, {2, 2}, {3, 3}});
  pool2.trainers[0].alive = false;
  REQUIRE_THROWS_AS(do_merge(pool2, {1, 2}), UsageError);   // dead member
}

TEST_CASE("accumulation engages only above n times the cap", "[pool]") {
  const auto p1 = plan_batch(5, 4, 2);
  REQUIRE_FALSE(p1.use_accumulation);
  REQUIRE(p1.accum_steps == 1);
  REQUIRE(p1.micro_batch == 4);  // mildly oversized requests run capped

  const auto p2 = plan_batch(9, 4, 2);
  REQUIRE(p2.use_accumulation);
  REQUIRE(p2.accum_steps == 3);  // ceil(9/4)
  REQUIRE(p2.micro_batch == 4);
  REQUIRE(p2.total() == 12);

  const auto p3 = plan_batch(8, 4, 2);  // boundary: 8 is not > 2*4
  REQUIRE_FALSE(p3.use_accumulation);
  REQUIRE(p3.micro_batch == 4);

  const auto p4 = plan_batch(3, 4, 2);
  REQUIRE_FALSE(p4.use_accumulation);
  REQUIRE(p4.micro_batch == 3);  // small requests run as-is

  REQUIRE_THROWS_AS(plan_batch(0, 4, 2), ConfigError);
  REQUIRE_THROWS_AS(plan_batch(4, 0, 2), ConfigError);
  REQUIRE_THROWS_AS(plan_batch(4, 4, 0), ConfigError);
}

TEST_CASE("alive_count and find track pool mutations", "[pool]") {
  PoolState pool = pool_with({{1, 1}, {2, 2}, {3, 3}});
  REQUIRE(pool.alive_count() == 3);
  REQUIRE(pool.find(2)->id == 2);
  REQUIRE(pool.find(42) == nullptr);

  do_merge(pool, {1, 2});
  REQUIRE(pool.alive_count() == 2);
}
