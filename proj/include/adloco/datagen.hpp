// Synthetic datasets and per-worker shards.
//
// A dataset is generated once from a seed and is immutable afterwards. Each
// worker holds a shard: a subset of indices (shards may intersect, they are
// drawn independently) plus a private cursor stream, so batch draws from
// different workers never contend and a run is reproducible regardless of
// thread schedule. Batches are drawn with replacement.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adloco/errors.hpp"
#include "adloco/objectives.hpp"
#include "adloco/rng.hpp"

namespace adloco {

struct Dataset {
  std::vector<Sample> samples;
  int input_dim = 0;

  int size() const { return static_cast<int>(samples.size()); }
};

enum class DataRecipe { kGaussianQuadratic, kTwoCluster, kTeacherMlp };

inline const char* to_string(DataRecipe r) {
  switch (r) {
    case DataRecipe::kGaussianQuadratic: return "gaussian-quadratic";
    case DataRecipe::kTwoCluster: return "two-cluster";
    case DataRecipe::kTeacherMlp: return "teacher-mlp";
  }
  return "?";
}

inline DataRecipe parse_recipe(const std::string& name) {
  if (name == "gaussian-quadratic") return DataRecipe::kGaussianQuadratic;
  if (name == "two-cluster") return DataRecipe::kTwoCluster;
  if (name == "teacher-mlp") return DataRecipe::kTeacherMlp;
  throw ConfigError("unknown data recipe '" + name + "'");
}

namespace detail {

// Stream tags for the derivation tree under a run seed.
inline constexpr std::uint64_t kTagData = 0x64617461;      // dataset contents
inline constexpr std::uint64_t kTagShard = 0x73686172;     // shard index choice
inline constexpr std::uint64_t kTagCursor = 0x63757273;    // batch draws
inline constexpr std::uint64_t kTagInit = 0x696e6974;      // parameter init
inline constexpr std::uint64_t kTagEval = 0x6576616c;      // held-out eval set

}  // namespace detail

// Deterministic synthetic data. The same (recipe, n, d, seed) always yields
// the same samples, regardless of what else has consumed randomness.
inline Dataset generate_dataset(DataRecipe recipe, int n, int d, std::uint64_t seed) {
  if (n <= 0 || d <= 0) throw ConfigError("dataset size and dimension must be positive");
  Dataset ds;
  ds.input_dim = d;
  ds.samples.resize(n);
  RngStream rng = derive(seed, detail::kTagData);
  switch (recipe) {
    case DataRecipe::kGaussianQuadratic: {
      // Standard normal features; the optimum of the mean quadratic loss is
      // the feature mean, so the population optimum is the origin.
      for (auto& s : ds.samples) {
        s.features.resize(d);
        for (double& v : s.features) v = rng.next_gaussian();
        s.target = 0.0;
      }
      break;
    }
    case DataRecipe::kTwoCluster: {
      // Balanced binary labels; class-conditional mean +/- c in every
      // coordinate with unit noise. |c| scales like 1/sqrt(d) so the
      // cluster separation is dimension-independent.
      const double c = 2.0 / std::sqrt(static_cast<double>(d));
      for (auto& s : ds.samples) {
        const double y = rng.next_double() < 0.5 ? 0.0 : 1.0;
        const double sign = y > 0.5 ? 1.0 : -1.0;
        s.features.resize(d);
        for (double& v : s.features) v = sign * c + rng.next_gaussian();
        s.target = y;
      }
      break;
    }
    case DataRecipe::kTeacherMlp: {
      // Targets from a fixed random teacher network plus small noise, so the
      // student MLP objective has a realizable low-loss region.
      const int teacher_h = 4;
      Objective teacher = Objective::mlp(d, teacher_h);
      ParameterVector tw(teacher.param_dim());
      for (double& v : tw) v = rng.next_gaussian() * 0.7;
      for (auto& s : ds.samples) {
        s.features.resize(d);
        for (double& v : s.features) v = rng.next_gaussian();
        const auto f = detail::mlp_forward(teacher, tw, s.features);
        s.target = f.prediction + 0.05 * rng.next_gaussian();
      }
      break;
    }
  }
  return ds;
}

// A worker's view of the dataset: the indices it may sample plus a private
// stream that advances as it draws batches.
struct Shard {
  std::vector<int> indices;
  RngStream cursor;
};

// Draw `count` distinct indices from [0, n) using a partial Fisher-Yates pass.
inline std::vector<int> sample_distinct(int n, int count, RngStream& rng) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Independent, possibly intersecting shards: each of the `count` shards draws
// ceil(fraction * n) distinct indices on its own stream. `stream_tag`
// separates shard families (one per trainer) under the same seed.
inline std::vector<Shard> make_shards(const Dataset& ds, int count, double fraction,
                                      std::uint64_t seed, std::uint64_t stream_tag = 0) {
  if (count <= 0) throw ConfigError("shard count must be positive");
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ConfigError("shard fraction must lie in (0, 1]");
  const int n = ds.size();
  const int take = std::min(n, static_cast<int>(std::ceil(fraction * n)));
  std::vector<Shard> shards(count);
  RngStream family = derive(derive(seed, detail::kTagShard), stream_tag);
  for (int w = 0; w < count; ++w) {
    RngStream pick = derive(family, static_cast<std::uint64_t>(2 * w));
    shards[w].indices = sample_distinct(n, take, pick);
    shards[w].cursor = derive(family, static_cast<std::uint64_t>(2 * w + 1));
  }
  return shards;
}

// Next mini-batch of `batch_size` samples drawn with replacement from the
// shard. Advances the shard's cursor.
inline std::vector<Sample> next_batch(const Dataset& ds, Shard& shard, int batch_size) {
  if (batch_size <= 0) throw UsageError("next_batch: batch size must be positive");
  if (shard.indices.empty()) throw UsageError("next_batch: empty shard");
  std::vector<Sample> batch(batch_size);
  const std::uint64_t m = shard.indices.size();
  for (auto& s : batch) s = ds.samples[shard.indices[shard.cursor.next_below(m)]];
  return batch;
}

// Held-out evaluation batch on its own stream, disjoint from training draws.
inline std::vector<Sample> eval_batch(const Dataset& ds, std::uint64_t seed, int count) {
  RngStream rng = derive(seed, detail::kTagEval);
  std::vector<Sample> batch(count);
  const std::uint64_t n = static_cast<std::uint64_t>(ds.size());
  for (auto& s : batch) s = ds.samples[rng.next_below(n)];
  return batch;
}

// Parameter initialization: iid N(0, scale^2) on the run's init stream.
inline ParameterVector init_params(int dim, double scale, std::uint64_t seed,
                                   std::uint64_t stream_tag = 0) {
  RngStream rng = derive(derive(seed, detail::kTagInit), stream_tag);
  ParameterVector x(dim);
  if (scale == 0.0) return x;
  for (double& v : x) v = scale * rng.next_gaussian();
  return x;
}

// Plain CSV with header f0,...,f{d-1},target. Round-trips exactly via %.17g.
inline void dump_csv(const Dataset& ds, std::ostream& os) {
  for (int i = 0; i < ds.input_dim; ++i) os << 'f' << i << ',';
  os << "target\n";
  char buf[64];
  for (const Sample& s : ds.samples) {
    for (double v : s.features) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", s.target);
    os << buf << '\n';
  }
}

inline void dump_csv(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  dump_csv(ds, os);
}

inline Dataset load_csv(std::istream& is) {
  Dataset ds;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("dataset csv: missing header");
  const auto cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 2) throw ConfigError("dataset csv: expected at least one feature column");
  ds.input_dim = cols - 1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Sample s;
    s.features.reserve(ds.input_dim);
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      try {
        s.features.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("dataset csv: bad number '" + cell + "'");
      }
    }
    if (static_cast<int>(s.features.size()) != cols)
      throw ConfigError("dataset csv: row with " + std::to_string(s.features.size()) +
                        " cells, expected " + std::to_string(cols));
    s.target = s.features.back();
    s.features.pop_back();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  return load_csv(is);
}

}  // namespace adloco
