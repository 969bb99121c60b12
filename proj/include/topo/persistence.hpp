#pragma once

#include <array>
#include <utility>
#include <vector>

#include "topo/common.hpp"

namespace topo {

// A finite multiset of reals. Original order is preserved; gradient routing
// refers back to positions in `values`.
struct PointSet1D {
  std::vector<double> values;
};

// Validating constructor: finite values, length >= 1.
PointSet1D make_point_set(std::vector<double> values);

// Result of duplicate removal. `kept[i]` is the index into the original set
// of the i-th surviving value; survivors keep their original relative order.
struct DedupResult {
  PointSet1D set;
  std::vector<int> kept;
};

// For each group of exactly-equal values keep one representative, chosen by
// the rng. Exact bitwise equality only; near-duplicates are legitimate gaps.
DedupResult dedup_points(const PointSet1D& s, Rng& rng);

// Deaths of 0-dimensional classes under the weak-alpha filtration of a 1-D
// point set: the adjacent differences of the sorted values. The component
// that survives every threshold (the essential class) is excluded, so a set
// of m distinct values yields m-1 deaths. `pairs[t]` holds the indices of
// the two sort-adjacent points (smaller first) whose merge caused death t,
// in ascending-value order; |values[r]| - |values[l]| equals deaths[t]
// exactly, which is what makes the deaths differentiable.
struct DeathRecord {
  std::vector<double> deaths;
  std::vector<std::pair<int, int>> pairs;
};

// Input must have distinct values (run dedup_points first). A singleton set
// returns an empty record.
DeathRecord zero_dim_deaths(const PointSet1D& s);

// Summary statistics of a sample (population std). Doubles as the gradient
// carrier in the backward passes below.
struct TopoStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

TopoStats stats_of(std::span<const double> v);

// Statistics over the persistence deaths of s. Empty deaths (singleton set)
// yield all-zero stats.
TopoStats g_ph(const PointSet1D& s);

// Statistics over the raw values of s (no persistence analysis).
TopoStats g_noph(const PointSet1D& s);

// [g_ph | g_noph], always length 8.
std::array<double, 8> g_both(const PointSet1D& s);

// Gradient of (min, max, mean, std of deaths) with respect to the values of
// s, chain-ruled with `upstream`. Each death's gradient is routed to its
// pair: +d on the larger point, -d on the smaller. Points in no contributing
// pair receive 0. For tied extreme deaths the first pair in ascending-value
// order wins (the statistic is not differentiable there).
std::vector<double> stats_backward(const PointSet1D& s, const DeathRecord& record,
                                   const TopoStats& upstream);

// Gradient of (min, max, mean, std) of the raw values (the g_noph path).
std::vector<double> raw_stats_backward(const PointSet1D& s, const TopoStats& upstream);

}  // namespace topo
