#include "topo/persistence.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>

namespace topo {

PointSet1D make_point_set(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("PointSet1D: empty set");
  if (!all_finite(values)) throw std::invalid_argument("PointSet1D: non-finite value");
  return PointSet1D{std::move(values)};
}

namespace {

// Indices of s sorted ascending by value, ties broken by original index.
std::vector<int> argsort(const std::vector<double>& v) {
  std::vector<int> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return v[static_cast<size_t>(a)] < v[static_cast<size_t>(b)]; });
  return order;
}

}  // namespace

DedupResult dedup_points(const PointSet1D& s, Rng& rng) {
  if (s.values.empty()) throw std::invalid_argument("dedup_points: empty set");
  const auto order = argsort(s.values);
  std::vector<int> kept;
  kept.reserve(order.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i + 1;
    const double v = s.values[static_cast<size_t>(order[i])];
    while (j < order.size() && s.values[static_cast<size_t>(order[j])] == v) ++j;
    const size_t group = j - i;
    // One rng draw per duplicate group keeps consumption deterministic.
    const size_t pick = group == 1 ? 0 : static_cast<size_t>(rng.below(group));
    kept.push_back(order[i + pick]);
    i = j;
  }
  std::sort(kept.begin(), kept.end());  // survivors keep original order
  PointSet1D out;
  out.values.reserve(kept.size());
  for (int idx : kept) out.values.push_back(s.values[static_cast<size_t>(idx)]);
  return DedupResult{std::move(out), std::move(kept)};
}

DeathRecord zero_dim_deaths(const PointSet1D& s) {
  if (s.values.empty()) throw std::invalid_argument("zero_dim_deaths: empty set");
  const auto order = argsort(s.values);
  DeathRecord rec;
  if (order.size() < 2) return rec;
  rec.deaths.reserve(order.size() - 1);
  rec.pairs.reserve(order.size() - 1);
  for (size_t t = 0; t + 1 < order.size(); ++t) {
    const int lo = order[t];
    const int hi = order[t + 1];
    rec.deaths.push_back(s.values[static_cast<size_t>(hi)] - s.values[static_cast<size_t>(lo)]);
    rec.pairs.emplace_back(lo, hi);
  }
  return rec;
}

TopoStats stats_of(std::span<const double> v) {
  TopoStats st;
  if (v.empty()) return st;
  st.min = *std::min_element(v.begin(), v.end());
  st.max = *std::max_element(v.begin(), v.end());
  if (st.min == st.max) {
    // Constant sample: keep mean and std exact instead of accumulating
    // rounding noise that downstream gradients would divide by.
    st.mean = st.min;
    st.stddev = 0.0;
    return st;
  }
  st.mean = mean_of(v);
  st.stddev = pop_std(v);
  return st;
}

TopoStats g_ph(const PointSet1D& s) {
  const DeathRecord rec = zero_dim_deaths(s);
  return stats_of(rec.deaths);
}

TopoStats g_noph(const PointSet1D& s) {
  if (s.values.empty()) throw std::invalid_argument("g_noph: empty set");
  return stats_of(s.values);
}

std::array<double, 8> g_both(const PointSet1D& s) {
  const TopoStats a = g_ph(s);
  const TopoStats b = g_noph(s);
  return {a.min, a.max, a.mean, a.stddev, b.min, b.max, b.mean, b.stddev};
}

namespace {

// Gradient of (min, max, mean, std) of `v` with respect to each element.
// Extremes go to the first attaining index; std uses the subgradient 0 when
// the deviation is zero.
std::vector<double> sample_stat_grads(std::span<const double> v, const TopoStats& up) {
  const size_t n = v.size();
  std::vector<double> g(n, 0.0);
  if (n == 0) return g;
  size_t imin = 0, imax = 0;
  for (size_t i = 1; i < n; ++i) {
    if (v[i] < v[imin]) imin = i;
    if (v[i] > v[imax]) imax = i;
  }
  // Constant sample: std is identically zero, subgradient 0.
  const bool constant = v[imin] == v[imax];
  const double m = constant ? v[imin] : mean_of(v);
  const double sd = constant ? 0.0 : pop_std(v);
  const double nn = static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    double gi = up.mean / nn;
    if (sd > 0.0) gi += up.stddev * (v[i] - m) / (nn * sd);
    g[i] = gi;
  }
  g[imin] += up.min;
  g[imax] += up.max;
  return g;
}

}  // namespace

std::vector<double> stats_backward(const PointSet1D& s, const DeathRecord& record,
                                   const TopoStats& upstream) {
  const size_t n = s.values.size();
  if (record.deaths.size() != record.pairs.size())
    throw std::invalid_argument("stats_backward: record length mismatch");
  if (!record.deaths.empty() && record.deaths.size() != n - 1)
    throw std::invalid_argument("stats_backward: record does not match set size");
  for (const auto& [lo, hi] : record.pairs)
    if (lo < 0 || hi < 0 || static_cast<size_t>(lo) >= n || static_cast<size_t>(hi) >= n)
      throw std::invalid_argument("stats_backward: pair index out of range");

  std::vector<double> grad(n, 0.0);
  if (record.deaths.empty()) return grad;
  const auto death_grads = sample_stat_grads(record.deaths, upstream);
  for (size_t t = 0; t < record.deaths.size(); ++t) {
    grad[static_cast<size_t>(record.pairs[t].second)] += death_grads[t];
    grad[static_cast<size_t>(record.pairs[t].first)] -= death_grads[t];
  }
  return grad;
}

std::vector<double> raw_stats_backward(const PointSet1D& s, const TopoStats& upstream) {
  if (s.values.empty()) throw std::invalid_argument("raw_stats_backward: empty set");
  return sample_stat_grads(s.values, upstream);
}

}  // namespace topo
