#pragma once

// Independent reference implementations used only by tests. These must not
// share code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

// Union-find single-linkage over all pairwise distances of a 1-D point set:
// process pairs in ascending distance order; every union of two distinct
// components records its merge distance. For n distinct values this yields
// n-1 merge distances, the 0-dimensional deaths.
inline std::vector<double> single_linkage_deaths(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<size_t(size_t)> find = [&](size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  struct Edge {
    double dist;
    size_t a, b;
  };
  std::vector<Edge> edges;
  edges.reserve(n * (n - 1) / 2);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      edges.push_back({std::abs(values[i] - values[j]), i, j});
  std::sort(edges.begin(), edges.end(),
            [](const Edge& x, const Edge& y) { return x.dist < y.dist; });
  std::vector<double> deaths;
  for (const Edge& e : edges) {
    const size_t ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    deaths.push_back(e.dist);
    if (deaths.size() == n - 1) break;
  }
  std::sort(deaths.begin(), deaths.end());
  return deaths;
}

// Central finite differences of a scalar function of a vector.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central differences with a smoothness check: estimates from two step sizes
// must agree, otherwise the stencil straddles a non-smooth point (a ReLU
// kink or a persistence-pair swap) where the true gradient is one-sided and
// the component is marked invalid.
struct FilteredDiff {
  std::vector<double> grad;
  std::vector<bool> valid;
};

inline FilteredDiff central_diff_filtered(
    const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
    double h) {
  FilteredDiff out;
  out.grad = central_diff(f, x, h);
  const std::vector<double> coarse = central_diff(f, x, 2.0 * h);
  out.valid.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double scale = std::max({std::abs(out.grad[i]), std::abs(coarse[i]), 1.0});
    out.valid[i] = std::abs(out.grad[i] - coarse[i]) <= 1e-5 * scale;
  }
  return out;
}

inline double rel_err(double got, double want) {
  const double denom = std::max(std::abs(want), 1e-12);
  return std::abs(got - want) / denom;
}

}  // namespace oracle
