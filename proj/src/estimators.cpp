#include "topo/estimators.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

namespace topo {

ModelState state_from_string(const std::string& s) {
  if (s == "untrained") return ModelState::untrained;
  if (s == "trained") return ModelState::trained;
  if (s == "overfit") return ModelState::overfit;
  throw std::invalid_argument("unknown model state: " + s);
}

std::string to_string(ModelState s) {
  switch (s) {
    case ModelState::untrained: return "untrained";
    case ModelState::trained: return "trained";
    default: return "overfit";
  }
}

Standardizer fit_standardizer(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("fit_standardizer: no rows");
  const size_t dim = rows.front().size();
  Standardizer st;
  st.mean.assign(dim, 0.0);
  st.stddev.assign(dim, 0.0);
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    if (r.size() != dim) throw std::invalid_argument("fit_standardizer: ragged rows");
    for (size_t j = 0; j < dim; ++j) st.mean[j] += r[j];
  }
  for (double& m : st.mean) m /= n;
  for (const auto& r : rows)
    for (size_t j = 0; j < dim; ++j) {
      const double d = r[j] - st.mean[j];
      st.stddev[j] += d * d;
    }
  for (double& s : st.stddev) s = std::sqrt(s / n);
  return st;
}

std::vector<double> standardize(const Standardizer& st, std::span<const double> x) {
  if (x.size() != st.mean.size()) throw std::invalid_argument("standardize: layout mismatch");
  std::vector<double> out(x.size());
  for (size_t j = 0; j < x.size(); ++j)
    out[j] = st.stddev[j] > 0.0 ? (x[j] - st.mean[j]) / st.stddev[j] : 0.0;
  return out;
}

namespace {

std::vector<double> project(std::span<const double> full, const std::vector<int>& projection) {
  std::vector<double> out(projection.size());
  for (size_t i = 0; i < projection.size(); ++i)
    out[i] = full[static_cast<size_t>(projection[i])];
  return out;
}

}  // namespace

ModelState knn_state(std::span<const double> query, const std::vector<const MetaRecord*>& records,
                     const std::vector<int>& projection, const Standardizer& st, int k) {
  if (records.empty()) throw std::invalid_argument("knn_state: no records");
  const std::vector<double> q = standardize(st, query);
  std::vector<std::pair<double, size_t>> dist;
  dist.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    const std::vector<double> r = standardize(st, project(records[i]->features, projection));
    if (r.size() != q.size()) throw std::invalid_argument("knn_state: layout mismatch");
    double d2 = 0.0;
    for (size_t j = 0; j < q.size(); ++j) d2 += (q[j] - r[j]) * (q[j] - r[j]);
    dist.emplace_back(d2, i);
  }
  std::sort(dist.begin(), dist.end());
  const int kk = std::min<int>(k, static_cast<int>(dist.size()));
  int votes[3] = {0, 0, 0};
  for (int i = 0; i < kk; ++i)
    votes[static_cast<int>(records[dist[static_cast<size_t>(i)].second]->state)] += 1;
  int best = 0;
  bool tie = false;
  for (int s = 1; s < 3; ++s) {
    if (votes[s] > votes[best]) {
      best = s;
      tie = false;
    } else if (votes[s] == votes[best]) {
      tie = true;
    }
  }
  if (tie) return records[dist[0].second]->state;
  return static_cast<ModelState>(best);
}

LassoModel lasso_fit(const Matrix& x, std::span<const double> y, double alpha) {
  const int n = x.rows, d = x.cols;
  if (n < 1) throw std::invalid_argument("lasso_fit: need at least one sample");
  if (static_cast<size_t>(n) != y.size()) throw std::invalid_argument("lasso_fit: target length mismatch");
  if (!all_finite({x.data.data(), x.data.size()}) || !all_finite(y))
    throw std::invalid_argument("lasso_fit: non-finite input");

  LassoModel m;
  m.alpha = alpha;
  m.col_mean.assign(static_cast<size_t>(d), 0.0);
  m.col_scale.assign(static_cast<size_t>(d), 0.0);
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x(i, j);
    m.col_mean[static_cast<size_t>(j)] = s / n;
  }
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = x(i, j) - m.col_mean[static_cast<size_t>(j)];
      s += t * t;
    }
    m.col_scale[static_cast<size_t>(j)] = std::sqrt(s / n);
  }
  const double y_mean = mean_of(y);

  // Standardized columns; constant columns are excluded from the fit.
  Matrix xs(n, d);
  for (int j = 0; j < d; ++j) {
    const double sc = m.col_scale[static_cast<size_t>(j)];
    for (int i = 0; i < n; ++i)
      xs(i, j) = sc > 0.0 ? (x(i, j) - m.col_mean[static_cast<size_t>(j)]) / sc : 0.0;
  }

  std::vector<double> beta_s(static_cast<size_t>(d), 0.0);
  std::vector<double> resid(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) resid[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] - y_mean;

  constexpr int kMaxSweeps = 10000;
  // Tighter than the 1e-6 the alpha=0 least-squares bound suggests: on
  // ill-conditioned problems the sweep-to-sweep change underestimates the
  // remaining error by the contraction factor.
  constexpr double kTol = 1e-10;
  const double nd = static_cast<double>(n);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double max_delta = 0.0;
    for (int j = 0; j < d; ++j) {
      if (m.col_scale[static_cast<size_t>(j)] == 0.0) continue;
      double rho = 0.0;
      for (int i = 0; i < n; ++i) rho += xs(i, j) * resid[static_cast<size_t>(i)];
      rho = rho / nd + beta_s[static_cast<size_t>(j)];  // unit variance columns
      double next = 0.0;
      if (rho > alpha)
        next = rho - alpha;
      else if (rho < -alpha)
        next = rho + alpha;
      const double delta = next - beta_s[static_cast<size_t>(j)];
      if (delta != 0.0) {
        for (int i = 0; i < n; ++i) resid[static_cast<size_t>(i)] -= delta * xs(i, j);
        beta_s[static_cast<size_t>(j)] = next;
      }
      max_delta = std::max(max_delta, std::abs(delta));
    }
    double obj = 0.0;
    for (double r : resid) obj += r * r;
    obj /= 2.0 * nd;
    for (double b : beta_s) obj += alpha * std::abs(b);
    m.objective_history.push_back(obj);
#ifndef NDEBUG
    if (m.objective_history.size() > 1)
      assert(obj <= m.objective_history[m.objective_history.size() - 2] + 1e-12);
#endif
    if (max_delta < kTol) break;
  }

  m.beta.assign(static_cast<size_t>(d), 0.0);
  for (int j = 0; j < d; ++j)
    if (m.col_scale[static_cast<size_t>(j)] > 0.0)
      m.beta[static_cast<size_t>(j)] = beta_s[static_cast<size_t>(j)] / m.col_scale[static_cast<size_t>(j)];
  m.beta0 = y_mean;
  for (int j = 0; j < d; ++j)
    m.beta0 -= m.beta[static_cast<size_t>(j)] * m.col_mean[static_cast<size_t>(j)];
  return m;
}

double lasso_predict(const LassoModel& m, std::span<const double> x) {
  if (x.size() != m.beta.size()) throw std::invalid_argument("lasso_predict: dimension mismatch");
  double v = m.beta0;
  for (size_t j = 0; j < x.size(); ++j) v += m.beta[j] * x[j];
  return v;
}

namespace {

LassoModel fit_filtered(const std::vector<const MetaRecord*>& records,
                        const std::vector<int>& projection, const Standardizer& st,
                        double train_threshold, bool gap_target) {
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  for (const MetaRecord* r : records) {
    if (r->train_acc < train_threshold) continue;
    rows.push_back(standardize(st, project(r->features, projection)));
    targets.push_back(gap_target ? std::abs(r->test_acc - r->train_acc) : r->test_acc);
  }
  if (rows.empty())
    throw std::runtime_error("estimator fit: no records pass the training-accuracy threshold");
  Matrix x(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), x.row(static_cast<int>(i)));
  return lasso_fit(x, targets, 0.01);
}

}  // namespace

LassoModel fit_test_acc(const std::vector<const MetaRecord*>& records,
                        const std::vector<int>& projection, const Standardizer& st,
                        double train_threshold) {
  return fit_filtered(records, projection, st, train_threshold, false);
}

LassoModel fit_perf_gap(const std::vector<const MetaRecord*>& records,
                        const std::vector<int>& projection, const Standardizer& st,
                        double train_threshold) {
  return fit_filtered(records, projection, st, train_threshold, true);
}

double predict_clamped(const LassoModel& m, const Standardizer& st, std::span<const double> x) {
  const double v = lasso_predict(m, standardize(st, x));
  return std::clamp(v, 0.0, 1.0);
}

std::vector<double> task_delta(const std::vector<std::vector<double>>& on_new_task,
                               const std::vector<std::vector<double>>& on_own_task) {
  if (on_new_task.empty() || on_own_task.empty())
    throw std::invalid_argument("task_delta: empty batch list");
  const size_t dim = on_new_task.front().size();
  for (const auto& v : on_new_task)
    if (v.size() != dim) throw std::invalid_argument("task_delta: layout mismatch");
  for (const auto& v : on_own_task)
    if (v.size() != dim) throw std::invalid_argument("task_delta: layout mismatch");
  std::vector<double> out(dim, 0.0);
  for (const auto& v : on_new_task)
    for (size_t j = 0; j < dim; ++j) out[j] += v[j] / static_cast<double>(on_new_task.size());
  for (const auto& v : on_own_task)
    for (size_t j = 0; j < dim; ++j) out[j] -= v[j] / static_cast<double>(on_own_task.size());
  return out;
}

LassoModel fit_finetune(const std::vector<SimRecord>& records, double alpha) {
  if (records.empty()) throw std::invalid_argument("fit_finetune: no records");
  const int d = static_cast<int>(records.front().delta.size());
  Matrix x(static_cast<int>(records.size()), d);
  std::vector<double> y;
  y.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    if (static_cast<int>(records[i].delta.size()) != d)
      throw std::invalid_argument("fit_finetune: layout mismatch");
    std::copy(records[i].delta.begin(), records[i].delta.end(), x.row(static_cast<int>(i)));
    y.push_back(records[i].finetune_acc);
  }
  return lasso_fit(x, y, alpha);
}

std::string select_model(const std::vector<Candidate>& candidates, const LassoModel& model) {
  if (candidates.empty()) throw std::invalid_argument("select_model: no candidates");
  int best = 0;
  double best_pred = 0.0, best_norm = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double pred =
        std::clamp(lasso_predict(model, candidates[i].delta), 0.0, 1.0);
    double norm = 0.0;
    for (double v : candidates[i].delta) norm += v * v;
    if (i == 0 || pred > best_pred || (pred == best_pred && norm < best_norm)) {
      best = static_cast<int>(i);
      best_pred = pred;
      best_norm = norm;
    }
  }
  return candidates[static_cast<size_t>(best)].id;
}

}  // namespace topo
