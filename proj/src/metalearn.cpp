#include "topo/metalearn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace topo {

uint32_t family_bit_of(Family f) {
  switch (f) {
    case Family::A:
    case Family::APrime:
    case Family::ADouble:
      return kFamilyA;
    case Family::I:
    case Family::IPrime:
    case Family::IDouble:
      return kFamilyI;
    case Family::C:
      return kFamilyC;
    default:
      return kFamilyH;
  }
}

std::vector<uint8_t> correlation_mask(const std::vector<BankEntry>& records, double threshold) {
  if (records.size() < 2)
    throw std::invalid_argument("correlation_mask: need at least two records");
  const size_t dim = records.front().features.size();
  std::vector<double> acc;
  acc.reserve(records.size());
  for (const auto& r : records) acc.push_back(r.test_acc);
  const double acc_mean = mean_of(acc);
  double acc_var = 0.0;
  for (double a : acc) acc_var += (a - acc_mean) * (a - acc_mean);
  if (acc_var == 0.0) throw std::invalid_argument("correlation_mask: all accuracies identical");

  std::vector<uint8_t> mask(dim, 0);
  const double n = static_cast<double>(records.size());
  for (size_t j = 0; j < dim; ++j) {
    double fm = 0.0;
    for (const auto& r : records) fm += r.features[j];
    fm /= n;
    double fv = 0.0, cov = 0.0;
    for (size_t i = 0; i < records.size(); ++i) {
      const double d = records[i].features[j] - fm;
      fv += d * d;
      cov += d * (acc[i] - acc_mean);
    }
    if (fv == 0.0) continue;
    const double corr = cov / std::sqrt(fv * acc_var);
    if (std::abs(corr) >= threshold) mask[j] = 1;
  }
  return mask;
}

TopoBank build_bank(const std::vector<BankEntry>& records, const std::string& current_task,
                    const MetaConfig& cfg, uint64_t layout_hash) {
  if (records.empty()) throw std::invalid_argument("build_bank: no records");
  std::vector<BankEntry> pool;
  for (const auto& r : records)
    if (r.task_id != current_task) pool.push_back(r);
  if (pool.empty()) throw std::runtime_error("build_bank: no records from other tasks");

  TopoBank bank;
  bank.layout_hash = layout_hash;
  const size_t dim = pool.front().features.size();
  // sigma and mask come from every other-task record, admitted or not.
  bank.sigma.assign(dim, 0.0);
  std::vector<double> mean(dim, 0.0);
  const double n = static_cast<double>(pool.size());
  for (const auto& r : pool) {
    if (r.features.size() != dim) throw std::invalid_argument("build_bank: layout mismatch");
    for (size_t j = 0; j < dim; ++j) mean[j] += r.features[j];
  }
  for (double& v : mean) v /= n;
  for (const auto& r : pool)
    for (size_t j = 0; j < dim; ++j) {
      const double d = r.features[j] - mean[j];
      bank.sigma[j] += d * d;
    }
  for (double& v : bank.sigma) v = std::sqrt(v / n);
  bank.mask = correlation_mask(pool, cfg.corr_threshold);

  for (const auto& r : pool)
    if (r.test_acc >= cfg.test_threshold && r.perf_gap <= cfg.gap_threshold)
      bank.entries.push_back(r);
  if (bank.entries.empty())
    throw std::runtime_error("build_bank: no entries pass the admission thresholds");
  return bank;
}

double weighted_distance(std::span<const double> a, std::span<const double> b,
                         const TopoBank& bank) {
  if (a.size() != b.size() || a.size() != bank.sigma.size())
    throw std::invalid_argument("weighted_distance: layout mismatch");
  double sum = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    if (!bank.mask[j] || bank.sigma[j] <= 0.0) continue;
    sum += std::abs(a[j] - b[j]) / bank.sigma[j];
  }
  return sum / static_cast<double>(a.size());
}

TopoLoss topo_loss(std::span<const double> features, const TopoBank& bank,
                   const FeatureLayout& layout, const MetaConfig& cfg, Rng& rng) {
  if (bank.entries.empty()) throw std::invalid_argument("topo_loss: empty bank");
  if (features.size() != bank.sigma.size())
    throw std::invalid_argument("topo_loss: layout mismatch");
  const int bank_size = static_cast<int>(bank.entries.size());
  const int draw = std::min(cfg.sample_size, bank_size);
  const std::vector<int> sampled = rng.sample_indices(bank_size, draw);

  std::vector<std::pair<double, int>> dists;
  dists.reserve(sampled.size());
  for (int idx : sampled)
    dists.emplace_back(weighted_distance(features, bank.entries[static_cast<size_t>(idx)].features, bank),
                       idx);
  std::stable_sort(dists.begin(), dists.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  const int k = std::min(cfg.min_k, static_cast<int>(dists.size()));

  TopoLoss out;
  out.grad.assign(features.size(), 0.0);
  const double dim = static_cast<double>(features.size());
  for (int i = 0; i < k; ++i) {
    out.loss += dists[static_cast<size_t>(i)].first / k;
    const auto& entry = bank.entries[static_cast<size_t>(dists[static_cast<size_t>(i)].second)];
    for (size_t j = 0; j < features.size(); ++j) {
      if (!bank.mask[j] || bank.sigma[j] <= 0.0) continue;
      const double diff = features[j] - entry.features[j];
      const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      out.grad[j] += sgn / (bank.sigma[j] * dim * k);
    }
  }
  // Only the configured families' components feed gradients downstream.
  for (size_t j = 0; j < out.grad.size(); ++j)
    if ((family_bit_of(layout.entries[j].family) & cfg.families) == 0) out.grad[j] = 0.0;
  return out;
}

void save_bank(const TopoBank& bank, const std::string& path) {
  nlohmann::json j;
  j["format"] = "topo-bank";
  j["version"] = 1;
  j["layout_hash"] = bank.layout_hash;
  j["sigma"] = bank.sigma;
  j["mask"] = bank.mask;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : bank.entries) {
    entries.push_back({{"features", e.features},
                       {"task_id", e.task_id},
                       {"test_acc", e.test_acc},
                       {"perf_gap", e.perf_gap}});
  }
  j["entries"] = std::move(entries);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_bank: cannot open " + path);
  out << j.dump() << "\n";
}

TopoBank load_bank(const std::string& path, uint64_t expected_layout_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_bank: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "topo-bank" || j.value("version", 0) != 1)
    throw std::runtime_error("load_bank: unsupported bank format");
  TopoBank bank;
  bank.layout_hash = j.at("layout_hash").get<uint64_t>();
  if (bank.layout_hash != expected_layout_hash)
    throw std::runtime_error("load_bank: feature layout mismatch");
  bank.sigma = j.at("sigma").get<std::vector<double>>();
  bank.mask = j.at("mask").get<std::vector<uint8_t>>();
  for (const auto& e : j.at("entries")) {
    BankEntry be;
    be.features = e.at("features").get<std::vector<double>>();
    be.task_id = e.at("task_id").get<std::string>();
    be.test_acc = e.at("test_acc").get<double>();
    be.perf_gap = e.at("perf_gap").get<double>();
    bank.entries.push_back(std::move(be));
  }
  return bank;
}

MetaStepResult meta_train_step(DenseNet& net, const Matrix& x, const std::vector<int>& y,
                               const TopoBank& bank, const FeatureLayout& layout,
                               const ExtractionConfig& extraction, const MetaConfig& meta,
                               const TrainConfig& train_cfg, AdamState& state, int step_index) {
  const ActivationStats cache = forward(net, x);
  const CrossEntropy ce = cross_entropy(cache.logits(), y);
  Gradients grads = backward_cached(net, cache, y, nullptr);

  PointSetBundle bundle = build_bundle(net, cache, extraction);
  BundleSummary summary;
  const FeatureVector fv = summarize(bundle, layout, summary, extraction.parallel);

  Rng step_rng(mix_seed(meta.seed, static_cast<uint64_t>(step_index)));
  const TopoLoss tl = topo_loss(fv.values, bank, layout, meta, step_rng);

  if (meta.lambda != 0.0) {
    Gradients wg = feature_backward(bundle, summary, layout, tl.grad, net);
    const StatGrads sg = stat_backward(bundle, summary, layout, tl.grad, net.widths);
    bool any_stat = false;
    for (const auto& v : sg.mu)
      for (double g : v) any_stat = any_stat || g != 0.0;
    for (const auto& v : sg.sigma)
      for (double g : v) any_stat = any_stat || g != 0.0;
    if (any_stat) {
      const Gradients through_stats = stats_param_backward(net, cache, sg.mu, sg.sigma);
      axpy_gradients(1.0, through_stats, wg);
    }
    axpy_gradients(meta.lambda, wg, grads);
  }

  adam_step(net, grads, state, train_cfg);

  MetaStepResult res;
  res.conv_loss = ce.loss;
  res.tda_loss = tl.loss;
  res.total_loss = ce.loss + meta.lambda * tl.loss;
  return res;
}

}  // namespace topo
