#include "topo/topofeat.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace topo {

GMode gmode_from_string(const std::string& s) {
  if (s == "ph") return GMode::ph;
  if (s == "noph") return GMode::noph;
  if (s == "both") return GMode::both;
  throw std::invalid_argument("unknown g-mode: " + s);
}

std::string to_string(GMode m) {
  switch (m) {
    case GMode::ph: return "ph";
    case GMode::noph: return "noph";
    default: return "both";
  }
}

const char* family_name(Family f) {
  switch (f) {
    case Family::A: return "A";
    case Family::APrime: return "A'";
    case Family::ADouble: return "A''";
    case Family::I: return "I";
    case Family::IPrime: return "I'";
    case Family::IDouble: return "I''";
    case Family::C: return "C";
    default: return "H";
  }
}

namespace {

constexpr const char* kStatNames[4] = {"min", "max", "mean", "std"};
constexpr const char* kPartNames[2] = {"ph", "noph"};
constexpr const char* kAggNames[3] = {"mean", "std", "direct"};

// (part, stat) components of a g-vector in layout order for a mode.
std::vector<std::pair<int8_t, int8_t>> gvec_parts(GMode mode) {
  std::vector<std::pair<int8_t, int8_t>> out;
  if (mode != GMode::noph)
    for (int8_t s = 0; s < 4; ++s) out.emplace_back(0, s);
  if (mode != GMode::ph)
    for (int8_t s = 0; s < 4; ++s) out.emplace_back(1, s);
  return out;
}

void append_group_entries(FeatureLayout& layout, Family fam, int layer) {
  const auto parts = gvec_parts(layout.mode);
  for (int8_t agg = 0; agg < 2; ++agg)
    for (auto [part, stat] : parts)
      layout.entries.push_back(LayoutEntry{fam, layer, agg, part, stat, 0});
}

void append_h_entries(FeatureLayout& layout, int layer) {
  const auto parts = gvec_parts(layout.mode);
  for (int8_t sub = 0; sub < 2; ++sub)
    for (auto [part, stat] : parts)
      layout.entries.push_back(LayoutEntry{Family::H, layer, 2, part, stat, sub});
}

}  // namespace

FeatureLayout make_layout(int num_weight_layers, GMode mode) {
  if (num_weight_layers < 1) throw std::invalid_argument("make_layout: need at least one weight layer");
  FeatureLayout layout;
  layout.mode = mode;
  layout.num_weight_layers = num_weight_layers;
  for (int wl = 0; wl < num_weight_layers; ++wl) {
    append_group_entries(layout, Family::A, wl);
    append_group_entries(layout, Family::APrime, wl);
    append_group_entries(layout, Family::ADouble, wl);
  }
  for (int wl = 0; wl < num_weight_layers; ++wl) {
    append_group_entries(layout, Family::I, wl);
    append_group_entries(layout, Family::IPrime, wl);
    append_group_entries(layout, Family::IDouble, wl);
  }
  for (int layer = 1; layer <= num_weight_layers; ++layer)
    append_group_entries(layout, Family::C, layer);
  for (int layer = 1; layer <= num_weight_layers; ++layer) append_h_entries(layout, layer);
  return layout;
}

std::string FeatureLayout::to_text() const {
  std::ostringstream os;
  os << "# feature layout v1 mode=" << topo::to_string(mode)
     << " weight_layers=" << num_weight_layers << " components=" << entries.size() << "\n";
  os << "index,family,layer,agg,part,stat,sub\n";
  for (size_t i = 0; i < entries.size(); ++i) {
    const LayoutEntry& e = entries[i];
    os << i << ',' << family_name(e.family) << ',' << e.layer << ',' << kAggNames[e.agg] << ','
       << kPartNames[e.part] << ',' << kStatNames[e.stat] << ',' << static_cast<int>(e.sub)
       << "\n";
  }
  return os.str();
}

uint64_t FeatureLayout::hash() const { return hash_str(to_text()); }

std::vector<int> FeatureLayout::mode_projection(GMode submode) const {
  if (mode != GMode::both)
    throw std::invalid_argument("mode_projection: base layout must be g-mode both");
  std::vector<int> idx;
  const int8_t want = submode == GMode::noph ? 1 : 0;
  for (size_t i = 0; i < entries.size(); ++i)
    if (submode == GMode::both || entries[i].part == want) idx.push_back(static_cast<int>(i));
  return idx;
}

namespace {

BuiltSet finish_set(PointSet1D raw, std::vector<BuiltSet::WeightProv> prov,
                    std::vector<int32_t> nodes, Rng& rng) {
  BuiltSet s;
  s.raw = std::move(raw);
  DedupResult d = dedup_points(s.raw, rng);
  s.dedup = std::move(d.set);
  s.kept = std::move(d.kept);
  s.wprov = std::move(prov);
  s.node_idx = std::move(nodes);
  return s;
}

double abs_dcoef(double w, double sigma) {
  const double p = w * sigma;
  if (p > 0.0) return sigma;
  if (p < 0.0) return -sigma;
  return 0.0;
}

}  // namespace

PointSetBundle build_bundle(const DenseNet& net, const ActivationStats& stats,
                            const ExtractionConfig& cfg) {
  if (cfg.subset_count < 1 || cfg.subset_size < 1)
    throw std::invalid_argument("build_bundle: subset spec must be positive");
  if (cfg.cov_cap < 2) throw std::invalid_argument("build_bundle: covariance cap must be >= 2");
  if (stats.samples() < 2)
    throw std::invalid_argument("build_bundle: need at least two samples for covariance sets");
  const int L = net.num_weight_layers();
  if (static_cast<int>(stats.activations.size()) != L + 1)
    throw std::invalid_argument("build_bundle: stats do not match network depth");

  Rng rng(cfg.seed);

  // Random choices are drawn up front in a fixed order; set construction
  // below only consumes rng draws for duplicate-point resolution.
  std::vector<std::vector<std::vector<int>>> subJ(static_cast<size_t>(L)), subK(static_cast<size_t>(L));
  for (int wl = 0; wl < L; ++wl) {
    const int nj = std::min(cfg.subset_size, net.widths[static_cast<size_t>(wl)]);
    const int nk = std::min(cfg.subset_size, net.widths[static_cast<size_t>(wl) + 1]);
    for (int l = 0; l < cfg.subset_count; ++l) {
      subJ[static_cast<size_t>(wl)].push_back(rng.sample_indices(net.widths[static_cast<size_t>(wl)], nj));
      subK[static_cast<size_t>(wl)].push_back(rng.sample_indices(net.widths[static_cast<size_t>(wl) + 1], nk));
    }
  }

  std::vector<std::vector<std::vector<NodeRef>>> partners;  // [layer-1][node]
  if (cfg.cov_variant == CovVariant::all_nodes) {
    partners.resize(static_cast<size_t>(L));
    for (int layer = 1; layer <= L; ++layer) {
      std::vector<NodeRef> pool;
      for (int other = 1; other <= L; ++other) {
        if (other == layer) continue;
        for (int nn = 0; nn < net.widths[static_cast<size_t>(other)]; ++nn)
          pool.push_back(NodeRef{other, nn});
      }
      if (pool.empty())
        throw std::invalid_argument("build_bundle: empty covariance partner pool");
      auto& per_node = partners[static_cast<size_t>(layer) - 1];
      per_node.resize(static_cast<size_t>(net.widths[static_cast<size_t>(layer)]));
      for (auto& sel : per_node) {
        if (static_cast<int>(pool.size()) <= cfg.cov_cap) {
          sel = pool;
        } else {
          for (int idx : rng.sample_indices(static_cast<int>(pool.size()), cfg.cov_cap))
            sel.push_back(pool[static_cast<size_t>(idx)]);
        }
      }
    }
  }

  PointSetBundle bundle;
  bundle.num_weight_layers = L;
  bundle.widths = net.widths;

  const auto push_group = [&](Family fam, int layer) -> SetGroup& {
    bundle.groups.push_back(SetGroup{fam, layer, {}});
    return bundle.groups.back();
  };

  const auto build_ai = [&](int wl, bool use_sigma) {
    const Matrix& w = net.weights[static_cast<size_t>(wl)];
    const auto& mu = stats.mu[static_cast<size_t>(wl)];
    const auto& sg = stats.sigma[static_cast<size_t>(wl)];
    // Outgoing sets: one per source node j, scaled by that node's statistic.
    SetGroup& out = push_group(use_sigma ? Family::I : Family::A, wl);
    for (int j = 0; j < w.rows; ++j) {
      PointSet1D raw;
      std::vector<BuiltSet::WeightProv> prov;
      const double scale = use_sigma ? sg[static_cast<size_t>(j)] : mu[static_cast<size_t>(j)];
      for (int k = 0; k < w.cols; ++k) {
        const double wv = w(j, k);
        raw.values.push_back(use_sigma ? std::abs(wv * scale) : wv * scale);
        prov.push_back({wl, j, k, use_sigma ? abs_dcoef(wv, scale) : scale});
      }
      out.sets.push_back(finish_set(std::move(raw), std::move(prov), {}, rng));
    }
    // Incoming sets: one per target node, scaled by each source node's statistic.
    SetGroup& in = push_group(use_sigma ? Family::IPrime : Family::APrime, wl);
    for (int j = 0; j < w.cols; ++j) {
      PointSet1D raw;
      std::vector<BuiltSet::WeightProv> prov;
      for (int k = 0; k < w.rows; ++k) {
        const double wv = w(k, j);
        const double scale = use_sigma ? sg[static_cast<size_t>(k)] : mu[static_cast<size_t>(k)];
        raw.values.push_back(use_sigma ? std::abs(wv * scale) : wv * scale);
        prov.push_back({wl, k, j, use_sigma ? abs_dcoef(wv, scale) : scale});
      }
      in.sets.push_back(finish_set(std::move(raw), std::move(prov), {}, rng));
    }
    // Random-subset sets shared between the mean and std flavors.
    SetGroup& sub = push_group(use_sigma ? Family::IDouble : Family::ADouble, wl);
    for (int l = 0; l < cfg.subset_count; ++l) {
      PointSet1D raw;
      std::vector<BuiltSet::WeightProv> prov;
      for (int j : subJ[static_cast<size_t>(wl)][static_cast<size_t>(l)]) {
        const double scale = use_sigma ? sg[static_cast<size_t>(j)] : mu[static_cast<size_t>(j)];
        for (int k : subK[static_cast<size_t>(wl)][static_cast<size_t>(l)]) {
          const double wv = w(j, k);
          raw.values.push_back(use_sigma ? std::abs(wv * scale) : wv * scale);
          prov.push_back({wl, j, k, use_sigma ? abs_dcoef(wv, scale) : scale});
        }
      }
      sub.sets.push_back(finish_set(std::move(raw), std::move(prov), {}, rng));
    }
  };

  for (int wl = 0; wl < L; ++wl) build_ai(wl, false);
  for (int wl = 0; wl < L; ++wl) build_ai(wl, true);

  for (int layer = 1; layer <= L; ++layer) {
    SetGroup& grp = push_group(Family::C, layer);
    const int width = net.widths[static_cast<size_t>(layer)];
    if (cfg.cov_variant == CovVariant::all_nodes) {
      for (int j = 0; j < width; ++j) {
        PointSet1D raw;
        for (const NodeRef& p : partners[static_cast<size_t>(layer) - 1][static_cast<size_t>(j)])
          raw.values.push_back(covariance(stats, NodeRef{layer, j}, p));
        grp.sets.push_back(finish_set(std::move(raw), {}, {}, rng));
      }
    } else {
      const int classes = net.widths.back();
      for (int c = 0; c < classes; ++c) {
        PointSet1D raw;
        for (int j = 0; j < width; ++j)
          raw.values.push_back(covariance(stats, NodeRef{layer, j}, NodeRef{L, c}));
        grp.sets.push_back(finish_set(std::move(raw), {}, {}, rng));
      }
    }
  }

  for (int layer = 1; layer <= L; ++layer) {
    SetGroup& grp = push_group(Family::H, layer);
    const int width = net.widths[static_cast<size_t>(layer)];
    PointSet1D mu_raw, sg_raw;
    std::vector<int32_t> nodes(static_cast<size_t>(width));
    for (int j = 0; j < width; ++j) {
      mu_raw.values.push_back(stats.mu[static_cast<size_t>(layer)][static_cast<size_t>(j)]);
      sg_raw.values.push_back(stats.sigma[static_cast<size_t>(layer)][static_cast<size_t>(j)]);
      nodes[static_cast<size_t>(j)] = j;
    }
    grp.sets.push_back(finish_set(std::move(mu_raw), {}, std::vector<int32_t>(nodes), rng));
    grp.sets.push_back(finish_set(std::move(sg_raw), {}, std::move(nodes), rng));
  }

  return bundle;
}

namespace {

std::array<double, 8> set_stats8(const BuiltSet& s) {
  const TopoStats ph = g_ph(s.dedup);
  const TopoStats raw = g_noph(s.raw);
  return {ph.min, ph.max, ph.mean, ph.stddev, raw.min, raw.max, raw.mean, raw.stddev};
}

int comp_index(const LayoutEntry& e) { return e.part * 4 + e.stat; }

// Per-component mean/std across a group's per-set statistics (the g'
// aggregation). When a component is constant across the sets (narrow layers
// make every random subset identical) the std is exactly zero; computing it
// naively leaves rounding noise that the backward pass would divide by.
void group_aggregate(const std::vector<std::array<double, 8>>& st, std::array<double, 8>& cmean,
                     std::array<double, 8>& cstd) {
  const double m = static_cast<double>(st.size());
  for (int c = 0; c < 8; ++c) {
    double lo = st[0][static_cast<size_t>(c)], hi = lo;
    for (const auto& s : st) {
      lo = std::min(lo, s[static_cast<size_t>(c)]);
      hi = std::max(hi, s[static_cast<size_t>(c)]);
    }
    if (lo == hi) {
      cmean[static_cast<size_t>(c)] = lo;
      cstd[static_cast<size_t>(c)] = 0.0;
      continue;
    }
    double mean = 0.0;
    for (const auto& s : st) mean += s[static_cast<size_t>(c)];
    mean /= m;
    double var = 0.0;
    for (const auto& s : st) {
      const double d = s[static_cast<size_t>(c)] - mean;
      var += d * d;
    }
    cmean[static_cast<size_t>(c)] = mean;
    cstd[static_cast<size_t>(c)] = std::sqrt(var / m);
  }
}

FeatureVector assemble(const PointSetBundle& bundle, const FeatureLayout& layout,
                       const BundleSummary& summary) {
  FeatureVector fv;
  fv.layout_hash = layout.hash();
  fv.values.reserve(layout.entries.size());
  size_t cursor = 0;
  for (size_t g = 0; g < bundle.groups.size(); ++g) {
    const SetGroup& grp = bundle.groups[g];
    if (grp.sets.empty()) throw std::runtime_error("summarize: empty point-set family");
    const auto& st = summary.set_stats[g];
    std::array<double, 8> cmean{}, cstd{};
    group_aggregate(st, cmean, cstd);

    while (cursor < layout.entries.size()) {
      const LayoutEntry& e = layout.entries[cursor];
      if (e.family != grp.family || e.layer != grp.layer) break;
      const int c = comp_index(e);
      if (e.agg == 2) {
        fv.values.push_back(st[static_cast<size_t>(e.sub)][static_cast<size_t>(c)]);
      } else {
        fv.values.push_back(e.agg == 0 ? cmean[static_cast<size_t>(c)] : cstd[static_cast<size_t>(c)]);
      }
      ++cursor;
    }
  }
  if (cursor != layout.entries.size())
    throw std::invalid_argument("summarize: layout does not match bundle");
  return fv;
}

void compute_summary(const PointSetBundle& bundle, BundleSummary& summary, bool parallel) {
  summary.set_stats.assign(bundle.groups.size(), {});
  std::vector<std::pair<int, int>> flat;  // (group, set)
  for (size_t g = 0; g < bundle.groups.size(); ++g) {
    summary.set_stats[g].resize(bundle.groups[g].sets.size());
    for (size_t s = 0; s < bundle.groups[g].sets.size(); ++s)
      flat.emplace_back(static_cast<int>(g), static_cast<int>(s));
  }
  const int total = static_cast<int>(flat.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < total; ++i) {
      const auto [g, s] = flat[static_cast<size_t>(i)];
      summary.set_stats[static_cast<size_t>(g)][static_cast<size_t>(s)] =
          set_stats8(bundle.groups[static_cast<size_t>(g)].sets[static_cast<size_t>(s)]);
    }
  } else {
    for (int i = 0; i < total; ++i) {
      const auto [g, s] = flat[static_cast<size_t>(i)];
      summary.set_stats[static_cast<size_t>(g)][static_cast<size_t>(s)] =
          set_stats8(bundle.groups[static_cast<size_t>(g)].sets[static_cast<size_t>(s)]);
    }
  }
}

}  // namespace

FeatureVector summarize(const PointSetBundle& bundle, const FeatureLayout& layout,
                        BundleSummary& summary, bool parallel) {
  compute_summary(bundle, summary, parallel);
  return assemble(bundle, layout, summary);
}

FeatureVector summarize_serial(const PointSetBundle& bundle, const FeatureLayout& layout,
                               BundleSummary& summary) {
  return summarize(bundle, layout, summary, false);
}

Extraction extract(const DenseNet& net, const ActivationStats& stats,
                   const ExtractionConfig& cfg, GMode mode) {
  Extraction ex;
  ex.bundle = build_bundle(net, stats, cfg);
  const FeatureLayout layout = make_layout(net.num_weight_layers(), mode);
  ex.features = summarize(ex.bundle, layout, ex.summary, cfg.parallel);
  return ex;
}

namespace {

// Distributes upstream gradients on one group's layout block down to per-set
// per-component gradients (inverting the g' mean/std aggregation, or passing
// through for the direct H block). Returns one 8-vector per set.
std::vector<std::array<double, 8>> group_set_upstream(const SetGroup& grp,
                                                      const std::vector<std::array<double, 8>>& st,
                                                      const FeatureLayout& layout,
                                                      const std::vector<double>& upstream,
                                                      size_t& cursor) {
  const size_t m = st.size();
  std::vector<std::array<double, 8>> out(m, std::array<double, 8>{});
  std::array<double, 8> up_mean{}, up_std{}, cmean{}, cstd{};
  std::array<std::array<double, 8>, 2> up_direct{};  // H block: per (mu, sigma) set

  bool any_agg = false, any_direct = false;
  while (cursor < layout.entries.size()) {
    const LayoutEntry& e = layout.entries[cursor];
    if (e.family != grp.family || e.layer != grp.layer) break;
    const int c = comp_index(e);
    const double u = upstream[cursor];
    if (e.agg == 2) {
      up_direct[static_cast<size_t>(e.sub)][static_cast<size_t>(c)] += u;
      any_direct = true;
    } else if (e.agg == 0) {
      up_mean[static_cast<size_t>(c)] += u;
      any_agg = true;
    } else {
      up_std[static_cast<size_t>(c)] += u;
      any_agg = true;
    }
    ++cursor;
  }

  if (any_direct) {
    for (size_t s = 0; s < m && s < 2; ++s) out[s] = up_direct[s];
    return out;
  }
  if (!any_agg) return out;

  const double md = static_cast<double>(m);
  group_aggregate(st, cmean, cstd);

  for (size_t s = 0; s < m; ++s)
    for (int c = 0; c < 8; ++c) {
      double g = up_mean[static_cast<size_t>(c)] / md;
      if (cstd[static_cast<size_t>(c)] > 0.0)
        g += up_std[static_cast<size_t>(c)] *
             (st[s][static_cast<size_t>(c)] - cmean[static_cast<size_t>(c)]) /
             (md * cstd[static_cast<size_t>(c)]);
      out[s][static_cast<size_t>(c)] = g;
    }
  return out;
}

// Gradient on each raw point of one set, given upstream on its 8 g_both
// components. The ph part routes through the persistence pairs of the
// deduplicated set; the noph part differentiates the raw statistics.
std::vector<double> set_point_grads(const BuiltSet& s, const std::array<double, 8>& up) {
  std::vector<double> grads(s.raw.values.size(), 0.0);
  const bool want_ph = up[0] != 0.0 || up[1] != 0.0 || up[2] != 0.0 || up[3] != 0.0;
  const bool want_raw = up[4] != 0.0 || up[5] != 0.0 || up[6] != 0.0 || up[7] != 0.0;
  if (want_ph) {
    const DeathRecord rec = zero_dim_deaths(s.dedup);
    const TopoStats u{up[0], up[1], up[2], up[3]};
    const std::vector<double> g = stats_backward(s.dedup, rec, u);
    for (size_t i = 0; i < g.size(); ++i) grads[static_cast<size_t>(s.kept[i])] += g[i];
  }
  if (want_raw) {
    const TopoStats u{up[4], up[5], up[6], up[7]};
    const std::vector<double> g = raw_stats_backward(s.raw, u);
    for (size_t i = 0; i < g.size(); ++i) grads[i] += g[i];
  }
  return grads;
}

}  // namespace

Gradients feature_backward(const PointSetBundle& bundle, const BundleSummary& summary,
                           const FeatureLayout& layout, const std::vector<double>& upstream,
                           const DenseNet& net) {
  if (upstream.size() != layout.entries.size())
    throw std::invalid_argument("feature_backward: upstream length does not match layout");
  Gradients g = zero_gradients(net);
  size_t cursor = 0;
  for (size_t gi = 0; gi < bundle.groups.size(); ++gi) {
    const SetGroup& grp = bundle.groups[gi];
    const auto set_up = group_set_upstream(grp, summary.set_stats[gi], layout, upstream, cursor);
    if (grp.family == Family::C || grp.family == Family::H) continue;  // no weight route
    for (size_t s = 0; s < grp.sets.size(); ++s) {
      const auto& up = set_up[s];
      bool any = false;
      for (double u : up) any = any || u != 0.0;
      if (!any) continue;
      const BuiltSet& bs = grp.sets[s];
      const std::vector<double> pg = set_point_grads(bs, up);
      for (size_t p = 0; p < pg.size(); ++p) {
        if (pg[p] == 0.0) continue;
        const auto& pr = bs.wprov[p];
        g.weights[static_cast<size_t>(pr.wlayer)](pr.row, pr.col) += pg[p] * pr.dcoef;
      }
    }
  }
  if (cursor != layout.entries.size())
    throw std::invalid_argument("feature_backward: layout does not match bundle");
  return g;
}

StatGrads stat_backward(const PointSetBundle& bundle, const BundleSummary& summary,
                        const FeatureLayout& layout, const std::vector<double>& upstream,
                        const std::vector<int>& widths) {
  if (upstream.size() != layout.entries.size())
    throw std::invalid_argument("stat_backward: upstream length does not match layout");
  StatGrads sg;
  sg.mu.resize(widths.size());
  sg.sigma.resize(widths.size());
  for (size_t l = 0; l < widths.size(); ++l) {
    sg.mu[l].assign(static_cast<size_t>(widths[l]), 0.0);
    sg.sigma[l].assign(static_cast<size_t>(widths[l]), 0.0);
  }
  size_t cursor = 0;
  for (size_t gi = 0; gi < bundle.groups.size(); ++gi) {
    const SetGroup& grp = bundle.groups[gi];
    const auto set_up = group_set_upstream(grp, summary.set_stats[gi], layout, upstream, cursor);
    if (grp.family != Family::H) continue;
    for (size_t s = 0; s < grp.sets.size(); ++s) {
      const auto& up = set_up[s];
      bool any = false;
      for (double u : up) any = any || u != 0.0;
      if (!any) continue;
      const BuiltSet& bs = grp.sets[s];
      const std::vector<double> pg = set_point_grads(bs, up);
      auto& target = s == 0 ? sg.mu[static_cast<size_t>(grp.layer)] : sg.sigma[static_cast<size_t>(grp.layer)];
      for (size_t p = 0; p < pg.size(); ++p)
        target[static_cast<size_t>(bs.node_idx[p])] += pg[p];
    }
  }
  return sg;
}

// --- Convolutional characterization ---

ConvFeatures conv_extract(const Tensor4& filters, const Tensor4& activations,
                          const std::vector<std::vector<double>>& partner_activations,
                          GMode mode, const ExtractionConfig& cfg) {
  const int n = activations.d0, chan = activations.d1, height = activations.d2, width = activations.d3;
  const int out_c = filters.d0, in_c = filters.d1, k = filters.d2;
  if (filters.d2 != filters.d3) throw std::invalid_argument("conv_extract: filters must be square");
  if (in_c != chan) throw std::invalid_argument("conv_extract: channel mismatch");
  if (k > height || k > width)
    throw std::invalid_argument("conv_extract: kernel larger than spatial extent");

  // Sliding-window mean/std seen by each filter element (channel, dy, dx).
  const int ph = height - k + 1, pw = width - k + 1;
  const double cnt = static_cast<double>(n) * ph * pw;
  Tensor4 win_mu(1, chan, k, k), win_sg(1, chan, k, k);
  for (int c = 0; c < chan; ++c)
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx) {
        double s = 0.0;
        for (int s0 = 0; s0 < n; ++s0)
          for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) s += activations.at(s0, c, dy + y, dx + x);
        const double m = s / cnt;
        double v = 0.0;
        for (int s0 = 0; s0 < n; ++s0)
          for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) {
              const double d = activations.at(s0, c, dy + y, dx + x) - m;
              v += d * d;
            }
        win_mu.at(0, c, dy, dx) = m;
        win_sg.at(0, c, dy, dx) = std::sqrt(v / cnt);
      }

  Rng rng(cfg.seed);
  const auto parts = gvec_parts(mode);
  ConvFeatures out;

  const auto gvec_of = [&](const PointSet1D& raw) {
    DedupResult d = dedup_points(raw, rng);
    const TopoStats ph_st = g_ph(d.set);
    const TopoStats raw_st = g_noph(raw);
    std::vector<double> v;
    for (auto [part, stat] : parts) {
      const TopoStats& st = part == 0 ? ph_st : raw_st;
      const double vals[4] = {st.min, st.max, st.mean, st.stddev};
      v.push_back(vals[stat]);
    }
    return v;
  };

  const auto emit_gprime = [&](const std::string& label,
                               const std::vector<std::vector<double>>& gvecs) {
    const size_t m = gvecs.size();
    const size_t dim = gvecs.front().size();
    for (int agg = 0; agg < 2; ++agg)
      for (size_t c = 0; c < dim; ++c) {
        double lo = gvecs.front()[c], hi = lo;
        for (const auto& gv : gvecs) {
          lo = std::min(lo, gv[c]);
          hi = std::max(hi, gv[c]);
        }
        double val;
        if (lo == hi) {
          val = agg == 0 ? lo : 0.0;
        } else {
          double mean = 0.0;
          for (const auto& gv : gvecs) mean += gv[c];
          mean /= static_cast<double>(m);
          val = mean;
          if (agg == 1) {
            double sd = 0.0;
            for (const auto& gv : gvecs) sd += (gv[c] - mean) * (gv[c] - mean);
            val = std::sqrt(sd / static_cast<double>(m));
          }
        }
        out.values.push_back(val);
        out.names.push_back(label + (agg == 0 ? ".mean[" : ".std[") + std::to_string(c) + "]");
      }
  };

  // Per-filter sets: all in-channel x k x k scaled weights for one output channel.
  std::vector<std::vector<double>> a_sets, i_sets;
  for (int oc = 0; oc < out_c; ++oc) {
    PointSet1D a_raw, i_raw;
    for (int c = 0; c < in_c; ++c)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const double w = filters.at(oc, c, dy, dx);
          a_raw.values.push_back(w * win_mu.at(0, c, dy, dx));
          i_raw.values.push_back(std::abs(w * win_sg.at(0, c, dy, dx)));
        }
    a_sets.push_back(gvec_of(a_raw));
    i_sets.push_back(gvec_of(i_raw));
  }
  emit_gprime("Aconv", a_sets);
  emit_gprime("Iconv", i_sets);

  // Per-sample channel means, collapsed over space.
  std::vector<std::vector<double>> chan_means(static_cast<size_t>(chan),
                                              std::vector<double>(static_cast<size_t>(n)));
  for (int c = 0; c < chan; ++c)
    for (int s0 = 0; s0 < n; ++s0) {
      double s = 0.0;
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) s += activations.at(s0, c, y, x);
      chan_means[static_cast<size_t>(c)][static_cast<size_t>(s0)] =
          s / (static_cast<double>(height) * width);
    }

  if (!partner_activations.empty()) {
    std::vector<std::vector<double>> c_sets;
    for (int c = 0; c < chan; ++c) {
      PointSet1D raw;
      const auto& cm = chan_means[static_cast<size_t>(c)];
      const double m1 = mean_of(cm);
      for (const auto& p : partner_activations) {
        if (p.size() != static_cast<size_t>(n))
          throw std::invalid_argument("conv_extract: partner sample count mismatch");
        const double m2 = mean_of(p);
        double cov = 0.0;
        for (int s0 = 0; s0 < n; ++s0)
          cov += (cm[static_cast<size_t>(s0)] - m1) * (p[static_cast<size_t>(s0)] - m2);
        raw.values.push_back(cov / static_cast<double>(n));
      }
      c_sets.push_back(gvec_of(raw));
    }
    emit_gprime("Cconv", c_sets);
  }

  // Channel-collapsed statistics of the layer: mean/std across samples of the
  // per-sample channel means, one point per channel, summarized directly.
  PointSet1D h_mu, h_sg;
  for (int c = 0; c < chan; ++c) {
    h_mu.values.push_back(mean_of(chan_means[static_cast<size_t>(c)]));
    h_sg.values.push_back(pop_std(chan_means[static_cast<size_t>(c)]));
  }
  const std::vector<double> hmu_g = gvec_of(h_mu);
  const std::vector<double> hsg_g = gvec_of(h_sg);
  for (size_t c = 0; c < hmu_g.size(); ++c) {
    out.values.push_back(hmu_g[c]);
    out.names.push_back("Hconv.mu[" + std::to_string(c) + "]");
  }
  for (size_t c = 0; c < hsg_g.size(); ++c) {
    out.values.push_back(hsg_g[c]);
    out.names.push_back("Hconv.sigma[" + std::to_string(c) + "]");
  }
  return out;
}

}  // namespace topo
