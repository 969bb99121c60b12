#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "topo/autonet.hpp"
#include "topo/persistence.hpp"

namespace topo {

enum class GMode { ph, noph, both };

GMode gmode_from_string(const std::string& s);
std::string to_string(GMode m);

enum class CovVariant { all_nodes, per_class };

struct ExtractionConfig {
  int subset_count = 10;   // random node subsets per weight layer
  int subset_size = 10;    // nodes per subset (clipped to layer width)
  CovVariant cov_variant = CovVariant::all_nodes;
  int cov_cap = 50;        // partner nodes per source node (all_nodes variant)
  uint64_t seed = 0;
  bool parallel = true;    // OpenMP summarization; serial path kept for testing
};

// Point-set families of the characterization. A/I look at one node's
// outgoing weights, A'/I' at one node's incoming weights, A''/I'' at random
// weight subsets of a layer, C at activation covariances, H at the per-layer
// activation statistics themselves.
enum class Family : uint8_t { A, APrime, ADouble, I, IPrime, IDouble, C, H };

const char* family_name(Family f);

// One component of the flat feature vector.
struct LayoutEntry {
  Family family;
  int layer;    // weight-layer index for A/I families, activation layer for C/H
  int8_t agg;   // 0 = mean over sets, 1 = std over sets, 2 = direct (H block)
  int8_t part;  // 0 = ph, 1 = noph
  int8_t stat;  // 0 min, 1 max, 2 mean, 3 std
  int8_t sub;   // H block: 0 = mean-activation set, 1 = std-activation set
};

// Deterministic component schema for one architecture and g-mode. Block
// order: all A-blocks by weight layer, then I-blocks, then C per layer,
// then H per layer. C and H cover the hidden layers plus the logits.
struct FeatureLayout {
  GMode mode = GMode::both;
  int num_weight_layers = 0;
  std::vector<LayoutEntry> entries;

  int size() const { return static_cast<int>(entries.size()); }
  uint64_t hash() const;
  std::string to_text() const;  // schema file content, one line per component

  // Indices of this (both-mode) layout's components that form the given
  // sub-mode layout, in sub-mode order.
  std::vector<int> mode_projection(GMode submode) const;
};

FeatureLayout make_layout(int num_weight_layers, GMode mode);

struct FeatureVector {
  std::vector<double> values;
  uint64_t layout_hash = 0;
};

// One constructed point set plus everything needed to push gradients back:
// the raw multiset (g_noph path), its deduplicated version with the
// surviving original indices (g_ph path), and per-point provenance.
struct BuiltSet {
  PointSet1D raw;
  PointSet1D dedup;
  std::vector<int> kept;  // dedup position -> raw position
  // Weight-route provenance (A/I families): point p = dcoef * w + const,
  // so d p / d w = dcoef with the activation statistic frozen.
  struct WeightProv {
    int32_t wlayer, row, col;
    double dcoef;
  };
  std::vector<WeightProv> wprov;  // per raw point; empty for C/H
  // H-family provenance: which node's mu or sigma this point is.
  std::vector<int32_t> node_idx;  // per raw point; empty otherwise
};

struct SetGroup {
  Family family;
  int layer;
  std::vector<BuiltSet> sets;  // H groups hold exactly two sets (mu, sigma)
};

struct PointSetBundle {
  std::vector<SetGroup> groups;  // in layout block order
  int num_weight_layers = 0;
  std::vector<int> widths;
};

// Constructs every point set with provenance. Random subset indices and
// covariance partners are drawn once per call from cfg.seed; duplicate
// points are resolved here (seeded) so summarization stays rng-free.
PointSetBundle build_bundle(const DenseNet& net, const ActivationStats& stats,
                            const ExtractionConfig& cfg);

// Per-set g_both results, kept for the backward pass.
struct BundleSummary {
  std::vector<std::vector<std::array<double, 8>>> set_stats;  // [group][set]
};

// Forward aggregation of a bundle into the flat feature vector. `parallel`
// distributes the per-set statistics across OpenMP threads; the serial
// variant is the reference both must match bitwise.
FeatureVector summarize(const PointSetBundle& bundle, const FeatureLayout& layout,
                        BundleSummary& summary, bool parallel = true);
FeatureVector summarize_serial(const PointSetBundle& bundle, const FeatureLayout& layout,
                               BundleSummary& summary);

struct Extraction {
  FeatureVector features;
  PointSetBundle bundle;
  BundleSummary summary;
};

// build_bundle + summarize against the layout implied by the network shape.
Extraction extract(const DenseNet& net, const ActivationStats& stats,
                   const ExtractionConfig& cfg, GMode mode);

// Chain rule from a gradient on the feature vector back to the weights.
// Only the explicit weight factors of the A/I families carry gradient; the
// activation statistics and covariances inside point definitions are treated
// as constants.
Gradients feature_backward(const PointSetBundle& bundle, const BundleSummary& summary,
                           const FeatureLayout& layout, const std::vector<double>& upstream,
                           const DenseNet& net);

// Gradient of the H-family components with respect to the per-node activation
// means and stds (one vector per activation layer). Push the result through
// autonet::stats_param_backward to reach the parameters.
struct StatGrads {
  std::vector<std::vector<double>> mu;
  std::vector<std::vector<double>> sigma;
};

StatGrads stat_backward(const PointSetBundle& bundle, const BundleSummary& summary,
                        const FeatureLayout& layout, const std::vector<double>& upstream,
                        const std::vector<int>& widths);

// --- Convolutional characterization (forward-only) ---

struct Tensor4 {
  int d0 = 0, d1 = 0, d2 = 0, d3 = 0;
  std::vector<double> data;
  Tensor4() = default;
  Tensor4(int a, int b, int c, int d)
      : d0(a), d1(b), d2(c), d3(d),
        data(static_cast<size_t>(a) * b * c * d, 0.0) {}
  double& at(int a, int b, int c, int d) {
    return data[((static_cast<size_t>(a) * d1 + b) * d2 + c) * d3 + d];
  }
  double at(int a, int b, int c, int d) const {
    return data[((static_cast<size_t>(a) * d1 + b) * d2 + c) * d3 + d];
  }
};

struct ConvFeatures {
  std::vector<double> values;
  std::vector<std::string> names;
};

// Topological block for one convolutional layer: per-filter scaled-weight
// sets (one per output channel), channel-collapsed activation statistics,
// and covariances of per-sample channel means against caller-supplied
// partner activation vectors (the C block is omitted when none are given).
// activations: (samples, channels, height, width); filters: (out, in, k, k).
ConvFeatures conv_extract(const Tensor4& filters, const Tensor4& activations,
                          const std::vector<std::vector<double>>& partner_activations,
                          GMode mode, const ExtractionConfig& cfg);

}  // namespace topo
