#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topo/autonet.hpp"
#include "topo/estimators.hpp"
#include "topo/topofeat.hpp"

namespace topo {

// Feature families whose components may carry gradient in the topological
// loss. The A/I bits route through the explicit weight factors of their
// point sets; the H bit routes through the activation statistics; C
// components never reach the parameters (covariances are held constant).
enum FamilyBit : uint32_t {
  kFamilyA = 1u << 0,
  kFamilyI = 1u << 1,
  kFamilyC = 1u << 2,
  kFamilyH = 1u << 3,
};

uint32_t family_bit_of(Family f);

struct MetaConfig {
  double lambda = 0.05;
  int sample_size = 25;       // bank entries drawn per step
  int min_k = 5;              // closest entries averaged into the loss
  double corr_threshold = 0.6;
  double test_threshold = 0.99;   // bank admission: test accuracy >=
  double gap_threshold = 0.02;    // bank admission: |test - train| <=
  uint32_t families = kFamilyH;   // components whose gradient is applied
  int steps = 100;
  uint64_t seed = 0;
};

struct BankEntry {
  std::vector<double> features;
  std::string task_id;
  double test_acc = 0.0;
  double perf_gap = 0.0;
};

// Learning-consistent feature bank. sigma and the correlation mask come from
// the full record set (not only the admitted entries); entries from the
// current task are never admitted.
struct TopoBank {
  std::vector<BankEntry> entries;
  std::vector<double> sigma;
  std::vector<uint8_t> mask;
  uint64_t layout_hash = 0;
};

// `records` carry mode-sliced features. Throws if no record survives the
// admission filter (insufficient prior data).
TopoBank build_bank(const std::vector<BankEntry>& records, const std::string& current_task,
                    const MetaConfig& cfg, uint64_t layout_hash);

// mask_j = 1 iff |pearson(feature_j, test_acc)| >= threshold. Zero-variance
// components get 0; throws when every accuracy is identical.
std::vector<uint8_t> correlation_mask(const std::vector<BankEntry>& records, double threshold);

// Masked, sigma-normalized mean absolute difference. Components with zero
// sigma contribute nothing.
double weighted_distance(std::span<const double> a, std::span<const double> b,
                         const TopoBank& bank);

struct TopoLoss {
  double loss = 0.0;
  std::vector<double> grad;  // on the feature vector, family-restricted
};

// Average weighted distance to the min_k closest of a random bank subsample.
// The subsample is redrawn from `rng` on every call.
TopoLoss topo_loss(std::span<const double> features, const TopoBank& bank,
                   const FeatureLayout& layout, const MetaConfig& cfg, Rng& rng);

// Bank serialization; loading refuses a mismatched feature layout.
void save_bank(const TopoBank& bank, const std::string& path);
TopoBank load_bank(const std::string& path, uint64_t expected_layout_hash);

struct MetaStepResult {
  double conv_loss = 0.0;
  double tda_loss = 0.0;
  double total_loss = 0.0;
};

// One combined training step: conventional cross-entropy plus lambda times
// the topological pull toward the bank, applied through one Adam update.
// With lambda = 0 the parameter trajectory is bit-identical to plain
// training (the topological gradient is never formed).
MetaStepResult meta_train_step(DenseNet& net, const Matrix& x, const std::vector<int>& y,
                               const TopoBank& bank, const FeatureLayout& layout,
                               const ExtractionConfig& extraction, const MetaConfig& meta,
                               const TrainConfig& train_cfg, AdamState& state, int step_index);

}  // namespace topo
