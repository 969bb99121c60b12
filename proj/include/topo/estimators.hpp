#pragma once

#include <span>
#include <string>
#include <vector>

#include "topo/linalg.hpp"
#include "topo/topofeat.hpp"

namespace topo {

enum class ModelState { untrained, trained, overfit };

ModelState state_from_string(const std::string& s);
std::string to_string(ModelState s);

// One row of the meta dataset: features of one (task, architecture, seed)
// run together with its intended state and observed accuracies.
struct MetaRecord {
  std::vector<double> features;
  uint64_t layout_hash = 0;
  ModelState state = ModelState::untrained;
  double train_acc = 0.0;
  double test_acc = 0.0;
  std::string task_id;
  std::string arch_id;
  int seed_id = 0;
};

// Componentwise mean/std (population) transform. Zero-variance components
// map to 0.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;
};

Standardizer fit_standardizer(const std::vector<std::vector<double>>& rows);
std::vector<double> standardize(const Standardizer& st, std::span<const double> x);

// Majority vote among the k nearest records by Euclidean distance in
// standardized space; a tied vote falls back to the single nearest
// neighbor's label. Cross-validation hygiene (excluding the query's task)
// is the caller's responsibility.
ModelState knn_state(std::span<const double> query, const std::vector<const MetaRecord*>& records,
                     const std::vector<int>& projection, const Standardizer& st, int k = 3);

// L1-regularized linear regression fitted by cyclic coordinate descent with
// soft thresholding. Columns are standardized internally (the alpha penalty
// applies to the standardized-space coefficients, matching the convention
// the default alpha was chosen under); the intercept is unpenalized.
struct LassoModel {
  std::vector<double> beta;
  double beta0 = 0.0;
  double alpha = 0.0;
  std::vector<double> col_mean, col_scale;       // internal feature scaling
  std::vector<double> objective_history;         // one entry per sweep
};

LassoModel lasso_fit(const Matrix& x, std::span<const double> y, double alpha = 0.01);
double lasso_predict(const LassoModel& m, std::span<const double> x);

// Test-accuracy and performance-gap estimators, fitted on standardized
// features of the records whose training accuracy clears the threshold.
LassoModel fit_test_acc(const std::vector<const MetaRecord*>& records,
                        const std::vector<int>& projection, const Standardizer& st,
                        double train_threshold);
LassoModel fit_perf_gap(const std::vector<const MetaRecord*>& records,
                        const std::vector<int>& projection, const Standardizer& st,
                        double train_threshold);

// Prediction clamped to [0, 1] (both targets are accuracies).
double predict_clamped(const LassoModel& m, const Standardizer& st, std::span<const double> x);

// Mean of the first feature list minus mean of the second, componentwise.
std::vector<double> task_delta(const std::vector<std::vector<double>>& on_new_task,
                               const std::vector<std::vector<double>>& on_own_task);

// One fine-tuning outcome: the topological shift a pretrained model shows on
// a new task, and the test accuracy it reached after fine-tuning there.
struct SimRecord {
  std::vector<double> delta;
  double finetune_acc = 0.0;
  std::string pretrain_task;
  std::string target_task;
};

LassoModel fit_finetune(const std::vector<SimRecord>& records, double alpha = 0.01);

struct Candidate {
  std::string id;
  std::vector<double> delta;
};

// Candidate maximizing the predicted fine-tuning accuracy; ties broken by
// the smallest ||delta||.
std::string select_model(const std::vector<Candidate>& candidates, const LassoModel& model);

}  // namespace topo
