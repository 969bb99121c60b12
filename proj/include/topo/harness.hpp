#pragma once

#include <string>
#include <vector>

#include "topo/estimators.hpp"
#include "topo/metalearn.hpp"
#include "topo/synthdata.hpp"

namespace topo {

// Everything a full experiment run depends on. The whole pipeline is a pure
// function of this struct; every stochastic choice derives from global_seed.
struct ExperimentConfig {
  std::vector<TaskSpec> tasks;
  std::string arch = "fc6";
  std::vector<int> arch_widths;  // resolved from `arch` when empty
  int seeds_per_state = 3;

  TrainConfig conventional;  // defaults: lr .01, batch 32, 10 epochs
  TrainConfig overfit;       // defaults: lr .01, full batch, 250 steps
  ExtractionConfig extraction;

  int knn_k = 3;
  double lasso_alpha = 0.01;
  double train_threshold = 0.98;
  int delta_batches = 10;
  int delta_batch_size = 32;
  int finetune_subsets = 3;

  MetaConfig meta;
  int meta_seeds = 10;

  uint64_t global_seed = 17;
  std::string out_dir = "out";
};

// Desk-scale defaults: 5 generators x 6 augmentations, 600+600 samples,
// 3 seeds per state, the fc6 architecture.
ExperimentConfig default_config();

std::vector<int> resolve_arch(const std::string& name);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Append-only JSON-lines record store. Corrupt lines are rejected loudly.
void save_store(const std::vector<MetaRecord>& records, const std::string& path);
std::vector<MetaRecord> load_store(const std::string& path);

void save_sim_records(const std::vector<SimRecord>& records, const std::string& path);
std::vector<SimRecord> load_sim_records(const std::string& path);

// Trains (or skips training, for the untrained state) one network per
// (task, seed) and appends one record per run, with features extracted on
// the full training split in g-mode both. When checkpoint_dir is non-empty
// each trained network is also saved there.
std::vector<MetaRecord> run_training(const ExperimentConfig& cfg, ModelState state,
                                     const std::string& checkpoint_dir = "");

// Convenience: all three states.
std::vector<MetaRecord> run_all_states(const ExperimentConfig& cfg);

struct CvPerfRow {
  std::string task;
  std::string mode;
  double state_acc = 0.0;
  double test_mae = 0.0;
  double gap_mae = 0.0;
  double baseline_mae = 0.0;  // median predictor on the same held-out records
  int n_queries = 0;
};

struct CvPerfReport {
  std::vector<CvPerfRow> rows;       // one per (task, mode) fold
  std::vector<CvPerfRow> aggregate;  // mean and standard error per mode
};

// Leave-one-task-out evaluation of the state classifier and the two
// accuracy estimators.
CvPerfReport cv_performance(const std::vector<MetaRecord>& records, const ExperimentConfig& cfg,
                            const std::vector<GMode>& modes);

// Fine-tuning grid for the task-similarity study: one conventionally trained
// model per (unaugmented) task, fine-tuned on every other task's small
// training sets; also computes the topological shift of each pairing.
std::vector<SimRecord> run_finetune_grid(const ExperimentConfig& cfg);

struct TaskSimRow {
  std::string task;
  std::string mode;
  double rank = 0.0;  // 1 = best candidate selected
  double corr = 0.0;
  double improvement = 0.0;  // selected minus mean candidate accuracy
  int n_candidates = 0;
};

struct TaskSimReport {
  std::vector<TaskSimRow> rows;
  std::vector<TaskSimRow> aggregate;
};

TaskSimReport cv_tasksim(const std::vector<SimRecord>& sim_records, const ExperimentConfig& cfg,
                         const std::vector<GMode>& modes);

struct MetaRunRow {
  std::string task;
  std::string arch;
  std::string mode;  // baseline | ph | noph | both
  double mean_final_test = 0.0;
  double stderr_final_test = 0.0;
  int n_seeds = 0;
};

// Feature bank for one held-out task in one g-mode, built from the
// unaugmented-task records of the store.
TopoBank build_task_bank(const ExperimentConfig& cfg, const std::vector<MetaRecord>& records,
                         const std::string& current_task, GMode mode);

// Baseline small-data training versus the topological regularizer with
// identical seeds and data, per task and g-mode.
std::vector<MetaRunRow> run_meta_comparison(const ExperimentConfig& cfg,
                                            const std::vector<MetaRecord>& bank_records,
                                            const std::vector<GMode>& modes);

// Deterministic CSV/manifest emission (byte-identical across reruns).
void write_cv_perf_csv(const CvPerfReport& report, const std::string& path);
void write_tasksim_csv(const TaskSimReport& report, const std::string& path);
void write_meta_csv(const std::vector<MetaRunRow>& rows, const std::string& path);
void write_store_summary_csv(const std::vector<MetaRecord>& records, const std::string& path);
void write_manifest(const ExperimentConfig& cfg, const std::string& path);

// Seed derivations shared by the CLI and tests.
uint64_t run_seed(const ExperimentConfig& cfg, const std::string& task_id, ModelState state,
                  int seed_id);

std::string format_num(double v);  // stable numeric formatting for reports

}  // namespace topo
