// Experiment CLI: data generation, training/extraction, cross-validated
// estimator evaluation, task-similarity studies, and the meta-learning
// comparison. All outputs are deterministic functions of the config.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "topo/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::string g_mode = "both";
  std::string parent = "synthetic2d";
  std::string arch;
  uint64_t seed = 0;
  bool seed_set = false;
};

topo::ExperimentConfig make_config(const CommonOpts& opts) {
  topo::ExperimentConfig cfg =
      opts.config_path.empty() ? topo::default_config() : topo::load_config(opts.config_path);
  if (opts.parent != "synthetic2d")
    throw std::invalid_argument("unsupported parent class: " + opts.parent);
  if (!opts.arch.empty()) {
    cfg.arch = opts.arch;
    cfg.arch_widths = topo::resolve_arch(opts.arch);
  }
  if (cfg.arch_widths.empty()) cfg.arch_widths = topo::resolve_arch(cfg.arch);
  if (opts.seed_set) cfg.global_seed = opts.seed;
  cfg.out_dir = opts.out_dir;
  fs::create_directories(cfg.out_dir);
  return cfg;
}

std::vector<topo::GMode> modes_of(const std::string& g_mode) {
  if (g_mode == "all")
    return {topo::GMode::ph, topo::GMode::noph, topo::GMode::both};
  return {topo::gmode_from_string(g_mode)};
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config file (JSON)");
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_option("--g-mode", opts.g_mode, "ph | noph | both | all")->capture_default_str();
  cmd->add_option("--parent", opts.parent, "Parent dataset class")->capture_default_str();
  cmd->add_option("--arch", opts.arch, "Architecture (fc6, fc8, fc10, or comma widths)");
  cmd->add_option("--seed", opts.seed, "Global seed override")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topological characterization of dense classifiers: experiment driver"};
  app.require_subcommand(1);

  CommonOpts opts;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a dataset dump for one task");
  add_common(gen, opts);
  std::string gen_task = "spirals";
  double gen_rot = 0.0, gen_scale = 1.0, gen_noise = -1.0;
  int gen_samples = 600;
  gen->add_option("--task", gen_task, "Generator name")->capture_default_str();
  gen->add_option("--rotation", gen_rot, "Rotation in degrees")->capture_default_str();
  gen->add_option("--x-scale", gen_scale, "X scale factor")->capture_default_str();
  gen->add_option("--noise", gen_noise, "Noise level (negative = generator default)");
  gen->add_option("--samples", gen_samples, "Samples per split")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train networks and append meta records");
  add_common(tr, opts);
  std::string tr_states = "untrained,trained,overfit";
  tr->add_option("--states", tr_states, "Comma-separated states to run")->capture_default_str();

  // extract
  auto* ex = app.add_subcommand("extract", "Extract features from a checkpoint");
  add_common(ex, opts);
  std::string ex_checkpoint, ex_task = "spirals";
  double ex_rot = 0.0, ex_scale = 1.0;
  ex->add_option("--checkpoint", ex_checkpoint, "Checkpoint file")->required();
  ex->add_option("--task", ex_task, "Generator to feed the network")->capture_default_str();
  ex->add_option("--rotation", ex_rot, "Rotation in degrees")->capture_default_str();
  ex->add_option("--x-scale", ex_scale, "X scale factor")->capture_default_str();

  // cv-perf
  auto* cv = app.add_subcommand("cv-perf", "Leave-one-task-out performance estimation");
  add_common(cv, opts);
  std::string cv_store = "store.jsonl";
  cv->add_option("--store", cv_store, "Meta record store (JSON lines)")->capture_default_str();

  // finetune
  auto* ft = app.add_subcommand("finetune", "Run the fine-tuning grid for task similarity");
  add_common(ft, opts);

  // cv-tasksim
  auto* ts = app.add_subcommand("cv-tasksim", "Leave-one-task-out model selection");
  add_common(ts, opts);
  std::string ts_records = "finetune.jsonl";
  ts->add_option("--finetune-records", ts_records, "Fine-tune record file")->capture_default_str();

  // meta
  auto* mt = app.add_subcommand("meta", "Baseline vs topologically regularized training");
  add_common(mt, opts);
  std::string mt_store = "store.jsonl";
  mt->add_option("--store", mt_store, "Meta record store used to build banks")
      ->capture_default_str();

  // report
  auto* rp = app.add_subcommand("report", "Summaries and manifest from a record store");
  add_common(rp, opts);
  std::string rp_store = "store.jsonl";
  rp->add_option("--store", rp_store, "Meta record store")->capture_default_str();

  try {
    app.parse(argc, argv);

    if (gen->parsed()) {
      topo::ExperimentConfig cfg = make_config(opts);
      topo::TaskSpec spec;
      spec.gen = topo::generator_from_string(gen_task);
      spec.rotation_deg = gen_rot;
      spec.x_scale = gen_scale;
      spec.noise = gen_noise;
      spec.samples_per_split = gen_samples;
      spec.seed = topo::mix_seed(cfg.global_seed, topo::hash_str("data/" + spec.task_id()));
      const topo::Dataset2D data = topo::generate(spec);
      const std::string path = cfg.out_dir + "/" + spec.task_id() + ".csv";
      topo::dump_csv(data, path);
      std::cout << "wrote " << path << "\n";
    } else if (tr->parsed()) {
      topo::ExperimentConfig cfg = make_config(opts);
      const std::string ckpt_dir = cfg.out_dir + "/checkpoints";
      fs::create_directories(ckpt_dir);
      std::vector<topo::MetaRecord> all;
      std::stringstream ss(tr_states);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        const topo::ModelState st = topo::state_from_string(tok);
        auto part =
            topo::run_training(cfg, st, st == topo::ModelState::trained ? ckpt_dir : "");
        all.insert(all.end(), part.begin(), part.end());
      }
      topo::save_store(all, cfg.out_dir + "/store.jsonl");
      topo::write_manifest(cfg, cfg.out_dir + "/manifest.json");
      const topo::FeatureLayout layout =
          topo::make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, topo::GMode::both);
      std::ofstream lf(cfg.out_dir + "/layout.txt", std::ios::binary);
      lf << layout.to_text();
      std::cout << "wrote " << all.size() << " records to " << cfg.out_dir << "/store.jsonl\n";
    } else if (ex->parsed()) {
      topo::ExperimentConfig cfg = make_config(opts);
      const topo::DenseNet net = topo::load_checkpoint(ex_checkpoint);
      topo::TaskSpec spec;
      spec.gen = topo::generator_from_string(ex_task);
      spec.rotation_deg = ex_rot;
      spec.x_scale = ex_scale;
      spec.seed = topo::mix_seed(cfg.global_seed, topo::hash_str("data/" + spec.task_id()));
      const topo::Dataset2D data = topo::generate(spec);
      const topo::ActivationStats stats = topo::forward(net, data.train_x);
      topo::ExtractionConfig exc = cfg.extraction;
      exc.seed = topo::mix_seed(cfg.global_seed, topo::hash_str("extract/" + spec.task_id()));
      const topo::GMode mode = topo::gmode_from_string(opts.g_mode == "all" ? "both" : opts.g_mode);
      const topo::Extraction result = topo::extract(net, stats, exc, mode);
      const topo::FeatureLayout layout = topo::make_layout(net.num_weight_layers(), mode);
      std::ofstream ff(cfg.out_dir + "/features.csv", std::ios::binary);
      ff << "index,value\n";
      for (size_t i = 0; i < result.features.values.size(); ++i)
        ff << i << ',' << topo::format_num(result.features.values[i]) << "\n";
      std::ofstream lf(cfg.out_dir + "/layout.txt", std::ios::binary);
      lf << layout.to_text();
      std::cout << "wrote " << result.features.values.size() << " components to " << cfg.out_dir
                << "/features.csv\n";
    } else if (cv->parsed()) {
      topo::ExperimentConfig cfg = make_config(opts);
      const auto records = topo::load_store(cv_store);
      const auto report = topo::cv_performance(records, cfg, modes_of(opts.g_mode));
      topo::write_cv_perf_csv(report, cfg.out_dir + "/cv_perf.csv");
      std::cout << "wrote " << cfg.out_dir << "/cv_perf.csv\n";
    } else if (ft->parsed()) {
      topo::ExperimentConfig cfg = make_config(opts);
      const auto records = topo::run_finetune_grid(cfg);
      topo::save_sim_records(records, cfg.out_dir + "/finetune.jsonl");
      std::cout << "wrote " << records.size() << " fine-tune records\n";
    } else if (ts->parsed()) {
      topo::ExperimentConfig cfg = make_config(opts);
      const auto records = topo::load_sim_records(ts_records);
      const auto report = topo::cv_tasksim(records, cfg, modes_of(opts.g_mode));
      topo::write_tasksim_csv(report, cfg.out_dir + "/tasksim.csv");
      std::cout << "wrote " << cfg.out_dir << "/tasksim.csv\n";
    } else if (mt->parsed()) {
      topo::ExperimentConfig cfg = make_config(opts);
      const auto records = topo::load_store(mt_store);
      const auto modes = modes_of(opts.g_mode);
      // Per-task bank files for inspection and reuse.
      const std::string bank_dir = cfg.out_dir + "/banks";
      fs::create_directories(bank_dir);
      for (const auto& task : cfg.tasks) {
        if (task.rotation_deg != 0.0 || task.x_scale != 1.0) continue;
        for (topo::GMode mode : modes)
          topo::save_bank(topo::build_task_bank(cfg, records, task.task_id(), mode),
                          bank_dir + "/" + task.task_id() + "-" + topo::to_string(mode) + ".json");
      }
      const auto rows = topo::run_meta_comparison(cfg, records, modes);
      topo::write_meta_csv(rows, cfg.out_dir + "/meta.csv");
      std::cout << "wrote " << cfg.out_dir << "/meta.csv\n";
    } else if (rp->parsed()) {
      topo::ExperimentConfig cfg = make_config(opts);
      const auto records = topo::load_store(rp_store);
      if (records.empty()) throw std::runtime_error("report: empty store");
      topo::write_store_summary_csv(records, cfg.out_dir + "/summary.csv");
      topo::write_manifest(cfg, cfg.out_dir + "/manifest.json");
      std::cout << "wrote " << cfg.out_dir << "/summary.csv\n";
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
