#include "topo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace topo {

using nlohmann::json;

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  const Generator gens[5] = {Generator::spirals, Generator::moons, Generator::circles,
                             Generator::xor2, Generator::gauss};
  const double rots[3] = {0.0, 45.0, 90.0};
  const double scales[2] = {1.0, 2.0};
  for (Generator g : gens)
    for (double sx : scales)
      for (double rot : rots) {
        TaskSpec spec;
        spec.gen = g;
        spec.rotation_deg = rot;
        spec.x_scale = sx;
        spec.samples_per_split = 600;
        cfg.tasks.push_back(spec);
      }
  cfg.arch = "fc6";
  cfg.arch_widths = resolve_arch(cfg.arch);

  cfg.conventional.learning_rate = 0.01;
  cfg.conventional.batch_size = 32;
  cfg.conventional.epochs = 10;

  cfg.overfit.learning_rate = 0.01;
  cfg.overfit.batch_size = 0;  // full batch
  cfg.overfit.steps = 250;

  return cfg;
}

std::vector<int> resolve_arch(const std::string& name) {
  const auto hidden_stack = [](int n) {
    std::vector<int> w{2};
    for (int i = 0; i < n; ++i) w.push_back(25);
    w.push_back(2);
    return w;
  };
  if (name == "fc6") return hidden_stack(5);
  if (name == "fc8") return hidden_stack(7);
  if (name == "fc10") return hidden_stack(9);
  // Fallback: explicit comma-separated widths, e.g. "2,25,25,2".
  std::vector<int> widths;
  std::stringstream ss(name);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      widths.push_back(std::stoi(tok));
    } catch (...) {
      throw std::invalid_argument("unknown architecture: " + name);
    }
  }
  if (widths.size() < 2) throw std::invalid_argument("unknown architecture: " + name);
  return widths;
}

namespace {

json task_to_json(const TaskSpec& t) {
  return json{{"generator", to_string(t.gen)}, {"rotation_deg", t.rotation_deg},
              {"x_scale", t.x_scale},          {"noise", t.noise},
              {"samples_per_split", t.samples_per_split}};
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.gen = generator_from_string(j.at("generator").get<std::string>());
  t.rotation_deg = j.value("rotation_deg", 0.0);
  t.x_scale = j.value("x_scale", 1.0);
  t.noise = j.value("noise", -1.0);
  t.samples_per_split = j.value("samples_per_split", 600);
  return t;
}

json train_to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1},   {"beta2", c.beta2},
              {"epsilon", c.epsilon},             {"batch_size", c.batch_size},
              {"epochs", c.epochs},               {"steps", c.steps}};
}

void train_from_json(const json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.steps = j.value("steps", c.steps);
}

}  // namespace

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  json j;
  j["tasks"] = json::array();
  for (const auto& t : cfg.tasks) j["tasks"].push_back(task_to_json(t));
  j["arch"] = cfg.arch;
  j["seeds_per_state"] = cfg.seeds_per_state;
  j["conventional"] = train_to_json(cfg.conventional);
  j["overfit"] = train_to_json(cfg.overfit);
  j["extraction"] = json{{"subset_count", cfg.extraction.subset_count},
                         {"subset_size", cfg.extraction.subset_size},
                         {"cov_variant", cfg.extraction.cov_variant == CovVariant::all_nodes
                                             ? "all_nodes"
                                             : "per_class"},
                         {"cov_cap", cfg.extraction.cov_cap},
                         {"parallel", cfg.extraction.parallel}};
  j["knn_k"] = cfg.knn_k;
  j["lasso_alpha"] = cfg.lasso_alpha;
  j["train_threshold"] = cfg.train_threshold;
  j["delta_batches"] = cfg.delta_batches;
  j["delta_batch_size"] = cfg.delta_batch_size;
  j["finetune_subsets"] = cfg.finetune_subsets;
  j["meta"] = json{{"lambda", cfg.meta.lambda},
                   {"sample_size", cfg.meta.sample_size},
                   {"min_k", cfg.meta.min_k},
                   {"corr_threshold", cfg.meta.corr_threshold},
                   {"test_threshold", cfg.meta.test_threshold},
                   {"gap_threshold", cfg.meta.gap_threshold},
                   {"families", cfg.meta.families},
                   {"steps", cfg.meta.steps}};
  j["meta_seeds"] = cfg.meta_seeds;
  j["global_seed"] = cfg.global_seed;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_config: cannot open " + path);
  out << j.dump(2) << "\n";
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  json j;
  in >> j;
  ExperimentConfig cfg = default_config();
  if (j.contains("tasks")) {
    cfg.tasks.clear();
    for (const auto& t : j["tasks"]) cfg.tasks.push_back(task_from_json(t));
  }
  cfg.arch = j.value("arch", cfg.arch);
  cfg.arch_widths = resolve_arch(cfg.arch);
  cfg.seeds_per_state = j.value("seeds_per_state", cfg.seeds_per_state);
  if (j.contains("conventional")) train_from_json(j["conventional"], cfg.conventional);
  if (j.contains("overfit")) train_from_json(j["overfit"], cfg.overfit);
  if (j.contains("extraction")) {
    const json& e = j["extraction"];
    cfg.extraction.subset_count = e.value("subset_count", cfg.extraction.subset_count);
    cfg.extraction.subset_size = e.value("subset_size", cfg.extraction.subset_size);
    cfg.extraction.cov_cap = e.value("cov_cap", cfg.extraction.cov_cap);
    cfg.extraction.parallel = e.value("parallel", cfg.extraction.parallel);
    if (e.value("cov_variant", "all_nodes") == std::string("per_class"))
      cfg.extraction.cov_variant = CovVariant::per_class;
  }
  cfg.knn_k = j.value("knn_k", cfg.knn_k);
  cfg.lasso_alpha = j.value("lasso_alpha", cfg.lasso_alpha);
  cfg.train_threshold = j.value("train_threshold", cfg.train_threshold);
  cfg.delta_batches = j.value("delta_batches", cfg.delta_batches);
  cfg.delta_batch_size = j.value("delta_batch_size", cfg.delta_batch_size);
  cfg.finetune_subsets = j.value("finetune_subsets", cfg.finetune_subsets);
  if (j.contains("meta")) {
    const json& m = j["meta"];
    cfg.meta.lambda = m.value("lambda", cfg.meta.lambda);
    cfg.meta.sample_size = m.value("sample_size", cfg.meta.sample_size);
    cfg.meta.min_k = m.value("min_k", cfg.meta.min_k);
    cfg.meta.corr_threshold = m.value("corr_threshold", cfg.meta.corr_threshold);
    cfg.meta.test_threshold = m.value("test_threshold", cfg.meta.test_threshold);
    cfg.meta.gap_threshold = m.value("gap_threshold", cfg.meta.gap_threshold);
    cfg.meta.families = m.value("families", cfg.meta.families);
    cfg.meta.steps = m.value("steps", cfg.meta.steps);
  }
  cfg.meta_seeds = j.value("meta_seeds", cfg.meta_seeds);
  cfg.global_seed = j.value("global_seed", cfg.global_seed);
  return cfg;
}

void save_store(const std::vector<MetaRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_store: cannot open " + path);
  for (const auto& r : records) {
    json j{{"layout", r.layout_hash},   {"state", to_string(r.state)},
           {"train_acc", r.train_acc},  {"test_acc", r.test_acc},
           {"task", r.task_id},         {"arch", r.arch_id},
           {"seed_id", r.seed_id},      {"features", r.features}};
    out << j.dump() << "\n";
  }
}

std::vector<MetaRecord> load_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_store: cannot open " + path);
  std::vector<MetaRecord> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("load_store: corrupt line " + std::to_string(lineno) + " in " +
                               path + ": " + e.what());
    }
    MetaRecord r;
    r.layout_hash = j.at("layout").get<uint64_t>();
    r.state = state_from_string(j.at("state").get<std::string>());
    r.train_acc = j.at("train_acc").get<double>();
    r.test_acc = j.at("test_acc").get<double>();
    r.task_id = j.at("task").get<std::string>();
    r.arch_id = j.at("arch").get<std::string>();
    r.seed_id = j.at("seed_id").get<int>();
    r.features = j.at("features").get<std::vector<double>>();
    if (r.train_acc < 0.0 || r.train_acc > 1.0 || r.test_acc < 0.0 || r.test_acc > 1.0 ||
        !all_finite(r.features))
      throw std::runtime_error("load_store: invalid record at line " + std::to_string(lineno) +
                               " in " + path);
    records.push_back(std::move(r));
  }
  return records;
}

void save_sim_records(const std::vector<SimRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_sim_records: cannot open " + path);
  for (const auto& r : records) {
    json j{{"pretrain", r.pretrain_task},
           {"target", r.target_task},
           {"finetune_acc", r.finetune_acc},
           {"delta", r.delta}};
    out << j.dump() << "\n";
  }
}

std::vector<SimRecord> load_sim_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_sim_records: cannot open " + path);
  std::vector<SimRecord> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("load_sim_records: corrupt line " + std::to_string(lineno) + ": " +
                               e.what());
    }
    SimRecord r;
    r.pretrain_task = j.at("pretrain").get<std::string>();
    r.target_task = j.at("target").get<std::string>();
    r.finetune_acc = j.at("finetune_acc").get<double>();
    r.delta = j.at("delta").get<std::vector<double>>();
    records.push_back(std::move(r));
  }
  return records;
}

uint64_t run_seed(const ExperimentConfig& cfg, const std::string& task_id, ModelState state,
                  int seed_id) {
  const std::string key = task_id + "/" + to_string(state) + "/" + std::to_string(seed_id);
  return mix_seed(cfg.global_seed, hash_str(key));
}

namespace {

TaskSpec seeded_task(const ExperimentConfig& cfg, const TaskSpec& base) {
  TaskSpec spec = base;
  spec.seed = mix_seed(cfg.global_seed, hash_str("data/" + base.task_id()));
  return spec;
}

MetaRecord run_one(const ExperimentConfig& cfg, const TaskSpec& base, ModelState state,
                   int seed_id, const FeatureLayout& layout, const std::string& checkpoint_dir) {
  const TaskSpec spec = seeded_task(cfg, base);
  const Dataset2D data = generate(spec);
  const uint64_t seed = run_seed(cfg, spec.task_id(), state, seed_id);
  DenseNet net = init_net(cfg.arch_widths, mix_seed(seed, 1));

  const Matrix* train_x = &data.train_x;
  const std::vector<int>* train_y = &data.train_y;
  Dataset2D small;
  if (state == ModelState::trained) {
    TrainConfig tc = cfg.conventional;
    tc.seed = mix_seed(seed, 2);
    train(net, data.train_x, data.train_y, tc);
  } else if (state == ModelState::overfit) {
    small = subsample(data, default_overfit_per_class(spec.gen), mix_seed(seed, 3));
    TrainConfig tc = cfg.overfit;
    tc.seed = mix_seed(seed, 2);
    train(net, small.train_x, small.train_y, tc);
    train_x = &small.train_x;
    train_y = &small.train_y;
  }

  if (!checkpoint_dir.empty())
    save_checkpoint(net, checkpoint_dir + "/" + spec.task_id() + "-" + to_string(state) + "-s" +
                             std::to_string(seed_id) + ".json");

  MetaRecord rec;
  rec.task_id = spec.task_id();
  rec.arch_id = cfg.arch;
  rec.state = state;
  rec.seed_id = seed_id;
  rec.train_acc = accuracy(net, *train_x, *train_y);  // on the data it trained on
  rec.test_acc = accuracy(net, data.test_x, data.test_y);

  ExtractionConfig ex = cfg.extraction;
  ex.seed = mix_seed(seed, 4);
  const ActivationStats stats = forward(net, data.train_x);  // full training split
  PointSetBundle bundle = build_bundle(net, stats, ex);
  BundleSummary summary;
  const FeatureVector fv = summarize(bundle, layout, summary, ex.parallel);
  rec.features = fv.values;
  rec.layout_hash = fv.layout_hash;
  return rec;
}

}  // namespace

std::vector<MetaRecord> run_training(const ExperimentConfig& cfg, ModelState state,
                                     const std::string& checkpoint_dir) {
  const FeatureLayout layout =
      make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, GMode::both);
  const int n_tasks = static_cast<int>(cfg.tasks.size());
  const int total = n_tasks * cfg.seeds_per_state;
  std::vector<MetaRecord> out(static_cast<size_t>(total));
  // Independent runs fill disjoint slots, so the parallel loop is
  // deterministic regardless of schedule. Exceptions must not cross the
  // parallel region; the first failure is rethrown with its run identity.
  std::string failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < total; ++i) {
    const int t = i / cfg.seeds_per_state;
    const int s = i % cfg.seeds_per_state;
    try {
      out[static_cast<size_t>(i)] =
          run_one(cfg, cfg.tasks[static_cast<size_t>(t)], state, s, layout, checkpoint_dir);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty())
        failure = cfg.tasks[static_cast<size_t>(t)].task_id() + "/" + to_string(state) + "/s" +
                  std::to_string(s) + ": " + e.what();
    }
  }
  if (!failure.empty()) throw std::runtime_error("run_training: " + failure);
  return out;
}

std::vector<MetaRecord> run_all_states(const ExperimentConfig& cfg) {
  std::vector<MetaRecord> all;
  for (ModelState st : {ModelState::untrained, ModelState::trained, ModelState::overfit}) {
    auto part = run_training(cfg, st);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

namespace {

std::vector<std::string> sorted_tasks(const std::vector<MetaRecord>& records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.task_id);
  return {s.begin(), s.end()};
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1)) /
         std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

CvPerfReport cv_performance(const std::vector<MetaRecord>& records, const ExperimentConfig& cfg,
                            const std::vector<GMode>& modes) {
  const auto tasks = sorted_tasks(records);
  if (tasks.size() < 2) throw std::invalid_argument("cv_performance: need at least two tasks");
  const FeatureLayout both =
      make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, GMode::both);
  for (const auto& r : records)
    if (r.features.size() != static_cast<size_t>(both.size()))
      throw std::invalid_argument("cv_performance: record feature layout mismatch");

  CvPerfReport report;
  for (GMode mode : modes) {
    const std::vector<int> projection = both.mode_projection(mode);
    std::vector<double> accs, tmaes, gmaes, bmaes;
    for (const std::string& held : tasks) {
      std::vector<const MetaRecord*> fit_set, eval_set;
      for (const auto& r : records)
        (r.task_id == held ? eval_set : fit_set).push_back(&r);
      if (fit_set.empty() || eval_set.empty()) continue;

      std::vector<std::vector<double>> fit_rows;
      fit_rows.reserve(fit_set.size());
      for (const MetaRecord* r : fit_set) {
        std::vector<double> row(projection.size());
        for (size_t j = 0; j < projection.size(); ++j)
          row[j] = r->features[static_cast<size_t>(projection[j])];
        fit_rows.push_back(std::move(row));
      }
      const Standardizer st = fit_standardizer(fit_rows);

      CvPerfRow row;
      row.task = held;
      row.mode = to_string(mode);

      int hits = 0;
      for (const MetaRecord* q : eval_set) {
        std::vector<double> qf(projection.size());
        for (size_t j = 0; j < projection.size(); ++j)
          qf[j] = q->features[static_cast<size_t>(projection[j])];
        if (knn_state(qf, fit_set, projection, st, cfg.knn_k) == q->state) ++hits;
      }
      row.state_acc = static_cast<double>(hits) / static_cast<double>(eval_set.size());
      row.n_queries = static_cast<int>(eval_set.size());

      const LassoModel h = fit_test_acc(fit_set, projection, st, cfg.train_threshold);
      const LassoModel hp = fit_perf_gap(fit_set, projection, st, cfg.train_threshold);
      std::vector<double> fit_targets;
      for (const MetaRecord* r : fit_set)
        if (r->train_acc >= cfg.train_threshold) fit_targets.push_back(r->test_acc);
      const double med = median_of(fit_targets);

      double tmae = 0.0, gmae = 0.0, bmae = 0.0;
      int n_eval = 0;
      for (const MetaRecord* q : eval_set) {
        if (q->train_acc < cfg.train_threshold) continue;
        std::vector<double> qf(projection.size());
        for (size_t j = 0; j < projection.size(); ++j)
          qf[j] = q->features[static_cast<size_t>(projection[j])];
        tmae += std::abs(predict_clamped(h, st, qf) - q->test_acc);
        gmae += std::abs(predict_clamped(hp, st, qf) - std::abs(q->test_acc - q->train_acc));
        bmae += std::abs(med - q->test_acc);
        ++n_eval;
      }
      if (n_eval > 0) {
        row.test_mae = tmae / n_eval;
        row.gap_mae = gmae / n_eval;
        row.baseline_mae = bmae / n_eval;
        tmaes.push_back(row.test_mae);
        gmaes.push_back(row.gap_mae);
        bmaes.push_back(row.baseline_mae);
      }
      accs.push_back(row.state_acc);
      report.rows.push_back(std::move(row));
    }
    CvPerfRow agg;
    agg.task = "MEAN";
    agg.mode = to_string(mode);
    agg.state_acc = mean_of(accs);
    agg.test_mae = mean_of(tmaes);
    agg.gap_mae = mean_of(gmaes);
    agg.baseline_mae = mean_of(bmaes);
    agg.n_queries = static_cast<int>(accs.size());
    report.aggregate.push_back(agg);
    CvPerfRow se;
    se.task = "STDERR";
    se.mode = to_string(mode);
    se.state_acc = stderr_of(accs);
    se.test_mae = stderr_of(tmaes);
    se.gap_mae = stderr_of(gmaes);
    se.baseline_mae = stderr_of(bmaes);
    se.n_queries = static_cast<int>(accs.size());
    report.aggregate.push_back(se);
  }
  return report;
}

namespace {

// Features of `net` on `batches` consecutive seeded mini-batches of (x, y).
std::vector<std::vector<double>> batch_features(const DenseNet& net, const Matrix& x,
                                                const FeatureLayout& layout,
                                                const ExtractionConfig& extraction, int batches,
                                                int batch_size, uint64_t seed) {
  Rng rng(seed);
  std::vector<int> order(static_cast<size_t>(x.rows));
  for (int i = 0; i < x.rows; ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order);
  std::vector<std::vector<double>> out;
  int start = 0;
  for (int b = 0; b < batches; ++b) {
    if (start + batch_size > x.rows) {
      rng.shuffle(order);  // recycle when the data is smaller than the plan
      start = 0;
    }
    Matrix bx(batch_size, x.cols);
    for (int r = 0; r < batch_size; ++r) {
      const int src = order[static_cast<size_t>(start + r)];
      for (int c = 0; c < x.cols; ++c) bx(r, c) = x(src, c);
    }
    start += batch_size;
    const ActivationStats stats = forward(net, bx);
    ExtractionConfig ex = extraction;
    ex.seed = mix_seed(seed, static_cast<uint64_t>(b) + 101);
    PointSetBundle bundle = build_bundle(net, stats, ex);
    BundleSummary summary;
    out.push_back(summarize(bundle, layout, summary, ex.parallel).values);
  }
  return out;
}

std::vector<TaskSpec> unaugmented_tasks(const ExperimentConfig& cfg) {
  std::vector<TaskSpec> out;
  for (const auto& t : cfg.tasks)
    if (t.rotation_deg == 0.0 && t.x_scale == 1.0) out.push_back(t);
  if (out.empty()) throw std::invalid_argument("no unaugmented tasks in the roster");
  return out;
}

}  // namespace

std::vector<SimRecord> run_finetune_grid(const ExperimentConfig& cfg) {
  const std::vector<TaskSpec> tasks = unaugmented_tasks(cfg);
  const int n = static_cast<int>(tasks.size());
  const FeatureLayout layout =
      make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, GMode::both);

  // One conventionally trained model per task (single pretraining seed).
  std::vector<DenseNet> models(static_cast<size_t>(n));
  std::vector<Dataset2D> data(static_cast<size_t>(n));
  std::vector<std::vector<std::vector<double>>> own_feats(static_cast<size_t>(n));
  std::string failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      const TaskSpec spec = seeded_task(cfg, tasks[static_cast<size_t>(i)]);
      data[static_cast<size_t>(i)] = generate(spec);
      const uint64_t seed = run_seed(cfg, spec.task_id(), ModelState::trained, 0);
      DenseNet net = init_net(cfg.arch_widths, mix_seed(seed, 1));
      TrainConfig tc = cfg.conventional;
      tc.seed = mix_seed(seed, 2);
      train(net, data[static_cast<size_t>(i)].train_x, data[static_cast<size_t>(i)].train_y, tc);
      own_feats[static_cast<size_t>(i)] =
          batch_features(net, data[static_cast<size_t>(i)].train_x, layout, cfg.extraction,
                         cfg.delta_batches, cfg.delta_batch_size, mix_seed(seed, 5));
      models[static_cast<size_t>(i)] = std::move(net);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw std::runtime_error("run_finetune_grid: " + std::string(failure));

  std::vector<SimRecord> records(static_cast<size_t>(n) * static_cast<size_t>(n - 1));
#pragma omp parallel for schedule(dynamic, 1) collapse(2)
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      try {
        const std::string ti = tasks[static_cast<size_t>(i)].task_id();
        const std::string tj = tasks[static_cast<size_t>(j)].task_id();
        const uint64_t pair_seed = mix_seed(cfg.global_seed, hash_str("pair/" + ti + "/" + tj));

        const auto cross_feats =
            batch_features(models[static_cast<size_t>(i)], data[static_cast<size_t>(j)].train_x,
                           layout, cfg.extraction, cfg.delta_batches, cfg.delta_batch_size,
                           mix_seed(pair_seed, 1));
        SimRecord rec;
        rec.pretrain_task = ti;
        rec.target_task = tj;
        rec.delta = task_delta(cross_feats, own_feats[static_cast<size_t>(i)]);

        double acc_sum = 0.0;
        for (int s = 0; s < cfg.finetune_subsets; ++s) {
          DenseNet net = models[static_cast<size_t>(i)];  // warm start
          const Dataset2D small =
              subsample(data[static_cast<size_t>(j)],
                        default_overfit_per_class(tasks[static_cast<size_t>(j)].gen),
                        mix_seed(pair_seed, 100 + static_cast<uint64_t>(s)));
          TrainConfig tc = cfg.overfit;
          tc.seed = mix_seed(pair_seed, 200 + static_cast<uint64_t>(s));
          train(net, small.train_x, small.train_y, tc);
          acc_sum += accuracy(net, data[static_cast<size_t>(j)].test_x,
                              data[static_cast<size_t>(j)].test_y);
        }
        rec.finetune_acc = acc_sum / cfg.finetune_subsets;
        records[static_cast<size_t>(i) * (n - 1) + (j > i ? j - 1 : j)] = std::move(rec);
      } catch (const std::exception& e) {
#pragma omp critical
        if (failure.empty()) failure = e.what();
      }
    }
  }
  if (!failure.empty()) throw std::runtime_error("run_finetune_grid: " + std::string(failure));
  return records;
}

TaskSimReport cv_tasksim(const std::vector<SimRecord>& sim_records, const ExperimentConfig& cfg,
                         const std::vector<GMode>& modes) {
  std::set<std::string> task_set;
  for (const auto& r : sim_records) {
    task_set.insert(r.pretrain_task);
    task_set.insert(r.target_task);
  }
  const std::vector<std::string> tasks(task_set.begin(), task_set.end());
  if (tasks.size() < 3) throw std::invalid_argument("cv_tasksim: need at least three tasks");
  for (const auto& a : tasks)
    for (const auto& b : tasks) {
      if (a == b) continue;
      const bool found = std::any_of(sim_records.begin(), sim_records.end(), [&](const SimRecord& r) {
        return r.pretrain_task == a && r.target_task == b;
      });
      if (!found)
        throw std::invalid_argument("cv_tasksim: missing fine-tune pair " + a + " -> " + b);
    }

  const FeatureLayout both =
      make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, GMode::both);
  const bool project = !sim_records.empty() &&
                       sim_records.front().delta.size() == static_cast<size_t>(both.size());

  TaskSimReport report;
  for (GMode mode : modes) {
    std::vector<int> projection;
    if (project) projection = both.mode_projection(mode);
    const auto slice = [&](const std::vector<double>& full) {
      if (!project) return full;
      std::vector<double> out(projection.size());
      for (size_t k = 0; k < projection.size(); ++k)
        out[k] = full[static_cast<size_t>(projection[k])];
      return out;
    };

    std::vector<double> ranks, corrs, imps;
    for (const std::string& held : tasks) {
      std::vector<SimRecord> fit;
      std::vector<const SimRecord*> candidates;
      for (const auto& r : sim_records) {
        if (r.target_task == held && r.pretrain_task != held) {
          candidates.push_back(&r);
        } else if (r.pretrain_task != held && r.target_task != held) {
          SimRecord s = r;
          s.delta = slice(r.delta);
          fit.push_back(std::move(s));
        }
      }
      const LassoModel model = fit_finetune(fit, cfg.lasso_alpha);

      std::vector<Candidate> cands;
      std::vector<double> actuals, preds;
      for (const SimRecord* c : candidates) {
        Candidate cd;
        cd.id = c->pretrain_task;
        cd.delta = slice(c->delta);
        preds.push_back(std::clamp(lasso_predict(model, cd.delta), 0.0, 1.0));
        actuals.push_back(c->finetune_acc);
        cands.push_back(std::move(cd));
      }
      const std::string chosen = select_model(cands, model);
      size_t chosen_idx = 0;
      for (size_t k = 0; k < cands.size(); ++k)
        if (cands[k].id == chosen) chosen_idx = k;

      int rank = 1;
      for (size_t k = 0; k < actuals.size(); ++k)
        if (actuals[k] > actuals[chosen_idx]) ++rank;

      // Pearson correlation of predictions vs actual fine-tune accuracies.
      const double pm = mean_of(preds), am = mean_of(actuals);
      double pv = 0.0, av = 0.0, cov = 0.0;
      for (size_t k = 0; k < preds.size(); ++k) {
        pv += (preds[k] - pm) * (preds[k] - pm);
        av += (actuals[k] - am) * (actuals[k] - am);
        cov += (preds[k] - pm) * (actuals[k] - am);
      }
      const double corr = pv > 0.0 && av > 0.0 ? cov / std::sqrt(pv * av) : 0.0;

      TaskSimRow row;
      row.task = held;
      row.mode = to_string(mode);
      row.rank = rank;
      row.corr = corr;
      row.improvement = actuals[chosen_idx] - am;
      row.n_candidates = static_cast<int>(cands.size());
      ranks.push_back(row.rank);
      corrs.push_back(row.corr);
      imps.push_back(row.improvement);
      report.rows.push_back(std::move(row));
    }
    TaskSimRow agg;
    agg.task = "MEAN";
    agg.mode = to_string(mode);
    agg.rank = mean_of(ranks);
    agg.corr = mean_of(corrs);
    agg.improvement = mean_of(imps);
    agg.n_candidates = static_cast<int>(ranks.size());
    report.aggregate.push_back(agg);
    TaskSimRow se;
    se.task = "STDERR";
    se.mode = to_string(mode);
    se.rank = stderr_of(ranks);
    se.corr = stderr_of(corrs);
    se.improvement = stderr_of(imps);
    se.n_candidates = static_cast<int>(ranks.size());
    report.aggregate.push_back(se);
  }
  return report;
}

TopoBank build_task_bank(const ExperimentConfig& cfg, const std::vector<MetaRecord>& records,
                         const std::string& current_task, GMode mode) {
  const std::vector<TaskSpec> tasks = unaugmented_tasks(cfg);
  const FeatureLayout both =
      make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, GMode::both);
  const FeatureLayout layout =
      make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, mode);
  const std::vector<int> projection = both.mode_projection(mode);
  std::vector<BankEntry> sources;
  for (const auto& r : records) {
    bool in_roster = false;
    for (const auto& t : tasks) in_roster = in_roster || t.task_id() == r.task_id;
    if (!in_roster || r.task_id == current_task) continue;
    BankEntry e;
    e.features.resize(projection.size());
    for (size_t k = 0; k < projection.size(); ++k)
      e.features[k] = r.features[static_cast<size_t>(projection[k])];
    e.task_id = r.task_id;
    e.test_acc = r.test_acc;
    e.perf_gap = std::abs(r.test_acc - r.train_acc);
    sources.push_back(std::move(e));
  }
  return build_bank(sources, current_task, cfg.meta, layout.hash());
}

std::vector<MetaRunRow> run_meta_comparison(const ExperimentConfig& cfg,
                                            const std::vector<MetaRecord>& bank_records,
                                            const std::vector<GMode>& modes) {
  const std::vector<TaskSpec> tasks = unaugmented_tasks(cfg);
  const FeatureLayout both =
      make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, GMode::both);

  std::vector<MetaRunRow> rows;
  for (const TaskSpec& base : tasks) {
    const TaskSpec spec = seeded_task(cfg, base);
    const Dataset2D data = generate(spec);
    const std::string task = spec.task_id();

    // Mode-agnostic per-seed setup so every mode sees identical runs.
    struct SeedSetup {
      DenseNet net0;
      Dataset2D small;
    };
    std::vector<SeedSetup> setups;
    for (int s = 0; s < cfg.meta_seeds; ++s) {
      const uint64_t seed = mix_seed(cfg.global_seed, hash_str("meta/" + task + "/" + std::to_string(s)));
      SeedSetup su;
      su.net0 = init_net(cfg.arch_widths, mix_seed(seed, 1));
      su.small = subsample(data, default_overfit_per_class(spec.gen), mix_seed(seed, 3));
      setups.push_back(std::move(su));
    }

    TrainConfig tc = cfg.overfit;
    tc.batch_size = 0;
    tc.steps = cfg.meta.steps;

    std::vector<double> base_accs;
    for (const SeedSetup& su : setups) {
      DenseNet net = su.net0;
      train(net, su.small.train_x, su.small.train_y, tc);
      base_accs.push_back(accuracy(net, data.test_x, data.test_y));
    }
    MetaRunRow brow;
    brow.task = task;
    brow.arch = cfg.arch;
    brow.mode = "baseline";
    brow.mean_final_test = mean_of(base_accs);
    brow.stderr_final_test = stderr_of(base_accs);
    brow.n_seeds = cfg.meta_seeds;
    rows.push_back(brow);

    for (GMode mode : modes) {
      const FeatureLayout layout =
          make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, mode);
      const TopoBank bank = build_task_bank(cfg, bank_records, task, mode);

      std::vector<double> accs;
      for (int s = 0; s < cfg.meta_seeds; ++s) {
        const SeedSetup& su = setups[static_cast<size_t>(s)];
        DenseNet net = su.net0;
        AdamState state = init_adam(net);
        MetaConfig mc = cfg.meta;
        mc.seed = mix_seed(cfg.global_seed,
                           hash_str("metaloss/" + task + "/" + std::to_string(s)));
        ExtractionConfig ex = cfg.extraction;
        ex.seed = mix_seed(mc.seed, 7);
        for (int step = 0; step < cfg.meta.steps; ++step) {
          const MetaStepResult r = meta_train_step(net, su.small.train_x, su.small.train_y, bank,
                                                   layout, ex, mc, tc, state, step);
          if (!std::isfinite(r.total_loss))
            throw std::runtime_error("run_meta_comparison: non-finite loss");
        }
        accs.push_back(accuracy(net, data.test_x, data.test_y));
      }
      MetaRunRow row;
      row.task = task;
      row.arch = cfg.arch;
      row.mode = to_string(mode);
      row.mean_final_test = mean_of(accs);
      row.stderr_final_test = stderr_of(accs);
      row.n_seeds = cfg.meta_seeds;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace {

// Quote a CSV field when it contains a comma (comma-width arch names).
std::string csv_field(const std::string& s) {
  if (s.find(',') == std::string::npos) return s;
  return "\"" + s + "\"";
}

}  // namespace

void write_cv_perf_csv(const CvPerfReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_cv_perf_csv: cannot open " + path);
  out << "task,g_mode,state_acc,test_mae,gap_mae,baseline_mae,n_queries\n";
  const auto emit = [&](const CvPerfRow& r) {
    out << r.task << ',' << r.mode << ',' << format_num(r.state_acc) << ','
        << format_num(r.test_mae) << ',' << format_num(r.gap_mae) << ','
        << format_num(r.baseline_mae) << ',' << r.n_queries << "\n";
  };
  for (const auto& r : report.rows) emit(r);
  for (const auto& r : report.aggregate) emit(r);
}

void write_tasksim_csv(const TaskSimReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_tasksim_csv: cannot open " + path);
  out << "task,g_mode,rank,corr,improvement,n_candidates\n";
  const auto emit = [&](const TaskSimRow& r) {
    out << r.task << ',' << r.mode << ',' << format_num(r.rank) << ',' << format_num(r.corr)
        << ',' << format_num(r.improvement) << ',' << r.n_candidates << "\n";
  };
  for (const auto& r : report.rows) emit(r);
  for (const auto& r : report.aggregate) emit(r);
}

void write_meta_csv(const std::vector<MetaRunRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_meta_csv: cannot open " + path);
  out << "task,arch,mode,mean_final_test,stderr,n_seeds\n";
  for (const auto& r : rows)
    out << csv_field(r.task) << ',' << csv_field(r.arch) << ',' << r.mode << ','
        << format_num(r.mean_final_test) << ',' << format_num(r.stderr_final_test) << ','
        << r.n_seeds << "\n";
}

void write_store_summary_csv(const std::vector<MetaRecord>& records, const std::string& path) {
  if (records.empty()) throw std::invalid_argument("write_store_summary_csv: empty store");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_store_summary_csv: cannot open " + path);
  out << "task,architecture,metric,value\n";
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> by_key;
  for (const auto& r : records) {
    auto& m = by_key[{r.task_id, r.arch_id}];
    m["train_acc_" + to_string(r.state)].push_back(r.train_acc);
    m["test_acc_" + to_string(r.state)].push_back(r.test_acc);
  }
  for (const auto& [key, metrics] : by_key)
    for (const auto& [name, vals] : metrics)
      out << csv_field(key.first) << ',' << csv_field(key.second) << ',' << name << ','
          << format_num(mean_of(vals)) << "\n";
}

void write_manifest(const ExperimentConfig& cfg, const std::string& path) {
  json j;
  j["tool"] = "topo";
  j["version"] = "1.0.0";
  j["arch"] = cfg.arch;
  j["arch_widths"] = cfg.arch_widths;
  j["global_seed"] = cfg.global_seed;
  j["seeds_per_state"] = cfg.seeds_per_state;
  const FeatureLayout layout =
      make_layout(static_cast<int>(cfg.arch_widths.size()) - 1, GMode::both);
  j["layout_hash"] = layout.hash();
  j["layout_components"] = layout.size();
  json tasks = json::array();
  for (const auto& base : cfg.tasks) {
    const TaskSpec spec = seeded_task(cfg, base);
    json t = task_to_json(spec);
    t["task_id"] = spec.task_id();
    t["data_seed"] = spec.seed;
    json seeds = json::array();
    for (ModelState st : {ModelState::untrained, ModelState::trained, ModelState::overfit})
      for (int s = 0; s < cfg.seeds_per_state; ++s)
        seeds.push_back(run_seed(cfg, spec.task_id(), st, s));
    t["run_seeds"] = std::move(seeds);
    tasks.push_back(std::move(t));
  }
  j["tasks"] = std::move(tasks);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace topo
