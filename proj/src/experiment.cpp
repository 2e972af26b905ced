#include "cee/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "cee/errors.hpp"
#include "cee/gradcheck.hpp"
#include "cee/hardness.hpp"
#include "cee/inference.hpp"
#include "cee/sweep.hpp"

namespace cee {

using nlohmann::json;

ExperimentConfig::ExperimentConfig() : sweep_alphas(default_alpha_grid()) {
  model.num_layers = 12;
  model.hidden_dim = 12;
  model.policy_hidden_dim = 16;
}

namespace {

// Reads declared keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name(key) + "' has the wrong type");
    }
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), name(key));
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + name(it.key().c_str()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const char* reward_name(RewardVariant v) { return v == RewardVariant::Vanilla ? "vanilla" : "hardness"; }

const char* source_name(DataSourceKind k) {
  switch (k) {
    case DataSourceKind::Synthetic: return "synthetic";
    case DataSourceKind::File: return "file";
    case DataSourceKind::Text: return "text";
  }
  return "?";
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  Section root(j, "");
  root.read("seed", cfg.seed);
  std::string out = cfg.out_dir.string();
  root.read("out", out);
  cfg.out_dir = out;

  if (auto data = root.child("data")) {
    std::string source = source_name(cfg.data.kind);
    data->read("source", source);
    if (source == "synthetic") {
      cfg.data.kind = DataSourceKind::Synthetic;
    } else if (source == "file") {
      cfg.data.kind = DataSourceKind::File;
    } else if (source == "text") {
      cfg.data.kind = DataSourceKind::Text;
    } else {
      throw ConfigError("config key 'data.source' must be synthetic, file or text");
    }
    data->read("seed", cfg.data.seed);
    std::string path = cfg.data.path.string();
    data->read("path", path);
    cfg.data.path = path;
    std::string format = cfg.data.format == TableFormat::Delimited ? "delimited" : "records";
    data->read("format", format);
    if (format != "delimited" && format != "records") {
      throw ConfigError("config key 'data.format' must be delimited or records");
    }
    cfg.data.format = format == "delimited" ? TableFormat::Delimited : TableFormat::RecordPerLine;
    data->read("text_dim", cfg.data.text_dim);
    data->read("split", cfg.data.split);
    if (auto syn = data->child("synthetic")) {
      SyntheticSpec& s = cfg.data.synthetic;
      syn->read("num_classes", s.num_classes);
      syn->read("n", s.n);
      syn->read("feature_dim", s.feature_dim);
      syn->read("easy_fraction", s.easy_fraction);
      syn->read("margin_easy", s.margin_easy);
      syn->read("margin_hard", s.margin_hard);
      syn->read("noise", s.noise);
      syn->read("components_per_class", s.components_per_class);
      syn->reject_unknown();
    }
    data->reject_unknown();
  }

  if (auto model = root.child("model")) {
    model->read("num_layers", cfg.model.num_layers);
    model->read("hidden_dim", cfg.model.hidden_dim);
    model->read("policy_hidden_dim", cfg.model.policy_hidden_dim);
    model->reject_unknown();
  }

  if (auto train = root.child("train")) {
    TrainConfig& t = cfg.train;
    train->read("init_epochs", t.init_epochs);
    train->read("policy_epochs", t.policy_epochs);
    train->read("task_epochs", t.task_epochs);
    train->read("rounds_max", t.rounds_max);
    train->read("lr_init", t.lr_init);
    train->read("lr_policy", t.lr_policy);
    train->read("lr_task", t.lr_task);
    train->read("alpha", t.reward.alpha);
    std::string variant = reward_name(t.reward.variant);
    train->read("reward", variant);
    if (variant == "vanilla") {
      t.reward.variant = RewardVariant::Vanilla;
    } else if (variant == "hardness") {
      t.reward.variant = RewardVariant::HardnessGuided;
    } else {
      throw ConfigError("config key 'train.reward' must be vanilla or hardness");
    }
    train->read("samples_per_instance", t.samples_per_instance);
    train->read("eps_start", t.eps_start);
    train->read("eps_end", t.eps_end);
    train->read("patience", t.patience);
    train->read("batch_size", t.batch_size);
    train->reject_unknown();
  }

  if (auto sweep = root.child("sweep")) {
    sweep->read("alphas", cfg.sweep_alphas);
    sweep->read("seeds", cfg.sweep_seeds);
    sweep->reject_unknown();
  }
  if (auto eval = root.child("eval")) {
    eval->read("entropy_thresholds", cfg.entropy_thresholds);
    eval->reject_unknown();
  }
  if (auto gc = root.child("gradcheck")) {
    gc->read("seeds", cfg.gradcheck_seeds);
    gc->reject_unknown();
  }
  root.reject_unknown();
  finalize(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

void finalize(ExperimentConfig& cfg) {
  cfg.train.seed = cfg.seed;
  cfg.train.validate();
  if (cfg.data.kind == DataSourceKind::Synthetic) cfg.data.synthetic.validate();
  if (cfg.data.kind != DataSourceKind::Synthetic && cfg.data.path.empty()) {
    throw ConfigError("config key 'data.path' is required for file and text sources");
  }
  if (cfg.sweep_alphas.empty()) throw ConfigError("config key 'sweep.alphas' must be non-empty");
  if (cfg.sweep_seeds.empty()) throw ConfigError("config key 'sweep.seeds' must be non-empty");
  for (double a : cfg.sweep_alphas) {
    if (!(a >= 0.0)) throw ConfigError("config key 'sweep.alphas' must hold values >= 0");
  }
  BackboneConfig probe = cfg.model;
  probe.input_dim = 1;
  probe.num_classes = 2;
  probe.validate();
}

json to_json(const ExperimentConfig& cfg) {
  const SyntheticSpec& s = cfg.data.synthetic;
  const TrainConfig& t = cfg.train;
  return json{
      {"seed", cfg.seed},
      {"out", cfg.out_dir.string()},
      {"data",
       {{"source", source_name(cfg.data.kind)},
        {"seed", cfg.data.seed},
        {"path", cfg.data.path.string()},
        {"format", cfg.data.format == TableFormat::Delimited ? "delimited" : "records"},
        {"text_dim", cfg.data.text_dim},
        {"split", cfg.data.split},
        {"synthetic",
         {{"num_classes", s.num_classes},
          {"n", s.n},
          {"feature_dim", s.feature_dim},
          {"easy_fraction", s.easy_fraction},
          {"margin_easy", s.margin_easy},
          {"margin_hard", s.margin_hard},
          {"noise", s.noise},
          {"components_per_class", s.components_per_class}}}}},
      {"model",
       {{"num_layers", cfg.model.num_layers},
        {"hidden_dim", cfg.model.hidden_dim},
        {"policy_hidden_dim", cfg.model.policy_hidden_dim}}},
      {"train",
       {{"init_epochs", t.init_epochs},
        {"policy_epochs", t.policy_epochs},
        {"task_epochs", t.task_epochs},
        {"rounds_max", t.rounds_max},
        {"lr_init", t.lr_init},
        {"lr_policy", t.lr_policy},
        {"lr_task", t.lr_task},
        {"alpha", t.reward.alpha},
        {"reward", reward_name(t.reward.variant)},
        {"samples_per_instance", t.samples_per_instance},
        {"eps_start", t.eps_start},
        {"eps_end", t.eps_end},
        {"patience", t.patience},
        {"batch_size", t.batch_size}}},
      {"sweep", {{"alphas", cfg.sweep_alphas}, {"seeds", cfg.sweep_seeds}}},
      {"eval", {{"entropy_thresholds", cfg.entropy_thresholds}}},
      {"gradcheck", {{"seeds", cfg.gradcheck_seeds}}},
  };
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j.erase("out");  // where results go does not change them
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

Dataset load_source_dataset(const ExperimentConfig& cfg) {
  switch (cfg.data.kind) {
    case DataSourceKind::Synthetic: return gen_synthetic(cfg.data.synthetic, cfg.data.seed);
    case DataSourceKind::File: return load_table(cfg.data.path, cfg.data.format);
    case DataSourceKind::Text: return load_text_lines(cfg.data.path, cfg.data.text_dim);
  }
  throw ConfigError("unknown data source");
}

SplitSets prepare_splits(const ExperimentConfig& cfg) {
  return split_standardize(load_source_dataset(cfg), cfg.data.split, cfg.data.seed);
}

BackboneConfig model_config_for(const ExperimentConfig& cfg, const Dataset& data) {
  BackboneConfig m = cfg.model;
  m.input_dim = data.feature_dim;
  m.num_classes = data.num_classes;
  m.validate();
  return m;
}

// --- output helpers ------------------------------------------------------

namespace {

class Logger {
 public:
  Logger(std::ostream& out, const ExperimentConfig& cfg, std::string command)
      : out_(out), hash_(config_hash(cfg)), seed_(cfg.seed), command_(std::move(command)) {}

  void record(json fields) {
    fields["command"] = command_;
    fields["config_hash"] = hash_;
    fields["seed"] = seed_;
    out_ << fields.dump() << '\n';
  }

 private:
  std::ostream& out_;
  std::string hash_;
  std::uint64_t seed_;
  std::string command_;
};

std::string provenance(const ExperimentConfig& cfg) {
  return "config_hash=" + config_hash(cfg) + " seed=" + std::to_string(cfg.seed);
}

std::filesystem::path ensure_out(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const ExperimentConfig& cfg, const std::string& header)
      : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot write " + path.string());
    out_ << "# " << provenance(cfg) << '\n' << header << '\n';
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return format_double(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <typename T>
  static std::string cell(T v) requires std::is_integral_v<T> { return std::to_string(v); }

  std::ofstream out_;
};

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::filesystem::path default_checkpoint(const ExperimentConfig& cfg) {
  return cfg.out_dir / "checkpoints" / "best.ckpt";
}

}  // namespace

int run_gen_data(const ExperimentConfig& cfg, std::ostream& log) {
  Logger logger(log, cfg, "gen-data");
  const Dataset ds = load_source_dataset(cfg);
  const auto path = ensure_out(cfg) / "data.csv";
  write_table(path, ds, TableFormat::Delimited, {provenance(cfg) + " data_seed=" + std::to_string(cfg.data.seed)});
  logger.record({{"event", "dataset_written"}, {"path", path.string()}, {"instances", ds.size()},
                 {"feature_dim", ds.feature_dim}, {"num_classes", ds.num_classes}});
  return kExitOk;
}

int run_train(const ExperimentConfig& cfg, std::ostream& log) {
  Logger logger(log, cfg, "train");
  const auto start = std::chrono::steady_clock::now();
  const SplitSets splits = prepare_splits(cfg);
  const BackboneConfig mc = model_config_for(cfg, splits.train);
  const auto out = ensure_out(cfg);

  std::ofstream train_log(out / "train_log.jsonl", std::ios::binary);
  const std::string hash = config_hash(cfg);
  TrainHooks hooks;
  hooks.checkpoint_dir = out / "checkpoints";
  hooks.log = [&](const std::string& line) {
    json rec = json::parse(line);
    rec["config_hash"] = hash;
    rec["seed"] = cfg.seed;
    train_log << rec.dump() << '\n';
  };
  double init_full_depth = 0.0;
  hooks.after_init = [&](const ModelBundle& m, const InitStageResult&) {
    init_full_depth = evaluate_full_depth(m, splits.dev).accuracy;
    save_checkpoint(out / "checkpoints" / "init.ckpt", m);
  };
  std::filesystem::create_directories(hooks.checkpoint_dir);

  ModelBundle model = initial_model(mc, cfg.seed);
  const TrainReport report = train_iterative(model, splits.train, splits.dev, cfg.train, hooks);

  json rounds = json::array();
  CsvWriter summary(out / "train_summary.csv", cfg, "round,dev_accuracy,dev_mean_exit_layer,dev_saved_layers");
  for (const RoundRecord& r : report.rounds) {
    rounds.push_back({{"round", r.round},
                      {"dev_accuracy", r.dev_accuracy},
                      {"dev_mean_exit_layer", r.dev_mean_exit_layer},
                      {"dev_saved_layers", r.dev_saved_layers},
                      {"policy_trace", r.policy_trace},
                      {"task_trace", r.task_trace},
                      {"memorized_histogram", r.memorized_histogram}});
    summary.row(r.round, r.dev_accuracy, r.dev_mean_exit_layer, r.dev_saved_layers);
  }
  json config_json = to_json(cfg);
  config_json.erase("out");  // keeps reruns into other directories byte-identical
  const json report_json{{"config_hash", hash},
                         {"seed", cfg.seed},
                         {"config", config_json},
                         {"init_trace", report.init_trace},
                         {"init_full_depth_dev_accuracy", init_full_depth},
                         {"rounds", rounds},
                         {"best_round", report.best_round},
                         {"best_dev_accuracy", report.best_dev_accuracy}};
  std::ofstream(out / "report.json", std::ios::binary) << report_json.dump(2) << '\n';
  logger.record({{"event", "trained"}, {"rounds", report.rounds.size()}, {"best_round", report.best_round},
                 {"best_dev_accuracy", report.best_dev_accuracy}, {"wall_ms", elapsed_ms(start)}});
  return kExitOk;
}

int run_eval(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint, std::ostream& log) {
  Logger logger(log, cfg, "eval");
  const auto start = std::chrono::steady_clock::now();
  const SplitSets splits = prepare_splits(cfg);
  const ModelBundle model = load_checkpoint(checkpoint.value_or(default_checkpoint(cfg)));
  if (model.config().input_dim != splits.test.feature_dim) {
    throw DataError("checkpoint input_dim does not match the dataset feature dimension");
  }
  const auto out = ensure_out(cfg);
  const Evaluation ev = evaluate_detailed(model, splits.test);
  const double infer_ms = elapsed_ms(start);

  CsvWriter instances(out / "eval_instances.csv", cfg, "id,label,prediction,exit_layer");
  for (const InstanceRecord& r : ev.records) instances.row(r.id, r.label, r.prediction, r.exit_layer);

  CsvWriter summary(out / "eval_summary.csv", cfg, "accuracy,mean_exit_layer,saved_layers");
  summary.row(ev.metrics.accuracy, ev.metrics.mean_exit_layer, ev.metrics.saved_layers);

  CsvWriter baselines(out / "eval_baselines.csv", cfg, "method,threshold,accuracy,mean_exit_layer,saved_layers");
  const EvalMetrics full = evaluate_full_depth(model, splits.test);
  baselines.row("full_depth", 0.0, full.accuracy, full.mean_exit_layer, full.saved_layers);
  for (double th : cfg.entropy_thresholds) {
    const EvalMetrics m = evaluate_entropy(model, splits.test, th);
    baselines.row("entropy", th, m.accuracy, m.mean_exit_layer, m.saved_layers);
  }
  logger.record({{"event", "evaluated"}, {"accuracy", ev.metrics.accuracy},
                 {"mean_exit_layer", ev.metrics.mean_exit_layer}, {"saved_layers", ev.metrics.saved_layers},
                 {"wall_ms", infer_ms}});
  return kExitOk;
}

int run_hardness(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                 std::ostream& log) {
  Logger logger(log, cfg, "hardness");
  const SplitSets splits = prepare_splits(cfg);
  const BackboneConfig mc = model_config_for(cfg, splits.train);
  // Forgetting events come from the init-stage epochs, rerun deterministically.
  ModelBundle init_model = initial_model(mc, cfg.seed);
  const InitStageResult init = run_init_stage(init_model, splits.train, cfg.train);
  const ModelBundle model = checkpoint ? load_checkpoint(*checkpoint) : init_model;
  if (model.config().input_dim != splits.train.feature_dim) {
    throw DataError("checkpoint input_dim does not match the dataset feature dimension");
  }

  const auto out = ensure_out(cfg);
  const HardnessReport report = hardness_report(model, splits.train, init.forgetting);
  CsvWriter rows(out / "hardness.csv", cfg, "id,memorized_layer,final_layer_loss,forgetting_events");
  for (const HardnessRow& r : report.rows) rows.row(r.id, r.memorized_layer, r.final_layer_loss, r.forgetting_events);

  auto rho = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("no_variance"); };
  CsvWriter summary(out / "hardness_summary.csv", cfg, "spearman_memorized_vs_loss,spearman_memorized_vs_forgetting");
  summary.row(rho(report.spearman_loss), rho(report.spearman_forgetting));

  CsvWriter profile(out / "layer_profile.csv", cfg, "layer,mean_loss,accuracy");
  const auto stats = layer_profile(model, splits.train);
  for (std::size_t t = 0; t < stats.size(); ++t) profile.row(t + 1, stats[t].mean_loss, stats[t].accuracy);

  logger.record({{"event", "hardness"}, {"spearman_loss", rho(report.spearman_loss)},
                 {"spearman_forgetting", rho(report.spearman_forgetting)}});
  return kExitOk;
}

int run_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  Logger logger(log, cfg, "sweep");
  const auto start = std::chrono::steady_clock::now();
  const SplitSets splits = prepare_splits(cfg);
  SweepSetup setup;
  setup.model = model_config_for(cfg, splits.train);
  setup.train = cfg.train;
  setup.train_data = &splits.train;
  setup.dev_data = &splits.dev;
  setup.test_data = &splits.test;
  const auto out = ensure_out(cfg);
  setup.checkpoint_dir = out / "sweep_checkpoints";

  const SweepResult result = sweep_alpha(setup, cfg.sweep_alphas, cfg.sweep_seeds, [&](const SweepRunView& v) {
    logger.record({{"event", "sweep_run"}, {"alpha", v.alpha}, {"run_seed", v.seed},
                   {"best_round", v.report.best_round}, {"wall_ms", elapsed_ms(start)}});
  });

  CsvWriter runs(out / "sweep.csv", cfg,
                 "alpha,seed,accuracy,mean_exit_layer,saved_layers,full_depth_accuracy,best_round");
  for (const SweepRecord& r : result.runs) {
    runs.row(r.alpha, r.seed, r.metrics.accuracy, r.metrics.mean_exit_layer, r.metrics.saved_layers,
             r.full_depth_accuracy, r.best_round);
  }
  CsvWriter summary(out / "sweep_summary.csv", cfg,
                    "alpha,accuracy,mean_exit_layer,saved_layers,full_depth_accuracy,runs");
  for (const SweepSummary& s : result.summary) {
    summary.row(s.alpha, s.accuracy, s.mean_exit_layer, s.saved_layers, s.full_depth_accuracy, s.runs);
  }
  logger.record({{"event", "sweep_done"}, {"runs", result.runs.size()}, {"wall_ms", elapsed_ms(start)}});
  return kExitOk;
}

int run_gradcheck(const ExperimentConfig& cfg, std::ostream& log) {
  Logger logger(log, cfg, "gradcheck");
  constexpr double kTolerance = 1e-4;
  BackboneConfig small;
  small.num_layers = 3;
  small.input_dim = 4;
  small.hidden_dim = 5;
  small.num_classes = 3;
  small.policy_hidden_dim = 4;

  const auto out = ensure_out(cfg);
  CsvWriter rows(out / "gradcheck.csv", cfg, "seed,max_relative_error");
  double worst = 0.0;
  for (std::size_t k = 0; k < cfg.gradcheck_seeds; ++k) {
    const std::uint64_t seed = cfg.seed + k;
    const double err = model_gradient_check(small, seed);
    rows.row(seed, err);
    worst = std::max(worst, err);
  }
  logger.record({{"event", "gradcheck"}, {"max_relative_error", worst}, {"tolerance", kTolerance},
                 {"passed", worst < kTolerance}});
  std::cout << "max relative error: " << format_double(worst) << '\n';
  return worst < kTolerance ? kExitOk : kExitFailure;
}

}  // namespace cee
