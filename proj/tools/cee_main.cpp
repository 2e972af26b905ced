// Experiment driver: gen-data, train, eval, hardness, sweep, gradcheck.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cee/errors.hpp"
#include "cee/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> alpha;
  std::optional<std::string> checkpoint;
};

int exit_code_for(cee::ErrorKind kind) {
  switch (kind) {
    case cee::ErrorKind::Config: return cee::kExitConfig;
    case cee::ErrorKind::Data: return cee::kExitData;
    case cee::ErrorKind::Training: return cee::kExitDiverged;
    default: return cee::kExitFailure;
  }
}

const char* category(cee::ErrorKind kind) {
  switch (kind) {
    case cee::ErrorKind::Config: return "config";
    case cee::ErrorKind::Data: return "data";
    case cee::ErrorKind::Training: return "training";
    case cee::ErrorKind::Usage: return "usage";
    case cee::ErrorKind::Numeric: return "numeric";
  }
  return "internal";
}

cee::ExperimentConfig resolve(const Options& opt) {
  cee::ExperimentConfig cfg = opt.config.empty() ? cee::ExperimentConfig{} : cee::load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.alpha) cfg.train.reward.alpha = *opt.alpha;
  if (opt.out) cfg.out_dir = *opt.out;
  if (cfg.out_dir.is_relative()) {
    if (const char* root = std::getenv("CEE_OUT_ROOT"); root && *root) cfg.out_dir = std::filesystem::path(root) / cfg.out_dir;
  }
  cee::finalize(cfg);
  return cfg;
}

void report_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"level", "error"}, {"category", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforcement-learned early exiting laboratory"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool with_checkpoint) {
    sub->add_option("--config", opt.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "training seed override");
    sub->add_option("--out", opt.out, "output directory (relative paths go under $CEE_OUT_ROOT)");
    sub->add_option("--alpha", opt.alpha, "reward trade-off coefficient override");
    if (with_checkpoint) sub->add_option("--checkpoint", opt.checkpoint, "model checkpoint to load");
  };

  auto* gen = app.add_subcommand("gen-data", "write the configured dataset as a delimited table");
  auto* train = app.add_subcommand("train", "run iterative training and write checkpoints and a report");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* hardness = app.add_subcommand("hardness", "memorized-layer, forgetting and layer-profile reports");
  auto* sweep = app.add_subcommand("sweep", "train across the alpha grid and seeds");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  for (auto* sub : {gen, train, sweep, gradcheck}) add_common(sub, false);
  for (auto* sub : {eval, hardness}) add_common(sub, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cee::kExitConfig;
  }

  try {
    const cee::ExperimentConfig cfg = resolve(opt);
    std::optional<std::filesystem::path> ckpt;
    if (opt.checkpoint) ckpt = *opt.checkpoint;
    if (gen->parsed()) return cee::run_gen_data(cfg, std::cerr);
    if (train->parsed()) return cee::run_train(cfg, std::cerr);
    if (eval->parsed()) return cee::run_eval(cfg, ckpt, std::cerr);
    if (hardness->parsed()) return cee::run_hardness(cfg, ckpt, std::cerr);
    if (sweep->parsed()) return cee::run_sweep(cfg, std::cerr);
    if (gradcheck->parsed()) return cee::run_gradcheck(cfg, std::cerr);
  } catch (const cee::Error& e) {
    report_error(category(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return cee::kExitFailure;
  }
  return cee::kExitFailure;
}
