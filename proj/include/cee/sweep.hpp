#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "cee/data.hpp"
#include "cee/inference.hpp"
#include "cee/model.hpp"
#include "cee/training.hpp"

namespace cee {

// 0.0, 0.005, ..., 0.04
std::vector<double> default_alpha_grid();

struct SweepSetup {
  BackboneConfig model;
  TrainConfig train;
  const Dataset* train_data = nullptr;
  const Dataset* dev_data = nullptr;
  const Dataset* test_data = nullptr;
  // When set, the retained checkpoint of each run is written as
  // alpha_<a>_seed_<s>.ckpt.
  std::filesystem::path checkpoint_dir;
};

struct SweepRecord {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  EvalMetrics metrics;               // test split, policy exits
  double full_depth_accuracy = 0.0;  // init-stage model, always exiting at L
  std::size_t best_round = 0;
  std::filesystem::path checkpoint;
};

struct SweepSummary {
  double alpha = 0.0;
  double accuracy = 0.0;
  double mean_exit_layer = 0.0;
  double saved_layers = 0.0;
  double full_depth_accuracy = 0.0;
  std::size_t runs = 0;
};

struct SweepRunView {
  double alpha;
  std::uint64_t seed;
  const ModelBundle& init_model;
  const ModelBundle& final_model;
  const TrainReport& report;
};

struct SweepResult {
  std::vector<SweepRecord> runs;       // keyed by (alpha, seed)
  std::vector<SweepSummary> summary;   // per alpha, averaged over seeds
};

// For every seed the init stage is run once and shared by all alphas; the
// init stage does not depend on alpha and draws from its own substream, so
// each record equals a standalone train_iterative run.
SweepResult sweep_alpha(const SweepSetup& setup, std::span<const double> alphas, std::span<const std::uint64_t> seeds,
                        const std::function<void(const SweepRunView&)>& on_run = {});

}  // namespace cee
