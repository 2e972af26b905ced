#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cee/data.hpp"
#include "cee/hardness.hpp"
#include "cee/model.hpp"
#include "cee/rl.hpp"

namespace cee {

struct TrainConfig {
  std::size_t init_epochs = 20;
  std::size_t policy_epochs = 4;
  std::size_t task_epochs = 2;
  std::size_t rounds_max = 10;
  double lr_init = 0.05;
  double lr_policy = 0.5;
  double lr_task = 0.02;
  RewardConfig reward;
  std::size_t samples_per_instance = 4;  // K
  double eps_start = 0.3;
  double eps_end = 0.0;
  std::size_t patience = 3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const;
};

// Exploration rate for `epoch` (0-based) of a policy stage: linear from
// eps_start to eps_end across policy_epochs.
double epsilon_at(const TrainConfig& cfg, std::size_t epoch);

// (sum_i i * l_i) / (sum_i i) over per-layer losses l_1..l_L.
double weighted_layer_objective(std::span<const double> layer_losses);

// Fresh model for `seed`, drawn from the "model" substream.
ModelBundle initial_model(const BackboneConfig& config, std::uint64_t seed);

struct InitStageResult {
  Vec objective_trace;  // mean objective per epoch
  // Final-layer correctness of each training instance (indexed like the
  // dataset) each time it was visited, one entry per epoch.
  std::vector<std::vector<bool>> correctness_history;
  std::vector<std::size_t> forgetting;
};

// Mean weighted-sum objective over `data`; records and backpropagates when
// `accumulate_scale` is set (grads scaled by it).
double init_objective(ModelBundle& model, const Dataset& data, std::optional<double> accumulate_scale = std::nullopt);

InitStageResult train_init(ModelBundle& model, const Dataset& train, const TrainConfig& cfg, Rng& rng);

MemorizedLayerTable refresh_memorized(const ModelBundle& model, const Dataset& train);

struct PolicyStageResult {
  Vec mean_return_trace;
  Vec mean_exit_layer_trace;
};

PolicyStageResult train_policy_stage(ModelBundle& model, const Dataset& train, const MemorizedLayerTable& table,
                                     const TrainConfig& cfg, Rng& rng);

struct ExitLoss {
  std::size_t exit_layer = 0;
  double loss = 0.0;
};

// Samples an exit layer from the frozen policy (eps = 0), records H(y, P_T)
// at that layer only and backpropagates it scaled by `scale` into omega.
ExitLoss accumulate_exit_loss_gradient(ModelBundle& model, const Instance& inst, Rng& rng, double scale);

struct TaskStageResult {
  Vec loss_trace;
  Vec mean_exit_layer_trace;
};

TaskStageResult train_task_stage(ModelBundle& model, const Dataset& train, const TrainConfig& cfg, Rng& rng);

struct RoundRecord {
  std::size_t round = 0;
  double dev_accuracy = 0.0;
  double dev_mean_exit_layer = 0.0;
  double dev_saved_layers = 0.0;
  Vec policy_trace;
  Vec task_trace;
  std::vector<std::size_t> memorized_histogram;  // [M-1] -> count
};

struct TrainReport {
  Vec init_trace;
  std::vector<RoundRecord> rounds;
  std::size_t best_round = 0;
  double best_dev_accuracy = 0.0;
};

struct TrainHooks {
  // Receives one JSON object per line.
  std::function<void(const std::string&)> log;
  // When set, round_<r>.ckpt and best.ckpt are written here.
  std::filesystem::path checkpoint_dir;
  std::function<void(const ModelBundle&, const InitStageResult&)> after_init;
};

// Steps 1-5: init once, then rounds of refresh -> policy -> task until
// rounds_max or `patience` rounds without dev improvement. The model is
// left at the best-dev checkpoint.
TrainReport train_iterative(ModelBundle& model, const Dataset& train, const Dataset& dev, const TrainConfig& cfg,
                            const TrainHooks& hooks = {});
// Steps 2-5 on a model that already completed the init stage.
TrainReport train_rounds(ModelBundle& model, const Dataset& train, const Dataset& dev, const TrainConfig& cfg,
                         const InitStageResult& init, const TrainHooks& hooks = {});
// The init stage exactly as train_iterative runs it.
InitStageResult run_init_stage(ModelBundle& model, const Dataset& train, const TrainConfig& cfg,
                               const TrainHooks& hooks = {});

struct LayerExitCounts {
  std::vector<std::size_t> hits;    // [t-1] -> correct predictions among exits at t
  std::vector<std::size_t> totals;  // [t-1] -> exits at t
};

// Tallies samples_per_instance sampled (eps = 0) trajectories per instance.
LayerExitCounts conditional_layer_counts(const ModelBundle& model, const Dataset& data,
                                         std::size_t samples_per_instance, Rng& rng);
// hits / totals per layer; nullopt for layers nobody exits at.
std::vector<std::optional<double>> conditional_layer_accuracy(const ModelBundle& model, const Dataset& data,
                                                              std::size_t samples_per_instance, Rng& rng);

}  // namespace cee
