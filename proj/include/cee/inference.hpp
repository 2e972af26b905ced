#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cee/data.hpp"
#include "cee/model.hpp"

namespace cee {

struct InferenceResult {
  std::size_t predicted = 0;
  std::size_t exit_layer = 0;
  Vec p_exit_trace;  // one entry per evaluated layer (policy rule only)
  std::size_t layers_computed = 0;
};

// Exits at the first layer whose policy assigns p_exit > 0.5, else at L.
InferenceResult infer(const ModelBundle& model, std::span<const double> x);
// Exits at the first layer whose classifier entropy is < threshold, else at L.
InferenceResult entropy_exit_infer(const ModelBundle& model, std::span<const double> x, double threshold);
// Always runs all L layers.
InferenceResult infer_full_depth(const ModelBundle& model, std::span<const double> x);

struct EvalMetrics {
  double accuracy = 0.0;
  double mean_exit_layer = 0.0;
  double saved_layers = 0.0;  // 1 - mean_exit_layer / L
  std::size_t count = 0;
};

struct InstanceRecord {
  std::size_t id = 0;
  std::size_t label = 0;
  std::size_t prediction = 0;
  std::size_t exit_layer = 0;
};

enum class ExitRule { Policy, Entropy, FullDepth };

struct Evaluation {
  EvalMetrics metrics;
  std::vector<InstanceRecord> records;
};

EvalMetrics metrics_from(std::span<const InstanceRecord> records, std::size_t num_layers);
Evaluation evaluate_detailed(const ModelBundle& model, const Dataset& data, ExitRule rule = ExitRule::Policy,
                             double entropy_threshold = 0.0);
EvalMetrics evaluate(const ModelBundle& model, const Dataset& data);
EvalMetrics evaluate_full_depth(const ModelBundle& model, const Dataset& data);
EvalMetrics evaluate_entropy(const ModelBundle& model, const Dataset& data, double threshold);

}  // namespace cee
