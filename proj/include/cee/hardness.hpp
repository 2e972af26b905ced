#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cee/data.hpp"
#include "cee/model.hpp"

namespace cee {

// c[i] is true iff the classifier at layer i+1 predicts the label.
using CorrectnessVector = std::vector<bool>;
// instance id -> memorized layer, 1 <= M <= L.
using MemorizedLayerTable = std::map<std::size_t, std::size_t>;

CorrectnessVector correctness(const ModelBundle& model, const Instance& inst);

// Earliest layer k such that every layer >= k is correct; L when the last
// layer is wrong.
std::size_t memorized_layer(const CorrectnessVector& c);

// Number of correct -> incorrect transitions between consecutive entries.
std::size_t forgetting_events(const std::vector<bool>& history);

// 1-based ranks; tied values share their mean rank.
Vec average_ranks(std::span<const double> xs);

// Pearson correlation of average ranks. nullopt when either list has no
// rank variance.
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

struct LayerStats {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

std::vector<LayerStats> layer_profile(const ModelBundle& model, const Dataset& data);

struct HardnessRow {
  std::size_t id = 0;
  std::size_t memorized_layer = 0;
  double final_layer_loss = 0.0;
  std::size_t forgetting_events = 0;
};

struct HardnessReport {
  std::vector<HardnessRow> rows;
  std::optional<double> spearman_loss;
  std::optional<double> spearman_forgetting;
};

// `forgetting` is indexed like data.instances; pass empty to report zeros.
HardnessReport hardness_report(const ModelBundle& model, const Dataset& data,
                               const std::vector<std::size_t>& forgetting);

}  // namespace cee
