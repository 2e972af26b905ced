#include "cee/hardness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cee/errors.hpp"

namespace cee {

CorrectnessVector correctness(const ModelBundle& model, const Instance& inst) {
  const std::size_t L = model.num_layers();
  const auto states = model.forward_states(inst.features, L);
  CorrectnessVector c(L);
  for (std::size_t t = 1; t <= L; ++t) c[t - 1] = argmax(model.classify(t, states[t - 1])) == inst.label;
  return c;
}

std::size_t memorized_layer(const CorrectnessVector& c) {
  if (c.empty()) throw UsageError("memorized_layer: empty correctness vector");
  const std::size_t L = c.size();
  if (!c[L - 1]) return L;
  std::size_t k = L;
  while (k > 1 && c[k - 2]) --k;
  return k;
}

std::size_t forgetting_events(const std::vector<bool>& history) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i - 1] && !history[i]) ++n;
  }
  return n;
}

Vec average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  Vec ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    // positions i..j hold ranks i+1..j+1
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw UsageError("spearman: need two lists of equal length >= 2");
  }
  const Vec rx = average_ranks(xs);
  const Vec ry = average_ranks(ys);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<LayerStats> layer_profile(const ModelBundle& model, const Dataset& data) {
  if (data.empty()) throw DataError("layer_profile: empty dataset");
  const std::size_t L = model.num_layers();
  std::vector<LayerStats> stats(L);
  for (const Instance& inst : data.instances) {
    const auto states = model.forward_states(inst.features, L);
    for (std::size_t t = 1; t <= L; ++t) {
      const Vec p = model.classify(t, states[t - 1]);
      stats[t - 1].mean_loss += cross_entropy(inst.label, p);
      stats[t - 1].accuracy += argmax(p) == inst.label ? 1.0 : 0.0;
    }
  }
  const double n = static_cast<double>(data.size());
  for (LayerStats& s : stats) {
    s.mean_loss /= n;
    s.accuracy /= n;
  }
  return stats;
}

HardnessReport hardness_report(const ModelBundle& model, const Dataset& data,
                               const std::vector<std::size_t>& forgetting) {
  if (data.empty()) throw DataError("hardness_report: empty dataset");
  if (!forgetting.empty() && forgetting.size() != data.size()) {
    throw UsageError("hardness_report: forgetting counts do not match dataset size");
  }
  const std::size_t L = model.num_layers();
  HardnessReport report;
  Vec ms, losses, forgets;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Instance& inst = data.instances[i];
    const auto states = model.forward_states(inst.features, L);
    CorrectnessVector c(L);
    for (std::size_t t = 1; t <= L; ++t) c[t - 1] = argmax(model.classify(t, states[t - 1])) == inst.label;
    HardnessRow row;
    row.id = inst.id;
    row.memorized_layer = memorized_layer(c);
    row.final_layer_loss = cross_entropy(inst.label, model.classify(L, states[L - 1]));
    row.forgetting_events = forgetting.empty() ? 0 : forgetting[i];
    ms.push_back(static_cast<double>(row.memorized_layer));
    losses.push_back(row.final_layer_loss);
    forgets.push_back(static_cast<double>(row.forgetting_events));
    report.rows.push_back(row);
  }
  if (data.size() >= 2) {
    report.spearman_loss = spearman(ms, losses);
    report.spearman_forgetting = spearman(ms, forgets);
  }
  return report;
}

}  // namespace cee
