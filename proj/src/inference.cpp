#include "cee/inference.hpp"

#include "cee/errors.hpp"

namespace cee {

namespace {

template <typename StopRule>
InferenceResult walk(const ModelBundle& model, std::span<const double> x, StopRule&& stop) {
  const std::size_t L = model.num_layers();
  InferenceResult res;
  Vec s = model.embed(x);
  for (std::size_t t = 1; t <= L; ++t) {
    s = model.apply_block(t, s);
    ++res.layers_computed;
    if (t == L || stop(t, s, res)) {
      res.exit_layer = t;
      res.predicted = argmax(model.classify(t, s));
      return res;
    }
  }
  return res;
}

}  // namespace

InferenceResult infer(const ModelBundle& model, std::span<const double> x) {
  return walk(model, x, [&](std::size_t t, const Vec& s, InferenceResult& res) {
    const double p = model.policy_exit_prob(t, s);
    res.p_exit_trace.push_back(p);
    return p > 0.5;
  });
}

InferenceResult entropy_exit_infer(const ModelBundle& model, std::span<const double> x, double threshold) {
  if (!(threshold >= 0.0)) throw UsageError("entropy_exit_infer: threshold must be >= 0");
  return walk(model, x, [&](std::size_t t, const Vec& s, InferenceResult&) {
    return entropy(model.classify(t, s)) < threshold;
  });
}

InferenceResult infer_full_depth(const ModelBundle& model, std::span<const double> x) {
  return walk(model, x, [](std::size_t, const Vec&, InferenceResult&) { return false; });
}

EvalMetrics metrics_from(std::span<const InstanceRecord> records, std::size_t num_layers) {
  if (records.empty()) throw DataError("evaluate: empty dataset");
  std::size_t correct = 0;
  std::size_t layer_sum = 0;
  for (const InstanceRecord& r : records) {
    correct += r.prediction == r.label ? 1 : 0;
    layer_sum += r.exit_layer;
  }
  EvalMetrics m;
  m.count = records.size();
  const double n = static_cast<double>(records.size());
  m.accuracy = static_cast<double>(correct) / n;
  m.mean_exit_layer = static_cast<double>(layer_sum) / n;
  m.saved_layers = 1.0 - m.mean_exit_layer / static_cast<double>(num_layers);
  return m;
}

Evaluation evaluate_detailed(const ModelBundle& model, const Dataset& data, ExitRule rule, double entropy_threshold) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  Evaluation ev;
  ev.records.reserve(data.size());
  for (const Instance& inst : data.instances) {
    InferenceResult r;
    switch (rule) {
      case ExitRule::Policy: r = infer(model, inst.features); break;
      case ExitRule::Entropy: r = entropy_exit_infer(model, inst.features, entropy_threshold); break;
      case ExitRule::FullDepth: r = infer_full_depth(model, inst.features); break;
    }
    ev.records.push_back(InstanceRecord{inst.id, inst.label, r.predicted, r.exit_layer});
  }
  ev.metrics = metrics_from(ev.records, model.num_layers());
  return ev;
}

EvalMetrics evaluate(const ModelBundle& model, const Dataset& data) {
  return evaluate_detailed(model, data, ExitRule::Policy).metrics;
}

EvalMetrics evaluate_full_depth(const ModelBundle& model, const Dataset& data) {
  return evaluate_detailed(model, data, ExitRule::FullDepth).metrics;
}

EvalMetrics evaluate_entropy(const ModelBundle& model, const Dataset& data, double threshold) {
  return evaluate_detailed(model, data, ExitRule::Entropy, threshold).metrics;
}

}  // namespace cee
