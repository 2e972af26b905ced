#include "cee/gradcheck.hpp"

#include <vector>

namespace cee {

double model_gradient_check(const BackboneConfig& config, std::uint64_t seed, double h) {
  Rng root(seed);
  Rng init = root.split("model");
  ModelBundle model = ModelBundle::build(config, init);
  // Move every parameter off its structured init (zero biases, fixed exit
  // bias) so all code paths carry generic values.
  Rng jitter = root.split("jitter");
  for (Parameter* p : model.parameters()) {
    for (double& v : p->value) v += 0.1 * jitter.normal();
  }

  Rng probe = root.split("probe");
  const std::size_t L = config.num_layers;
  struct Probe {
    Vec x;
    std::size_t label;
    std::vector<std::size_t> actions;
  };
  std::vector<Probe> probes(2);
  for (Probe& pr : probes) {
    pr.x.resize(config.input_dim);
    for (double& v : pr.x) v = probe.normal();
    pr.label = static_cast<std::size_t>(probe.uniform_int(config.num_classes));
    for (std::size_t t = 0; t < L; ++t) pr.actions.push_back(static_cast<std::size_t>(probe.uniform_int(2)));
  }

  const double denom = static_cast<double>(L * (L + 1)) / 2.0;
  auto loss = [&](Tape& tape) {
    std::vector<Tape::Node> terms;
    Vec weights;
    for (const Probe& pr : probes) {
      Tape::Node s = model.record_embed(tape, pr.x);
      for (std::size_t t = 1; t <= L; ++t) {
        s = model.record_block(tape, t, s);
        terms.push_back(tape.softmax_cross_entropy(model.record_classifier_logits(tape, t, s), pr.label));
        weights.push_back(static_cast<double>(t) / denom);
        terms.push_back(tape.log_softmax_at(model.record_policy_logits(tape, t, s), pr.actions[t - 1]));
        weights.push_back(1.0);
      }
    }
    return tape.weighted_sum(terms, weights);
  };
  const auto params = model.parameters();
  return finite_diff_check(loss, params, h);
}

}  // namespace cee
