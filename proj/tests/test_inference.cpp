#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "cee/errors.hpp"
#include "cee/inference.hpp"
#include "cee/sweep.hpp"
#include "cee/training.hpp"

using namespace cee;

namespace {

BackboneConfig tiny(std::size_t L, std::size_t classes = 2) {
  BackboneConfig c;
  c.num_layers = L;
  c.input_dim = 3;
  c.hidden_dim = 5;
  c.num_classes = classes;
  c.policy_hidden_dim = 4;
  return c;
}

// Policy at layer t ignores the state and has p_exit = sigmoid(logit).
void fixed_exit_logit(ModelBundle& m, std::size_t t, double logit) {
  PolicyHead& h = m.policy(t);
  std::fill(h.out.weight.value.begin(), h.out.weight.value.end(), 0.0);
  h.out.bias.value = {logit, 0.0};
}

double logit(double p) { return std::log(p / (1.0 - p)); }

Dataset make_data(std::size_t n, std::size_t classes, Rng& rng) {
  Dataset ds;
  ds.num_classes = classes;
  ds.feature_dim = 3;
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst{i, Vec{rng.normal(), rng.normal(), rng.normal()}, static_cast<std::size_t>(rng.uniform_int(classes))};
    ds.instances.push_back(inst);
  }
  return ds;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("policy exits at the first crossing of 0.5") {
  ModelBundle m = initial_model(tiny(5), 1);
  const double ps[] = {0.2, 0.7, 0.9, 0.1, 0.3};
  for (std::size_t t = 1; t <= 5; ++t) fixed_exit_logit(m, t, logit(ps[t - 1]));
  const Vec x{0.1, 0.2, 0.3};
  const InferenceResult r = infer(m, x);
  CHECK(r.exit_layer == 2);
  CHECK(r.layers_computed == 2);
  REQUIRE(r.p_exit_trace.size() == 2);
  CHECK(r.p_exit_trace[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(r.p_exit_trace[1] == doctest::Approx(0.7).epsilon(1e-12));
  const auto states = m.forward_states(x, 2);
  CHECK(r.predicted == argmax(m.classify(2, states[1])));
}

TEST_CASE("no crossing exits at L; exactly 0.5 continues") {
  ModelBundle m = initial_model(tiny(4), 2);
  for (std::size_t t = 1; t <= 4; ++t) fixed_exit_logit(m, t, logit(0.3));
  CHECK(infer(m, Vec{1, 2, 3}).exit_layer == 4);
  CHECK(infer(m, Vec{1, 2, 3}).layers_computed == 4);
  fixed_exit_logit(m, 2, 0.0);  // exactly 0.5
  CHECK(m.policy_exit_prob(2, m.forward_states(Vec{1, 2, 3}, 2)[1]) == 0.5);
  CHECK(infer(m, Vec{1, 2, 3}).exit_layer == 4);
  CHECK_THROWS_AS(infer(m, Vec{1, 2}), DataError);
}

TEST_CASE("prediction equals the exit-layer classifier; never computes beyond") {
  ModelBundle m = initial_model(tiny(6, 3), 3);
  Rng rng(4);
  for (Parameter* p : m.param_groups().policy)
    for (double& v : p->value) v += rng.normal();
  const Dataset ds = make_data(200, 3, rng);
  for (const Instance& inst : ds.instances) {
    const InferenceResult r = infer(m, inst.features);
    CHECK(r.layers_computed == r.exit_layer);
    CHECK(r.p_exit_trace.size() == r.exit_layer);
    const auto states = m.forward_states(inst.features, r.exit_layer);
    CHECK(r.predicted == argmax(m.classify(r.exit_layer, states.back())));
    for (std::size_t t = 1; t < r.exit_layer; ++t) CHECK(m.policy_exit_prob(t, states[t - 1]) <= 0.5);
    if (r.exit_layer < 6) CHECK(m.policy_exit_prob(r.exit_layer, states.back()) > 0.5);
  }
}

TEST_CASE("saved-layer arithmetic") {
  std::vector<InstanceRecord> recs(10);
  for (InstanceRecord& r : recs) r.exit_layer = 6;
  CHECK(metrics_from(recs, 12).saved_layers == 0.5);
  for (InstanceRecord& r : recs) r.exit_layer = 12;
  CHECK(metrics_from(recs, 12).saved_layers == 0.0);

  // 50 records with mean exit 5.88: 44 at 6 and 6 at 5.
  std::vector<InstanceRecord> mixed(50);
  for (std::size_t i = 0; i < 50; ++i) mixed[i].exit_layer = i < 44 ? 6 : 5;
  const EvalMetrics em = metrics_from(mixed, 12);
  CHECK(em.mean_exit_layer == doctest::Approx(5.88).epsilon(1e-14));
  CHECK(em.saved_layers == doctest::Approx(0.51).epsilon(1e-14));
  CHECK_THROWS_AS(metrics_from(std::vector<InstanceRecord>{}, 12), DataError);
}

TEST_CASE("evaluate: layer-1 exits, permutation invariance, empty data") {
  ModelBundle m = initial_model(tiny(8), 5);
  Rng rng(6);
  Dataset ds = make_data(60, 2, rng);
  for (std::size_t t = 1; t <= 8; ++t) fixed_exit_logit(m, t, 3.0);
  CHECK(evaluate(m, ds).saved_layers == 1.0 - 1.0 / 8.0);

  m = initial_model(tiny(8), 5);
  for (Parameter* p : m.param_groups().policy)
    for (double& v : p->value) v += rng.normal();
  const EvalMetrics a = evaluate(m, ds);
  std::reverse(ds.instances.begin(), ds.instances.end());
  rng.shuffle(ds.instances);
  const EvalMetrics b = evaluate(m, ds);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.mean_exit_layer == doctest::Approx(b.mean_exit_layer).epsilon(1e-14));
  CHECK(a.count == 60);
  CHECK_UNARY(a.saved_layers >= 0.0);
  CHECK_UNARY(a.saved_layers < 1.0);

  CHECK_THROWS_AS(evaluate(m, Dataset{}), DataError);
  const EvalMetrics full = evaluate_full_depth(m, ds);
  CHECK(full.mean_exit_layer == 8.0);
  CHECK(full.saved_layers == 0.0);
}

TEST_CASE("entropy exiter") {
  ModelBundle m = initial_model(tiny(5, 3), 7);
  const Vec x{0.5, -1, 2};
  CHECK(entropy_exit_infer(m, x, 0.0).exit_layer == 5);
  CHECK(entropy_exit_infer(m, x, std::log(3.0) + 1e-9).exit_layer == 1);
  CHECK_THROWS_AS(entropy_exit_infer(m, x, -0.1), UsageError);

  ModelBundle u = initial_model(tiny(5, 2), 8);
  Linear& h = u.classifier(1);
  std::fill(h.weight.value.begin(), h.weight.value.end(), 0.0);
  std::fill(h.bias.value.begin(), h.bias.value.end(), 0.0);
  CHECK(entropy_exit_infer(u, x, 0.5).exit_layer != 1);

  Rng rng(9);
  const Dataset ds = make_data(50, 3, rng);
  const EvalMetrics never = evaluate_entropy(m, ds, 0.0);
  CHECK(never.mean_exit_layer == 5.0);
  CHECK(never.accuracy == evaluate_full_depth(m, ds).accuracy);
}

TEST_CASE("sweep records match standalone runs and checkpoints") {
  SyntheticSpec spec;
  spec.n = 500;
  const SplitSets sp = split_standardize(gen_synthetic(spec, 31), {0.7, 0.15, 0.15}, 31);
  SweepSetup setup;
  setup.model = tiny(5, spec.num_classes);
  setup.model.input_dim = spec.feature_dim;
  setup.model.hidden_dim = 12;
  setup.train.init_epochs = 6;
  setup.train.policy_epochs = 2;
  setup.train.task_epochs = 1;
  setup.train.rounds_max = 2;
  setup.train_data = &sp.train;
  setup.dev_data = &sp.dev;
  setup.test_data = &sp.test;
  setup.checkpoint_dir = std::filesystem::temp_directory_path() / "cee_sweep_test";

  const double one_alpha[] = {0.01};
  const std::uint64_t one_seed[] = {4};
  const SweepResult single = sweep_alpha(setup, one_alpha, one_seed);
  REQUIRE(single.runs.size() == 1);
  REQUIRE(single.summary.size() == 1);
  const SweepRecord& rec = single.runs[0];
  CHECK(evaluate(load_checkpoint(rec.checkpoint), sp.test).accuracy == rec.metrics.accuracy);

  // Sharing the init stage across alphas is equivalent to a standalone run.
  TrainConfig tc = setup.train;
  tc.seed = 4;
  tc.reward.alpha = 0.01;
  ModelBundle alone = initial_model(setup.model, 4);
  train_iterative(alone, sp.train, sp.dev, tc);
  CHECK(serialize_checkpoint(alone) == serialize_checkpoint(load_checkpoint(rec.checkpoint)));

  const double none[] = {0.0};
  CHECK_THROWS_AS(sweep_alpha(setup, std::span<const double>{}, one_seed), ConfigError);
  CHECK_NOTHROW(sweep_alpha(setup, none, one_seed));
  std::filesystem::remove_all(setup.checkpoint_dir);
}

}  // TEST_SUITE
