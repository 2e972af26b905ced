#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cee/errors.hpp"
#include "cee/hardness.hpp"
#include "cee/inference.hpp"
#include "cee/training.hpp"

using namespace cee;

namespace {

// Definition check: smallest k such that every i >= k is correct, else L.
std::size_t brute_memorized(const CorrectnessVector& c) {
  const std::size_t L = c.size();
  for (std::size_t k = 1; k <= L; ++k) {
    bool all = true;
    for (std::size_t i = k; i <= L; ++i) all = all && c[i - 1];
    if (all) return k;
  }
  return L;
}

// O(n^2) average ranks and textbook Pearson, independent of the library.
Vec naive_ranks(const Vec& x) {
  Vec r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      less += y < x[i];
      equal += y == x[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

double pearson(const Vec& a, const Vec& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

BackboneConfig tiny(std::size_t L = 4, std::size_t classes = 2) {
  BackboneConfig c;
  c.num_layers = L;
  c.input_dim = 3;
  c.hidden_dim = 4;
  c.num_classes = classes;
  c.policy_hidden_dim = 3;
  return c;
}

// Every classifier ignores its input and favours `cls` (or is uniform when
// cls is out of range).
void constant_heads(ModelBundle& m, std::size_t cls) {
  for (std::size_t t = 1; t <= m.num_layers(); ++t) {
    Linear& h = m.classifier(t);
    std::fill(h.weight.value.begin(), h.weight.value.end(), 0.0);
    std::fill(h.bias.value.begin(), h.bias.value.end(), 0.0);
    if (cls < h.bias.value.size()) h.bias.value[cls] = 5.0;
  }
}

Dataset make_data(std::size_t n, std::size_t dim, std::size_t classes, Rng& rng, std::size_t fixed_label = 99) {
  Dataset ds;
  ds.num_classes = classes;
  ds.feature_dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.id = i;
    inst.label = fixed_label < classes ? fixed_label : static_cast<std::size_t>(rng.uniform_int(classes));
    for (std::size_t j = 0; j < dim; ++j) inst.features.push_back(rng.normal());
    ds.instances.push_back(inst);
  }
  return ds;
}

}  // namespace

TEST_SUITE("hardness") {

TEST_CASE("memorized layer examples") {
  CHECK(memorized_layer({true, true, true, true}) == 1);
  CHECK(memorized_layer({false, false, false, false}) == 4);
  CHECK(memorized_layer({false, true, false, true, true}) == 4);
  CHECK(memorized_layer({true, true, true, false}) == 4);
  CHECK_THROWS_AS(memorized_layer({}), UsageError);
}

TEST_CASE("memorized layer: brute-force agreement, bounds, monotonicity") {
  Rng rng(1);
  for (int s = 0; s < 10000; ++s) {
    const std::size_t L = 1 + rng.uniform_int(16);
    CorrectnessVector c(L);
    for (std::size_t i = 0; i < L; ++i) c[i] = rng.bernoulli(0.6);
    const std::size_t M = memorized_layer(c);
    REQUIRE(M == brute_memorized(c));
    CHECK_UNARY(M >= 1);
    CHECK_UNARY(M <= L);
    for (std::size_t i = 0; i < L; ++i) {
      if (c[i]) continue;
      CorrectnessVector f = c;
      f[i] = true;
      CHECK_UNARY(memorized_layer(f) <= M);
    }
  }
}

TEST_CASE("forgetting events") {
  CHECK(forgetting_events({false, true, false, true, true}) == 1);
  CHECK(forgetting_events({true, true, true}) == 0);
  CHECK(forgetting_events({true, false, true, false}) == 2);
  CHECK(forgetting_events({true}) == 0);
  Rng rng(2);
  for (int s = 0; s < 2000; ++s) {
    std::vector<bool> h(1 + rng.uniform_int(20));
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = rng.bernoulli(0.5);
    CHECK_UNARY(forgetting_events(h) <= h.size() / 2);
  }
}

TEST_CASE("spearman examples and errors") {
  CHECK(*spearman(Vec{1, 2, 3}, Vec{10, 20, 30}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*spearman(Vec{1, 2, 3}, Vec{3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
  // (1,1,2) ranks to (1.5,1.5,3): rho = 0.866025...
  CHECK(*spearman(Vec{1, 1, 2}, Vec{4, 5, 6}) == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-15));
  CHECK_FALSE(spearman(Vec{1, 1, 1}, Vec{1, 2, 3}).has_value());
  CHECK_THROWS_AS(spearman(Vec{1}, Vec{1}), UsageError);
  CHECK_THROWS_AS(spearman(Vec{1, 2}, Vec{1, 2, 3}), UsageError);
  CHECK(average_ranks(Vec{3, 1, 3, 2}) == Vec{3.5, 1, 3.5, 2});
}

TEST_CASE("spearman matches the naive average-rank oracle") {
  Rng rng(3);
  for (int s = 0; s < 1000; ++s) {
    const std::size_t n = 2 + rng.uniform_int(30);
    const bool tied = s % 2 == 0;
    Vec x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = tied ? static_cast<double>(rng.uniform_int(4)) : rng.normal();
      y[i] = tied ? static_cast<double>(rng.uniform_int(5)) : rng.normal();
    }
    CHECK(average_ranks(x) == naive_ranks(x));
    const auto rho = spearman(x, y);
    const Vec rx = naive_ranks(x), ry = naive_ranks(y);
    const bool flat = std::all_of(rx.begin(), rx.end(), [&](double v) { return v == rx[0]; }) ||
                      std::all_of(ry.begin(), ry.end(), [&](double v) { return v == ry[0]; });
    if (flat) {
      CHECK_FALSE(rho.has_value());
      continue;
    }
    REQUIRE(rho.has_value());
    CHECK(*rho == doctest::Approx(pearson(rx, ry)).epsilon(1e-12));
    CHECK_UNARY(*rho >= -1.0 - 1e-12);
    CHECK_UNARY(*rho <= 1.0 + 1e-12);
  }
}

TEST_CASE("spearman is invariant under increasing transforms") {
  Rng rng(4);
  for (int s = 0; s < 200; ++s) {
    Vec x(10), y(10), tx(10);
    for (std::size_t i = 0; i < 10; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
      tx[i] = std::exp(3.0 * x[i]) + 7.0;
    }
    CHECK(std::abs(*spearman(x, y) - *spearman(tx, y)) < 1e-12);
  }
}

TEST_CASE("correctness vectors") {
  Rng rng(5);
  ModelBundle m = initial_model(tiny(4, 3), 1);
  const Dataset ds = make_data(50, 3, 3, rng);
  for (const Instance& inst : ds.instances) {
    const CorrectnessVector c = correctness(m, inst);
    REQUIRE(c.size() == 4);
    const auto states = m.forward_states(inst.features, 4);
    for (std::size_t t = 1; t <= 4; ++t) CHECK(c[t - 1] == (argmax(m.classify(t, states[t - 1])) == inst.label));
  }

  constant_heads(m, 99);  // uniform: ties go to class 0
  Instance zero{0, Vec{1, 2, 3}, 0}, one{1, Vec{1, 2, 3}, 1};
  CHECK(correctness(m, zero) == CorrectnessVector(4, true));
  CHECK(correctness(m, one) == CorrectnessVector(4, false));

  constant_heads(m, 1);  // a perfect model for class-1 data
  CHECK(correctness(m, one) == CorrectnessVector(4, true));
}

TEST_CASE("layer profile") {
  Rng rng(6);
  ModelBundle m = initial_model(tiny(4, 2), 2);
  const Dataset mixed = make_data(40, 3, 2, rng);

  const auto trained = layer_profile(m, mixed);
  CHECK(trained.back().accuracy == evaluate_full_depth(m, mixed).accuracy);

  constant_heads(m, 99);
  for (const LayerStats& s : layer_profile(m, mixed)) CHECK(s.mean_loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  constant_heads(m, 1);
  const Dataset ones = make_data(20, 3, 2, rng, 1);
  for (const LayerStats& s : layer_profile(m, ones)) CHECK(s.accuracy == 1.0);

  CHECK_THROWS_AS(layer_profile(m, Dataset{}), DataError);
}

TEST_CASE("memorized layer correlates with loss on margin-graded data") {
  SyntheticSpec spec;
  spec.n = 1200;
  const SplitSets sp = split_standardize(gen_synthetic(spec, 2), {0.7, 0.15, 0.15}, 2);
  BackboneConfig mc = tiny(6, spec.num_classes);
  mc.input_dim = spec.feature_dim;
  mc.hidden_dim = 12;
  ModelBundle m = initial_model(mc, 3);
  TrainConfig tc;
  tc.init_epochs = 10;
  Rng rng(4);
  const InitStageResult init = train_init(m, sp.train, tc, rng);
  const HardnessReport rep = hardness_report(m, sp.train, init.forgetting);
  REQUIRE(rep.rows.size() == sp.train.size());
  for (const HardnessRow& r : rep.rows) {
    CHECK_UNARY(r.memorized_layer >= 1);
    CHECK_UNARY(r.memorized_layer <= 6);
  }
  REQUIRE(rep.spearman_loss.has_value());
  CHECK(*rep.spearman_loss > 0.0);
}

}  // TEST_SUITE
