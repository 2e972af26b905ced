#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <set>

#include "cee/errors.hpp"
#include "cee/model.hpp"

using namespace cee;

namespace {

BackboneConfig small_config() {
  BackboneConfig c;
  c.num_layers = 4;
  c.input_dim = 3;
  c.hidden_dim = 5;
  c.num_classes = 3;
  c.policy_hidden_dim = 4;
  return c;
}

ModelBundle built(const BackboneConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  return ModelBundle::build(c, rng);
}

void zero(Parameter& p) {
  for (double& v : p.value) v = 0.0;
}

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("structure: L = 12, two classes") {
  BackboneConfig c;
  c.num_layers = 12;
  c.num_classes = 2;
  ModelBundle m = built(c, 1);
  const Vec x(c.input_dim, 0.3);
  const auto states = m.forward_states(x, 12);
  REQUIRE(states.size() == 12);
  for (std::size_t t = 1; t <= 12; ++t) {
    CHECK(m.classifier(t).weight.rows == 2);
    CHECK(m.classify(t, states[t - 1]).size() == 2);
  }
}

TEST_CASE("same seed, identical parameters; different seed, different") {
  const auto c = small_config();
  const ModelBundle a = built(c, 7), b = built(c, 7), d = built(c, 8);
  const auto pa = a.parameters(), pb = b.parameters(), pd = d.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value == pb[i]->value);
    any_diff = any_diff || pa[i]->value != pd[i]->value;
  }
  CHECK(any_diff);
}

TEST_CASE("parameter count matches the hand count") {
  BackboneConfig c;
  c.num_layers = 2;
  c.input_dim = 3;
  c.hidden_dim = 4;
  c.num_classes = 2;
  c.policy_hidden_dim = 5;
  // embed 3*4+4 = 16; per layer: block 2*(16+4) = 40, classifier 4*2+2 = 10,
  // policy 4*5+5 + 5*2+2 = 37 -> 87.
  CHECK(ModelBundle::expected_parameter_count(c) == 190);
  CHECK(built(c, 1).parameter_count() == 190);
  CHECK(built(small_config(), 1).parameter_count() == ModelBundle::expected_parameter_count(small_config()));
}

TEST_CASE("invalid configs are rejected") {
  auto c = small_config();
  c.num_layers = 1;
  CHECK_THROWS_AS(built(c, 1), ConfigError);
  c = small_config();
  c.num_classes = 1;
  CHECK_THROWS_AS(built(c, 1), ConfigError);
  c = small_config();
  c.hidden_dim = 0;
  CHECK_THROWS_AS(built(c, 1), ConfigError);
}

TEST_CASE("forward_states: residual identity and prefix consistency") {
  const auto c = small_config();
  ModelBundle m = built(c, 3);
  Rng rng(4);
  const Vec x = random_vec(c.input_dim, rng);

  const auto full = m.forward_states(x, c.num_layers);
  const auto pre = m.forward_states(x, 3);
  REQUIRE(pre.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) CHECK(pre[t] == full[t]);
  for (std::size_t t = 1; t <= c.num_layers; ++t) CHECK(m.apply_block(t, t == 1 ? m.embed(x) : full[t - 2]) == full[t - 1]);

  for (std::size_t t = 1; t <= c.num_layers; ++t) {
    zero(m.block(t).outer.weight);
    zero(m.block(t).outer.bias);
  }
  const auto same = m.forward_states(x, c.num_layers);
  for (const Vec& s : same) CHECK(s == m.embed(x));

  CHECK_THROWS_AS(m.forward_states(Vec{1.0}, 2), DataError);
  CHECK_THROWS_AS(m.forward_states(x, 0), UsageError);
  CHECK_THROWS_AS(m.forward_states(x, c.num_layers + 1), UsageError);
}

TEST_CASE("classify: uniform, shift-stable, hand-computed") {
  BackboneConfig c = small_config();
  c.hidden_dim = 2;
  c.num_classes = 2;
  ModelBundle m = built(c, 5);
  Linear& head = m.classifier(2);
  head.weight.value = {1.0, -2.0, 0.5, 3.0};
  head.bias.value = {0.25, -0.5};
  const Vec s{0.4, -1.2};
  // logits: 0.4 + 2.4 + 0.25 = 3.05 ; 0.2 - 3.6 - 0.5 = -3.9
  const double z0 = 3.05, z1 = -3.9;
  const Vec p = m.classify(2, s);
  CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(z1 - z0))).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(std::exp(z1 - z0) / (1.0 + std::exp(z1 - z0))).epsilon(1e-12));

  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const Vec st = random_vec(2, rng);
    const auto before = argmax(m.classify(2, st));
    head.bias.value[0] += 7.0;
    head.bias.value[1] += 7.0;
    CHECK(argmax(m.classify(2, st)) == before);
  }

  zero(head.weight);
  zero(head.bias);
  const Vec u = m.classify(2, s);
  CHECK(u[0] == 0.5);
  CHECK(u[1] == 0.5);

  CHECK_THROWS_AS(m.classify(0, s), UsageError);
  CHECK_THROWS_AS(m.classify(c.num_layers + 1, s), UsageError);
}

TEST_CASE("policy_exit_prob: zero head, exit-bias init, normalisation") {
  const auto c = small_config();
  ModelBundle m = built(c, 6);
  Rng rng(2);
  const Vec s = random_vec(c.hidden_dim, rng);

  // Fresh heads carry the exit bias; with the output weights cleared the
  // probability is exactly sigmoid(-2.2).
  PolicyHead& h = m.policy(1);
  CHECK(h.out.bias.value[kExitLogit] == kExitBiasInit);
  CHECK(h.out.bias.value[kContinueLogit] == 0.0);
  zero(h.out.weight);
  CHECK(m.policy_exit_prob(1, s) == doctest::Approx(1.0 / (1.0 + std::exp(2.2))).epsilon(1e-14));
  CHECK(m.policy_exit_prob(1, s) == doctest::Approx(0.0998).epsilon(1e-3));

  zero(h.out.bias);
  CHECK(m.policy_exit_prob(1, s) == 0.5);

  for (std::size_t t = 1; t <= c.num_layers; ++t) {
    for (int k = 0; k < 20; ++k) {
      Vec st = random_vec(c.hidden_dim, rng);
      for (double& v : st) v *= 30.0;
      const Vec pr = softmax(m.policy(t).logits(st));
      CHECK(pr[0] + pr[1] == doctest::Approx(1.0).epsilon(1e-9));
      const double pe = m.policy_exit_prob(t, st);
      CHECK(pe >= 0.0);
      CHECK(pe <= 1.0);
    }
  }
  CHECK_THROWS_AS(m.policy_exit_prob(0, s), UsageError);
}

TEST_CASE("param groups are a disjoint exhaustive partition") {
  const auto c = small_config();
  ModelBundle m = built(c, 9);
  const ParamGroups g = m.param_groups();
  std::set<const Parameter*> theta(g.policy.begin(), g.policy.end()), omega(g.task.begin(), g.task.end());
  CHECK(theta.size() == g.policy.size());
  CHECK(omega.size() == g.task.size());
  for (const Parameter* p : theta) {
    CHECK(omega.count(p) == 0);
    CHECK(p->name.rfind("policy", 0) == 0);
  }
  for (const Parameter* p : omega) CHECK(p->name.rfind("policy", 0) != 0);
  std::size_t scalars = 0;
  for (Parameter* p : m.parameters()) {
    CHECK(theta.count(p) + omega.count(p) == 1);
    scalars += p->size();
  }
  CHECK(theta.size() + omega.size() == m.parameters().size());
  CHECK(scalars == m.parameter_count());
}

TEST_CASE("checkpoint round trip is bit-exact; corrupt input is a data error") {
  const auto c = small_config();
  const ModelBundle m = built(c, 10);
  const std::string bytes = serialize_checkpoint(m);
  const ModelBundle back = deserialize_checkpoint(bytes);
  CHECK(back.config() == m.config());
  CHECK(serialize_checkpoint(back) == bytes);
  const auto pa = m.parameters(), pb = back.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(std::memcmp(pa[i]->value.data(), pb[i]->value.data(), pa[i]->size() * sizeof(double)) == 0);
  }

  const auto path = std::filesystem::temp_directory_path() / "cee_model_test.ckpt";
  save_checkpoint(path, m);
  CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(""), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/cee.ckpt"), DataError);
}

TEST_CASE("checksums track each group separately") {
  ModelBundle m = built(small_config(), 11);
  const auto p0 = m.policy_checksum(), t0 = m.task_checksum();
  m.policy(2).out.bias.value[0] += 1.0;
  CHECK(m.policy_checksum() != p0);
  CHECK(m.task_checksum() == t0);
  m.classifier(1).bias.value[0] += 1.0;
  CHECK(m.task_checksum() != t0);
}

}  // TEST_SUITE
