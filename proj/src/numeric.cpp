#include "cee/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "cee/errors.hpp"

namespace cee {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

Parameter::Parameter(std::string n, std::size_t r, std::size_t c)
    : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0), grad(r * c, 0.0) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

std::uint64_t splitmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t h) {
  for (double v : values) {
    unsigned char raw[sizeof(double)];
    std::memcpy(raw, &v, sizeof(double));
    for (unsigned char c : raw) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Rng::Rng(std::uint64_t seed) : key_(splitmix64(seed + kGolden)) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return splitmix64(key_ + counter_ * kGolden);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw UsageError("Rng::uniform_int: empty range");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double Rng::normal() {
  // Box-Muller; u1 in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::string_view purpose) const { return split(fnv1a64(purpose)); }

Rng Rng::split(std::uint64_t index) const {
  Rng child(0);
  child.key_ = splitmix64(key_ ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  child.counter_ = 0;
  return child;
}

void init_scaled_uniform(Parameter& p, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(p.rows + p.cols));
  for (double& v : p.value) v = rng.uniform(-bound, bound);
}

Vec affine(const Parameter& weight, const Parameter& bias, std::span<const double> x) {
  if (weight.cols != x.size() || bias.size() != weight.rows) {
    throw ConfigError("affine: shape mismatch, W is " + std::to_string(weight.rows) + "x" +
                      std::to_string(weight.cols) + ", b has " + std::to_string(bias.size()) +
                      ", x has " + std::to_string(x.size()));
  }
  Vec out(bias.value);
  const double* w = weight.value.data();
  for (std::size_t r = 0; r < weight.rows; ++r) {
    double acc = 0.0;
    const double* row = w + r * weight.cols;
    for (std::size_t c = 0; c < weight.cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
  return out;
}

Vec relu(std::span<const double> x) {
  Vec out(x.begin(), x.end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return out;
}

Vec softmax(std::span<const double> logits) {
  if (logits.size() < 2) throw UsageError("softmax: need at least two logits");
  double hi = -INFINITY;
  for (double z : logits) {
    if (std::isnan(z)) throw NumericError("softmax: NaN logit");
    hi = std::max(hi, z);
  }
  Vec out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double cross_entropy(std::size_t label, std::span<const double> probs) {
  if (label >= probs.size()) {
    throw UsageError("cross_entropy: label " + std::to_string(label) + " out of range");
  }
  return -std::log(std::max(probs[label], kProbFloor));
}

double cross_entropy(std::span<const double> one_hot, std::span<const double> probs) {
  if (one_hot.size() != probs.size()) throw UsageError("cross_entropy: length mismatch");
  std::size_t label = one_hot.size();
  for (std::size_t i = 0; i < one_hot.size(); ++i) {
    if (one_hot[i] == 1.0 && label == one_hot.size()) {
      label = i;
    } else if (one_hot[i] != 0.0) {
      throw UsageError("cross_entropy: target is not one-hot");
    }
  }
  if (label == one_hot.size()) throw UsageError("cross_entropy: target is not one-hot");
  return cross_entropy(label, probs);
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void sgd_step(std::span<Parameter* const> params, double lr) {
  if (!(lr > 0.0)) throw ConfigError("sgd_step: learning rate must be positive");
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
    p->zero_grad();
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace cee
