#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cee {

using Vec = std::vector<double>;

// Floor applied to probabilities inside log() so losses stay finite.
inline constexpr double kProbFloor = 1e-12;

// A trainable dense matrix (cols == 1 for vectors) with a same-shape gradient
// accumulator.
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec value;
  Vec grad;

  Parameter() = default;
  Parameter(std::string name, std::size_t rows, std::size_t cols);

  std::size_t size() const { return value.size(); }
  double& at(std::size_t r, std::size_t c) { return value[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return value[r * cols + c]; }
  void zero_grad();
};

// Counter-based splittable generator. Output i of a stream is a SplitMix64
// finalisation of (key + i * golden), so a stream is fully described by
// (key, counter) and substreams are derived by hashing a purpose label.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // Independent substream; does not advance this generator.
  Rng split(std::string_view purpose) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Uniform in +-sqrt(6 / (fan_in + fan_out)) with fan_in = cols, fan_out = rows.
void init_scaled_uniform(Parameter& p, Rng& rng);

Vec affine(const Parameter& weight, const Parameter& bias, std::span<const double> x);
Vec relu(std::span<const double> x);
Vec softmax(std::span<const double> logits);
// -log P[label], with P[label] clamped below by kProbFloor.
double cross_entropy(std::size_t label, std::span<const double> probs);
// One-hot form; y must contain exactly one 1 and zeros elsewhere.
double cross_entropy(std::span<const double> one_hot, std::span<const double> probs);
double entropy(std::span<const double> probs);
// Ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

// values -= lr * grad, then grad = 0.
void sgd_step(std::span<Parameter* const> params, double lr);
void zero_grads(std::span<Parameter* const> params);

}  // namespace cee
