#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cee/numeric.hpp"
#include "cee/tape.hpp"

namespace cee {

struct BackboneConfig {
  std::size_t num_layers = 12;
  std::size_t input_dim = 8;
  std::size_t hidden_dim = 16;
  std::size_t num_classes = 2;
  std::size_t policy_hidden_dim = 16;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

// Policy heads emit logits ordered (Exit, Continue).
inline constexpr std::size_t kExitLogit = 0;
inline constexpr std::size_t kContinueLogit = 1;
// Initial bias on the Exit logit: p_exit = sigmoid(-2.2) ~= 0.1.
inline constexpr double kExitBiasInit = -2.2;

struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);
  Vec forward(std::span<const double> x) const { return affine(weight, bias, x); }
  Tape::Node record(Tape& tape, Tape::Node x) { return tape.affine(weight, bias, x); }
};

// x + W2 relu(W1 x + b1) + b2
struct ResidualBlock {
  Linear inner;
  Linear outer;

  Vec forward(std::span<const double> x) const;
  Tape::Node record(Tape& tape, Tape::Node x);
};

// Two-layer MLP: W2 relu(W1 s + b1) + b2 -> (Exit, Continue) logits.
struct PolicyHead {
  Linear hidden;
  Linear out;

  Vec logits(std::span<const double> state) const;
  double exit_prob(std::span<const double> state) const;
  Tape::Node record(Tape& tape, Tape::Node state);
};

struct ParamGroups {
  std::vector<Parameter*> policy;  // theta
  std::vector<Parameter*> task;    // omega
};

class ModelBundle {
 public:
  ModelBundle() = default;
  static ModelBundle build(const BackboneConfig& config, Rng& rng);

  const BackboneConfig& config() const { return config_; }
  std::size_t num_layers() const { return config_.num_layers; }

  // s_1 .. s_upto; s_1 = block_1(embed(x)).
  std::vector<Vec> forward_states(std::span<const double> x, std::size_t upto) const;
  Vec embed(std::span<const double> x) const;
  // Applies block `layer` (1-based) to the previous state.
  Vec apply_block(std::size_t layer, std::span<const double> prev) const;

  Vec classify(std::size_t layer, std::span<const double> state) const;
  double policy_exit_prob(std::size_t layer, std::span<const double> state) const;

  // Tape-recording counterparts used by the training objectives.
  Tape::Node record_embed(Tape& tape, std::span<const double> x);
  Tape::Node record_block(Tape& tape, std::size_t layer, Tape::Node prev);
  Tape::Node record_classifier_logits(Tape& tape, std::size_t layer, Tape::Node state);
  Tape::Node record_policy_logits(Tape& tape, std::size_t layer, Tape::Node state);

  ParamGroups param_groups();
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  static std::size_t expected_parameter_count(const BackboneConfig& config);

  // Hash over the values of the given group; used to detect mutation.
  std::uint64_t policy_checksum() const;
  std::uint64_t task_checksum() const;

  Linear& embed_layer() { return embed_; }
  ResidualBlock& block(std::size_t layer);
  Linear& classifier(std::size_t layer);
  PolicyHead& policy(std::size_t layer);

 private:
  void check_layer(std::size_t layer, const char* what) const;

  BackboneConfig config_;
  Linear embed_;
  std::vector<ResidualBlock> blocks_;
  std::vector<Linear> classifiers_;
  std::vector<PolicyHead> policies_;
};

// Versioned binary checkpoint: magic, version, config, then every parameter
// (name, rows, cols, raw IEEE-754 doubles). Round trip is bit-exact.
std::string serialize_checkpoint(const ModelBundle& model);
ModelBundle deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace cee
