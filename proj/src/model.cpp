#include "cee/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "cee/errors.hpp"

namespace cee {

void BackboneConfig::validate() const {
  if (num_layers < 2) throw ConfigError("model.num_layers must be >= 2");
  if (input_dim < 1) throw ConfigError("model.input_dim must be >= 1");
  if (hidden_dim < 1) throw ConfigError("model.hidden_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
  if (policy_hidden_dim < 1) throw ConfigError("model.policy_hidden_dim must be >= 1");
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", out, in), bias(name + ".bias", out, 1) {}

Vec ResidualBlock::forward(std::span<const double> x) const {
  Vec out = outer.forward(relu(inner.forward(x)));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
  return out;
}

Tape::Node ResidualBlock::record(Tape& tape, Tape::Node x) {
  const Tape::Node h = tape.relu(inner.record(tape, x));
  return tape.add(x, outer.record(tape, h));
}

Vec PolicyHead::logits(std::span<const double> state) const {
  return out.forward(relu(hidden.forward(state)));
}

double PolicyHead::exit_prob(std::span<const double> state) const {
  return softmax(logits(state))[kExitLogit];
}

Tape::Node PolicyHead::record(Tape& tape, Tape::Node state) {
  return out.record(tape, tape.relu(hidden.record(tape, state)));
}

ModelBundle ModelBundle::build(const BackboneConfig& config, Rng& rng) {
  config.validate();
  ModelBundle m;
  m.config_ = config;
  const std::size_t h = config.hidden_dim;

  m.embed_ = Linear("embed", config.input_dim, h);
  init_scaled_uniform(m.embed_.weight, rng);
  for (std::size_t t = 1; t <= config.num_layers; ++t) {
    const std::string tag = std::to_string(t);
    ResidualBlock block{Linear("block" + tag + ".inner", h, h), Linear("block" + tag + ".outer", h, h)};
    init_scaled_uniform(block.inner.weight, rng);
    init_scaled_uniform(block.outer.weight, rng);
    m.blocks_.push_back(std::move(block));
  }
  for (std::size_t t = 1; t <= config.num_layers; ++t) {
    Linear head("classifier" + std::to_string(t), h, config.num_classes);
    init_scaled_uniform(head.weight, rng);
    m.classifiers_.push_back(std::move(head));
  }
  for (std::size_t t = 1; t <= config.num_layers; ++t) {
    const std::string tag = std::to_string(t);
    PolicyHead head{Linear("policy" + tag + ".hidden", h, config.policy_hidden_dim),
                    Linear("policy" + tag + ".out", config.policy_hidden_dim, 2)};
    init_scaled_uniform(head.hidden.weight, rng);
    init_scaled_uniform(head.out.weight, rng);
    head.out.bias.value[kExitLogit] = kExitBiasInit;
    m.policies_.push_back(std::move(head));
  }
  return m;
}

void ModelBundle::check_layer(std::size_t layer, const char* what) const {
  if (layer < 1 || layer > config_.num_layers) {
    throw UsageError(std::string(what) + ": layer " + std::to_string(layer) + " outside [1, " +
                     std::to_string(config_.num_layers) + "]");
  }
}

Vec ModelBundle::embed(std::span<const double> x) const {
  if (x.size() != config_.input_dim) {
    throw DataError("feature dimension " + std::to_string(x.size()) + " does not match model input_dim " +
                    std::to_string(config_.input_dim));
  }
  return embed_.forward(x);
}

Vec ModelBundle::apply_block(std::size_t layer, std::span<const double> prev) const {
  check_layer(layer, "apply_block");
  return blocks_[layer - 1].forward(prev);
}

std::vector<Vec> ModelBundle::forward_states(std::span<const double> x, std::size_t upto) const {
  check_layer(upto, "forward_states");
  std::vector<Vec> states;
  states.reserve(upto);
  Vec s = embed(x);
  for (std::size_t t = 1; t <= upto; ++t) {
    s = blocks_[t - 1].forward(s);
    states.push_back(s);
  }
  return states;
}

Vec ModelBundle::classify(std::size_t layer, std::span<const double> state) const {
  check_layer(layer, "classify");
  return softmax(classifiers_[layer - 1].forward(state));
}

double ModelBundle::policy_exit_prob(std::size_t layer, std::span<const double> state) const {
  check_layer(layer, "policy_exit_prob");
  return policies_[layer - 1].exit_prob(state);
}

Tape::Node ModelBundle::record_embed(Tape& tape, std::span<const double> x) {
  if (x.size() != config_.input_dim) {
    throw DataError("feature dimension " + std::to_string(x.size()) + " does not match model input_dim " +
                    std::to_string(config_.input_dim));
  }
  return embed_.record(tape, tape.constant(Vec(x.begin(), x.end())));
}

Tape::Node ModelBundle::record_block(Tape& tape, std::size_t layer, Tape::Node prev) {
  check_layer(layer, "record_block");
  return blocks_[layer - 1].record(tape, prev);
}

Tape::Node ModelBundle::record_classifier_logits(Tape& tape, std::size_t layer, Tape::Node state) {
  check_layer(layer, "record_classifier_logits");
  return classifiers_[layer - 1].record(tape, state);
}

Tape::Node ModelBundle::record_policy_logits(Tape& tape, std::size_t layer, Tape::Node state) {
  check_layer(layer, "record_policy_logits");
  return policies_[layer - 1].record(tape, state);
}

ResidualBlock& ModelBundle::block(std::size_t layer) {
  check_layer(layer, "block");
  return blocks_[layer - 1];
}

Linear& ModelBundle::classifier(std::size_t layer) {
  check_layer(layer, "classifier");
  return classifiers_[layer - 1];
}

PolicyHead& ModelBundle::policy(std::size_t layer) {
  check_layer(layer, "policy");
  return policies_[layer - 1];
}

ParamGroups ModelBundle::param_groups() {
  ParamGroups g;
  g.task = {&embed_.weight, &embed_.bias};
  for (ResidualBlock& b : blocks_) {
    for (Parameter* p : {&b.inner.weight, &b.inner.bias, &b.outer.weight, &b.outer.bias}) g.task.push_back(p);
  }
  for (Linear& c : classifiers_) {
    g.task.push_back(&c.weight);
    g.task.push_back(&c.bias);
  }
  for (PolicyHead& h : policies_) {
    for (Parameter* p : {&h.hidden.weight, &h.hidden.bias, &h.out.weight, &h.out.bias}) g.policy.push_back(p);
  }
  return g;
}

std::vector<Parameter*> ModelBundle::parameters() {
  ParamGroups g = param_groups();
  std::vector<Parameter*> all = std::move(g.task);
  all.insert(all.end(), g.policy.begin(), g.policy.end());
  return all;
}

std::vector<const Parameter*> ModelBundle::parameters() const {
  auto mut = const_cast<ModelBundle*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t ModelBundle::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->size();
  return n;
}

std::size_t ModelBundle::expected_parameter_count(const BackboneConfig& c) {
  const std::size_t h = c.hidden_dim;
  const std::size_t embed = c.input_dim * h + h;
  const std::size_t block = 2 * (h * h + h);
  const std::size_t classifier = h * c.num_classes + c.num_classes;
  const std::size_t policy = h * c.policy_hidden_dim + c.policy_hidden_dim + c.policy_hidden_dim * 2 + 2;
  return embed + c.num_layers * (block + classifier + policy);
}

namespace {
std::uint64_t group_checksum(const std::vector<Parameter*>& group) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : group) h = fnv1a64(p->value, h);
  return h;
}
}  // namespace

std::uint64_t ModelBundle::policy_checksum() const {
  return group_checksum(const_cast<ModelBundle*>(this)->param_groups().policy);
}

std::uint64_t ModelBundle::task_checksum() const {
  return group_checksum(const_cast<ModelBundle*>(this)->param_groups().task);
}

// --- checkpoint ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'E', 'E', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.append(raw, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelBundle& model) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const BackboneConfig& c = model.config();
  for (std::size_t v : {c.num_layers, c.input_dim, c.hidden_dim, c.num_classes, c.policy_hidden_dim}) {
    put<std::uint64_t>(out, v);
  }
  const auto params = model.parameters();
  put<std::uint64_t>(out, params.size());
  for (const Parameter* p : params) {
    put<std::uint64_t>(out, p->name.size());
    out += p->name;
    put<std::uint64_t>(out, p->rows);
    put<std::uint64_t>(out, p->cols);
    out.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(double));
  }
  return out;
}

ModelBundle deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  BackboneConfig c;
  c.num_layers = in.get<std::uint64_t>();
  c.input_dim = in.get<std::uint64_t>();
  c.hidden_dim = in.get<std::uint64_t>();
  c.num_classes = in.get<std::uint64_t>();
  c.policy_hidden_dim = in.get<std::uint64_t>();
  c.validate();

  Rng unused(0);
  ModelBundle m = ModelBundle::build(c, unused);
  auto params = m.parameters();
  if (in.get<std::uint64_t>() != params.size()) throw DataError("checkpoint parameter count mismatch");
  for (Parameter* p : params) {
    const std::string name = in.get_string(in.get<std::uint64_t>());
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    if (name != p->name || rows != p->rows || cols != p->cols) {
      throw DataError("checkpoint parameter '" + name + "' does not match model layout");
    }
    for (double& v : p->value) v = in.get<double>();
  }
  if (!in.done()) throw DataError("checkpoint has trailing bytes");
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace cee
