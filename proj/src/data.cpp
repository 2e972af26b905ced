#include "cee/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cee/errors.hpp"

namespace cee {

const char* split_name(Split s) {
  switch (s) {
    case Split::All: return "all";
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

void Dataset::validate() const {
  std::set<std::size_t> ids;
  for (const Instance& inst : instances) {
    if (!ids.insert(inst.id).second) throw DataError("duplicate instance id " + std::to_string(inst.id));
    if (inst.features.size() != feature_dim) {
      throw DataError("instance " + std::to_string(inst.id) + " has " + std::to_string(inst.features.size()) +
                      " features, expected " + std::to_string(feature_dim));
    }
    if (inst.label >= num_classes) {
      throw DataError("instance " + std::to_string(inst.id) + " label " + std::to_string(inst.label) +
                      " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic.num_classes must be >= 2");
  if (n < num_classes) throw ConfigError("synthetic.n must be >= num_classes");
  if (feature_dim < 1) throw ConfigError("synthetic.feature_dim must be >= 1");
  if (!(easy_fraction >= 0.0 && easy_fraction <= 1.0)) throw ConfigError("synthetic.easy_fraction must be in [0, 1]");
  if (!(margin_easy > 0.0) || !(margin_hard > 0.0)) throw ConfigError("synthetic margins must be > 0");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("synthetic.noise must be in [0, 1]");
  if (components_per_class < 1) throw ConfigError("synthetic.components_per_class must be >= 1");
}

namespace {

constexpr double kCenterScale = 2.5;
constexpr std::size_t kMaxAttemptsPerInstance = 20000;

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng root(seed);
  Rng center_rng = root.split("centers");
  Rng sample_rng = root.split("samples");
  Rng order_rng = root.split("order");

  // centers[c][j]
  std::vector<std::vector<Vec>> centers(spec.num_classes);
  for (auto& comps : centers) {
    for (std::size_t j = 0; j < spec.components_per_class; ++j) {
      Vec mu(spec.feature_dim);
      for (double& v : mu) v = kCenterScale * center_rng.normal();
      comps.push_back(std::move(mu));
    }
  }

  auto margin = [&](const Vec& x, std::size_t cls) {
    double own = std::numeric_limits<double>::infinity();
    double other = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      for (const Vec& mu : centers[c]) {
        const double d = std::sqrt(sq_dist(x, mu));
        if (c == cls) {
          own = std::min(own, d);
        } else {
          other = std::min(other, d);
        }
      }
    }
    return 0.5 * (other - own);
  };

  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.feature_dim = spec.feature_dim;
  ds.instances.reserve(spec.n);

  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const std::size_t count = spec.n / spec.num_classes + (c < spec.n % spec.num_classes ? 1 : 0);
    const auto n_easy = static_cast<std::size_t>(std::llround(spec.easy_fraction * static_cast<double>(count)));
    for (std::size_t k = 0; k < count; ++k) {
      const bool easy = k < n_easy;
      Vec x(spec.feature_dim);
      bool accepted = false;
      for (std::size_t attempt = 0; attempt < kMaxAttemptsPerInstance && !accepted; ++attempt) {
        const Vec& mu = centers[c][sample_rng.uniform_int(spec.components_per_class)];
        for (std::size_t d = 0; d < spec.feature_dim; ++d) x[d] = mu[d] + sample_rng.normal();
        const double m = margin(x, c);
        accepted = easy ? m >= spec.margin_easy : (m >= 0.0 && m <= spec.margin_hard);
      }
      if (!accepted) {
        throw ConfigError(std::string("synthetic generator could not place a ") + (easy ? "easy" : "hard") +
                          " instance; margins are unreachable for this geometry");
      }
      std::size_t label = c;
      if (!easy && spec.noise > 0.0 && sample_rng.bernoulli(spec.noise)) {
        label = (c + 1 + sample_rng.uniform_int(spec.num_classes - 1)) % spec.num_classes;
      }
      ds.instances.push_back(Instance{0, std::move(x), label});
    }
  }
  order_rng.shuffle(ds.instances);
  for (std::size_t i = 0; i < ds.instances.size(); ++i) ds.instances[i].id = i;
  return ds;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericError("cannot format double");
  return std::string(buf, end);
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& cell, std::size_t row, const std::string& column) {
  const std::string t = trim(cell);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw DataError("row " + std::to_string(row) + ": bad value '" + t + "' in column " + column);
  }
  return v;
}

std::size_t parse_label(const std::string& cell, std::size_t row) {
  const std::string t = trim(cell);
  if (t.empty()) throw DataError("row " + std::to_string(row) + ": missing label");
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw DataError("row " + std::to_string(row) + ": bad label '" + t + "'");
  }
  return v;
}

void finish(Dataset& ds, std::size_t max_label) {
  ds.num_classes = std::max<std::size_t>(2, max_label + 1);
  for (std::size_t i = 0; i < ds.instances.size(); ++i) ds.instances[i].id = i;
  ds.validate();
}

Dataset load_delimited(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::size_t label_col = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = split_commas(line);
    break;
  }
  if (header.empty()) throw DataError("table has no header row");
  bool found = false;
  for (std::size_t i = 0; i < header.size(); ++i) {
    header[i] = trim(header[i]);
    if (header[i] == "label") {
      if (found) throw DataError("header declares 'label' twice");
      label_col = i;
      found = true;
    }
  }
  if (!found) throw DataError("header must declare a 'label' column");
  ds.feature_dim = header.size() - 1;

  std::size_t row = 0;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    ++row;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + " (line " + std::to_string(line_no) + "): expected " +
                      std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    }
    Instance inst;
    inst.label = parse_label(cells[label_col], row);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i != label_col) inst.features.push_back(parse_double(cells[i], row, header[i]));
    }
    max_label = std::max(max_label, inst.label);
    ds.instances.push_back(std::move(inst));
  }
  finish(ds, max_label);
  return ds;
}

Dataset load_records(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t row = 0;
  std::size_t max_label = 0;
  bool have_dim = false;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line[0] == '#') continue;
    ++row;
    Instance inst;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.contains("label") || j["label"].is_null()) {
        throw DataError("row " + std::to_string(row) + ": missing label");
      }
      inst.label = j.at("label").get<std::size_t>();
      inst.features = j.at("features").get<Vec>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("row " + std::to_string(row) + ": " + e.what());
    }
    if (!have_dim) {
      ds.feature_dim = inst.features.size();
      have_dim = true;
    } else if (inst.features.size() != ds.feature_dim) {
      throw DataError("row " + std::to_string(row) + ": inconsistent feature dimension");
    }
    max_label = std::max(max_label, inst.label);
    ds.instances.push_back(std::move(inst));
  }
  finish(ds, max_label);
  return ds;
}

}  // namespace

Dataset load_table(const std::filesystem::path& path, TableFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return format == TableFormat::Delimited ? load_delimited(in) : load_records(in);
}

void write_table(const std::filesystem::path& path, const Dataset& ds, TableFormat format,
                 const std::vector<std::string>& comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset " + path.string());
  for (const std::string& c : comments) out << "# " << c << '\n';
  if (format == TableFormat::Delimited) {
    out << "label";
    for (std::size_t i = 0; i < ds.feature_dim; ++i) out << ",f" << i;
    out << '\n';
    for (const Instance& inst : ds.instances) {
      out << inst.label;
      for (double v : inst.features) out << ',' << format_double(v);
      out << '\n';
    }
  } else {
    for (const Instance& inst : ds.instances) {
      out << "{\"label\":" << inst.label << ",\"features\":[";
      for (std::size_t i = 0; i < inst.features.size(); ++i) {
        out << (i ? "," : "") << format_double(inst.features[i]);
      }
      out << "]}\n";
    }
  }
}

Vec featurize_text(const std::string& text, std::size_t dim) {
  if (dim < 16) throw ConfigError("featurize_text: dim must be >= 16");
  Vec v(dim, 0.0);
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    v[fnv1a64(token) % dim] += 1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<Vec> featurize_text(const std::vector<std::string>& texts, std::size_t dim) {
  std::vector<Vec> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(featurize_text(t, dim));
  return out;
}

Dataset load_text_lines(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open text corpus " + path.string());
  Dataset ds;
  ds.feature_dim = dim;
  std::string line;
  std::size_t row = 0;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line[0] == '#') continue;
    ++row;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("row " + std::to_string(row) + ": expected label<TAB>text");
    Instance inst;
    inst.label = parse_label(line.substr(0, tab), row);
    inst.features = featurize_text(line.substr(tab + 1), dim);
    max_label = std::max(max_label, inst.label);
    ds.instances.push_back(std::move(inst));
  }
  finish(ds, max_label);
  return ds;
}

SplitSets split_standardize(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_dev = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train == 0 || n_dev == 0 || n_train + n_dev >= n) {
    throw ConfigError("split of " + std::to_string(n) + " instances leaves an empty split");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).split("split");
  rng.shuffle(order);

  SplitSets out;
  Dataset* parts[3] = {&out.train, &out.dev, &out.test};
  const Split tags[3] = {Split::Train, Split::Dev, Split::Test};
  for (int k = 0; k < 3; ++k) {
    parts[k]->num_classes = ds.num_classes;
    parts[k]->feature_dim = ds.feature_dim;
    parts[k]->split = tags[k];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int k = i < n_train ? 0 : (i < n_train + n_dev ? 1 : 2);
    parts[k]->instances.push_back(ds.instances[order[i]]);
  }

  const std::size_t d = ds.feature_dim;
  out.mean.assign(d, 0.0);
  out.stddev.assign(d, 0.0);
  for (const Instance& inst : out.train.instances) {
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += inst.features[j];
  }
  for (double& m : out.mean) m /= static_cast<double>(n_train);
  for (const Instance& inst : out.train.instances) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = inst.features[j] - out.mean[j];
      out.stddev[j] += diff * diff;
    }
  }
  for (double& s : out.stddev) {
    s = std::sqrt(s / static_cast<double>(n_train));
    if (s == 0.0) s = 1.0;
  }
  for (Dataset* part : parts) {
    for (Instance& inst : part->instances) {
      for (std::size_t j = 0; j < d; ++j) inst.features[j] = (inst.features[j] - out.mean[j]) / out.stddev[j];
    }
  }
  return out;
}

}  // namespace cee
