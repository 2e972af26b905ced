#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cee/numeric.hpp"

namespace cee {

struct Instance {
  std::size_t id = 0;
  Vec features;
  std::size_t label = 0;
};

enum class Split { All, Train, Dev, Test };
const char* split_name(Split s);

struct Dataset {
  std::vector<Instance> instances;
  std::size_t num_classes = 2;
  std::size_t feature_dim = 0;
  Split split = Split::All;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  // Throws DataError on non-unique ids, ragged features, or labels out of range.
  void validate() const;
};

// Classes are Gaussian mixtures whose components interleave across classes,
// so the Bayes boundary is nonlinear. Hardness is the margin to that
// boundary under the nearest-component rule: easy instances sit at margin
// >= margin_easy, hard ones at margin in [0, margin_hard] and have their
// label replaced by a different class with probability `noise`.
struct SyntheticSpec {
  std::size_t num_classes = 3;
  std::size_t n = 4000;
  std::size_t feature_dim = 8;
  double easy_fraction = 0.4;
  double margin_easy = 2.0;
  double margin_hard = 0.5;
  double noise = 0.1;
  std::size_t components_per_class = 4;

  void validate() const;
};

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

enum class TableFormat { Delimited, RecordPerLine };

// Delimited: header "label,f0,f1,..."; lines beginning with '#' are
// metadata comments and skipped. RecordPerLine: one JSON object per line,
// {"label": k, "features": [...]}. Floats use shortest round-trip decimal.
Dataset load_table(const std::filesystem::path& path, TableFormat format = TableFormat::Delimited);
void write_table(const std::filesystem::path& path, const Dataset& ds, TableFormat format = TableFormat::Delimited,
                 const std::vector<std::string>& comments = {});
std::string format_double(double v);

// Hashed bag of words: lowercase, split on whitespace, FNV-1a bucket, L2 norm.
Vec featurize_text(const std::string& text, std::size_t dim);
std::vector<Vec> featurize_text(const std::vector<std::string>& texts, std::size_t dim);
// Lines of "label<TAB>text".
Dataset load_text_lines(const std::filesystem::path& path, std::size_t dim);

struct SplitSets {
  Dataset train;
  Dataset dev;
  Dataset test;
  Vec mean;
  Vec stddev;
};

// Seeded shuffle split; features standardised with train statistics only.
SplitSets split_standardize(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace cee
