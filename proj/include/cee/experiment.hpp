#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cee/data.hpp"
#include "cee/model.hpp"
#include "cee/training.hpp"

namespace cee {

enum class DataSourceKind { Synthetic, File, Text };

struct DataSource {
  DataSourceKind kind = DataSourceKind::Synthetic;
  SyntheticSpec synthetic;
  std::uint64_t seed = 7;  // dataset generation; independent of the training seed
  std::filesystem::path path;
  TableFormat format = TableFormat::Delimited;
  std::size_t text_dim = 64;
  std::array<double, 3> split{0.7, 0.15, 0.15};
};

// One structured file drives every subcommand. input_dim and num_classes of
// the model are taken from the data.
struct ExperimentConfig {
  BackboneConfig model;
  TrainConfig train;
  DataSource data;
  std::filesystem::path out_dir = "runs";
  std::uint64_t seed = 1;
  std::vector<double> sweep_alphas;
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3};
  std::vector<double> entropy_thresholds{0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  std::size_t gradcheck_seeds = 20;

  ExperimentConfig();
};

// Rejects unknown keys and ill-typed values with ConfigError naming the key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);
// Hex FNV-1a of the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);
// validates and fills derived fields (train.seed, reward)
void finalize(ExperimentConfig& cfg);

Dataset load_source_dataset(const ExperimentConfig& cfg);
SplitSets prepare_splits(const ExperimentConfig& cfg);
BackboneConfig model_config_for(const ExperimentConfig& cfg, const Dataset& data);

// Subcommands. Each writes its outputs under cfg.out_dir, logs structured
// records to `log`, and returns a process exit code.
int run_gen_data(const ExperimentConfig& cfg, std::ostream& log);
int run_train(const ExperimentConfig& cfg, std::ostream& log);
int run_eval(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint, std::ostream& log);
int run_hardness(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                 std::ostream& log);
int run_sweep(const ExperimentConfig& cfg, std::ostream& log);
int run_gradcheck(const ExperimentConfig& cfg, std::ostream& log);

// Exit codes by error category.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDiverged = 4;

}  // namespace cee
