#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fscn/data.hpp"
#include "fscn/model.hpp"
#include "fscn/train.hpp"
#include "json.hpp"

namespace fscn {

/// Procedurally generated train/test sets.
struct SyntheticSpec {
  std::uint64_t seed = 0;
  int n_train = 64;
  int n_test = 16;
  int height = 64;
  int width = 128;
  bool constant_depth = false;
  bool operator==(const SyntheticSpec&) const = default;
};

/// Either a synthetic spec or an on-disk dataset root (rgb/, depth/, splits/).
struct DataConfig {
  std::optional<SyntheticSpec> synthetic = SyntheticSpec{};
  std::string root;
  AugmentConfig augment;
  double depth_cap_m = 80.0;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::string output_dir = "runs/default";
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const DataConfig& config);
nlohmann::json to_json(const RunConfig& config);

/// Missing keys take their defaults; unknown keys, wrong types and invalid
/// values throw ConfigError naming the dotted key path.
ModelConfig model_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

struct Datasets {
  std::vector<DepthSample> train;
  std::vector<DepthSample> test;
};

/// Generates or loads both splits described by the data section.
Datasets load_datasets(const DataConfig& data, const ModelConfig& model);

}  // namespace fscn
