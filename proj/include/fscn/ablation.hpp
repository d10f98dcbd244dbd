#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fscn/config.hpp"
#include "fscn/loss.hpp"

namespace fscn {

enum class AblationGrid { kSkip, kAcm };

AblationGrid ablation_grid_from_string(const std::string& text);
std::string to_string(AblationGrid grid);

struct AblationVariant {
  std::string label;
  ModelConfig model;
};

/// Skip grid: full-skip, same-skip, no-skip. ACM grid, on the base skip
/// mode: full, w/o CW, w/o SE, w/o CW&SE.
std::vector<AblationVariant> ablation_variants(AblationGrid grid, const ModelConfig& base);

struct AblationRow {
  std::string label;
  ModelConfig model;
  std::size_t params = 0;
  std::vector<MetricsReport> per_seed;  // aggregated test metrics, one per seed
  MetricsReport median;                 // metric-wise median over seeds
};

struct AblationResult {
  AblationGrid grid = AblationGrid::kSkip;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  std::string table() const;
  nlohmann::json to_json() const;
};

/// Metric-wise median; n_pixels is the median as well.
MetricsReport median_report(std::span<const MetricsReport> reports);

using AblationProgress =
    std::function<void(const AblationVariant& variant, std::uint64_t seed, const MetricsReport& m)>;

/// Trains every variant once per seed (model init and training order both
/// follow the seed) on data.train and evaluates on data.test.
AblationResult run_ablation(const RunConfig& config, AblationGrid grid,
                            std::span<const std::uint64_t> seeds, const Datasets& data,
                            const AblationProgress& progress = {});

}  // namespace fscn
