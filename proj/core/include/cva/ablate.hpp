#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cva/config.hpp"
#include "cva/train.hpp"

namespace cva {

/// Grid file:
///   {"base": {<run config>}, "runs": [{"name": "basic", <overrides>}, ...]}
/// Each run is the base merged with its overrides; names must be unique.
std::vector<RunConfig> ablation_grid_from_json(const nlohmann::json& j);
std::vector<RunConfig> load_ablation_grid(const std::filesystem::path& path);

struct AblationRow {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<double> ap, ap50, ap75;  // per seed
  double mean_ap = 0.0;
  double mean_ap50 = 0.0;
  double mean_ap75 = 0.0;
};

struct AblationResult {
  std::vector<RunRecord> records;  // grid-major, seed-minor
  std::vector<AblationRow> rows;   // one per grid entry

  const AblationRow& row(const std::string& name) const;
  nlohmann::json to_json() const;
  /// Mean AP, AP50, AP75 per row, x100 with one decimal.
  std::string to_table() const;
};

struct AblateHooks {
  std::function<void(const RunRecord&)> on_run;
  TrainHooks train;
};

/// Trains every configuration with every seed (overriding config.seed).
AblationResult ablate(std::span<const RunConfig> grid, std::span<const std::uint64_t> seeds,
                      const Dataset& ds, const AblateHooks& hooks = {});

}  // namespace cva
