#include "cva/ablate.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace cva {

using nlohmann::json;

std::vector<RunConfig> ablation_grid_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("ablation grid must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "base" && key != "runs") throw ConfigError("unknown key '" + key + "' in ablation grid");
  }
  if (!j.contains("runs") || !j.at("runs").is_array() || j.at("runs").empty()) {
    throw ConfigError("ablation grid needs a non-empty 'runs' array");
  }
  const json base = j.value("base", json::object());
  if (!base.is_object()) throw ConfigError("ablation grid 'base' must be an object");
  std::vector<RunConfig> out;
  std::set<std::string> names;
  for (const auto& run : j.at("runs")) {
    if (!run.is_object() || !run.contains("name")) throw ConfigError("every grid run needs a 'name'");
    json merged = base;
    merged.merge_patch(run);
    RunConfig c = run_config_from_json(merged);
    if (!names.insert(c.name).second) throw ConfigError("duplicate grid run name '" + c.name + "'");
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<RunConfig> load_ablation_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid file " + path.string());
  try {
    return ablation_grid_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("grid " + path.string() + " is not valid JSON: " + e.what());
  }
}

const AblationRow& AblationResult::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw std::out_of_range("no ablation row named '" + name + "'");
}

AblationResult ablate(std::span<const RunConfig> grid, std::span<const std::uint64_t> seeds,
                      const Dataset& ds, const AblateHooks& hooks) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  AblationResult result;
  for (const RunConfig& base : grid) {
    AblationRow row;
    row.name = base.name.empty() ? to_string(base.variant) : base.name;
    for (std::uint64_t seed : seeds) {
      RunConfig c = base;
      c.seed = seed;
      TrainResult r = train(c, ds, hooks.train);
      row.seeds.push_back(seed);
      row.ap.push_back(r.record.report.ap);
      row.ap50.push_back(r.record.report.ap50);
      row.ap75.push_back(r.record.report.ap75);
      if (hooks.on_run) hooks.on_run(r.record);
      result.records.push_back(std::move(r.record));
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    row.mean_ap = mean(row.ap);
    row.mean_ap50 = mean(row.ap50);
    row.mean_ap75 = mean(row.ap75);
    result.rows.push_back(std::move(row));
  }
  return result;
}

json AblationResult::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"name", r.name},
                         {"seeds", r.seeds},
                         {"AP", r.ap},
                         {"AP50", r.ap50},
                         {"AP75", r.ap75},
                         {"mean_AP", r.mean_ap},
                         {"mean_AP50", r.mean_ap50},
                         {"mean_AP75", r.mean_ap75}});
  }
  json runs = json::array();
  for (const auto& rec : records) runs.push_back(rec.to_json());
  return json{{"rows", rows_json}, {"runs", runs}};
}

std::string AblationResult::to_table() const {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "Method" << std::right << std::setw(7) << "AP"
     << std::setw(7) << "AP50" << std::setw(7) << "AP75" << '\n';
  os << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.name << std::right << std::setw(7)
       << r.mean_ap * 100.0 << std::setw(7) << r.mean_ap50 * 100.0 << std::setw(7) << r.mean_ap75 * 100.0
       << '\n';
  }
  return os.str();
}

}  // namespace cva
