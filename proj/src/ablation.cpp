#include "fscn/ablation.hpp"

#include <algorithm>

#include "fscn/train.hpp"

namespace fscn {

AblationGrid ablation_grid_from_string(const std::string& text) {
  if (text == "skip") return AblationGrid::kSkip;
  if (text == "acm") return AblationGrid::kAcm;
  throw std::invalid_argument("unknown ablation grid '" + text + "' (expected skip or acm)");
}

std::string to_string(AblationGrid grid) { return grid == AblationGrid::kSkip ? "skip" : "acm"; }

std::vector<AblationVariant> ablation_variants(AblationGrid grid, const ModelConfig& base) {
  std::vector<AblationVariant> out;
  if (grid == AblationGrid::kSkip) {
    for (SkipMode mode : {SkipMode::kFullSkip, SkipMode::kSameSkip, SkipMode::kNoSkip}) {
      ModelConfig cfg = base;
      cfg.skip_mode = mode;
      out.push_back({to_string(mode), cfg});
    }
    return out;
  }
  struct Row {
    const char* label;
    bool cw;
    bool se;
  };
  for (const Row& r : {Row{"full", true, true}, Row{"w/o CW", false, true}, Row{"w/o SE", true, false},
                       Row{"w/o CW&SE", false, false}}) {
    ModelConfig cfg = base;
    cfg.use_concat_weights = r.cw;
    cfg.use_se = r.se;
    out.push_back({r.label, cfg});
  }
  return out;
}

MetricsReport median_report(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw std::invalid_argument("median_report: no reports");
  auto median = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(static_cast<double>(r.*field));
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  };
  MetricsReport m;
  m.abs_rel = median(&MetricsReport::abs_rel);
  m.sq_rel = median(&MetricsReport::sq_rel);
  m.rms = median(&MetricsReport::rms);
  m.log10 = median(&MetricsReport::log10);
  m.log_rms = median(&MetricsReport::log_rms);
  m.delta1 = median(&MetricsReport::delta1);
  m.delta2 = median(&MetricsReport::delta2);
  m.delta3 = median(&MetricsReport::delta3);
  m.n_pixels = static_cast<std::size_t>(median(&MetricsReport::n_pixels));
  return m;
}

std::string AblationResult::table() const {
  std::vector<TableRow> table_rows;
  for (const auto& r : rows) table_rows.push_back({r.label, r.params, r.median});
  std::string seeds_text;
  for (auto s : seeds) seeds_text += (seeds_text.empty() ? "" : ",") + std::to_string(s);
  return format_table(table_rows) + "(median over seeds " + seeds_text + ")\n";
}

nlohmann::json AblationResult::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& m : r.per_seed) per_seed.push_back(fscn::to_json(m));
    rows_json.push_back({{"label", r.label},
                         {"model", fscn::to_json(r.model)},
                         {"params", r.params},
                         {"median", fscn::to_json(r.median)},
                         {"per_seed", per_seed}});
  }
  return {{"grid", to_string(grid)}, {"seeds", seeds}, {"rows", rows_json}};
}

AblationResult run_ablation(const RunConfig& config, AblationGrid grid,
                            std::span<const std::uint64_t> seeds, const Datasets& data,
                            const AblationProgress& progress) {
  if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
  AblationResult result;
  result.grid = grid;
  result.seeds.assign(seeds.begin(), seeds.end());
  const double cap = config.data.depth_cap_m;
  for (const auto& variant : ablation_variants(grid, config.model)) {
    AblationRow row;
    row.label = variant.label;
    row.model = variant.model;
    for (std::uint64_t seed : seeds) {
      RunConfig cell = config;
      cell.model = variant.model;
      cell.train.seed = seed;
      FscnModel<float> model = build_model<float>(variant.model, seed);
      row.params = param_count(model);
      Trainer trainer(std::move(model), data.train, cell.train, cell.data.augment, cap,
                      fscn::to_json(cell).dump());
      trainer.run();
      const auto reports = evaluate(trainer.model(), data.test, cap);
      row.per_seed.push_back(aggregate(reports));
      if (progress) progress(variant, seed, row.per_seed.back());
    }
    row.median = median_report(row.per_seed);
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace fscn
