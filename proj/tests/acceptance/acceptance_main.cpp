// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fscn/ablation.hpp"
#include "fscn/checkpoint.hpp"
#include "fscn/cli.hpp"
#include "fscn/config.hpp"
#include "fscn/grad_suite.hpp"
#include "fscn/image_io.hpp"
#include "fscn/loss.hpp"
#include "fscn/model.hpp"
#include "fscn/train.hpp"
#include "metrics_oracle.hpp"

using namespace fscn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("fscn_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Tensor<float> random_depth(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<float> t(shape);
  for (auto& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto reports = run_grad_suite(0);
  const double elapsed = seconds_since(t0);

  std::map<std::string, int> shapes_per_group;
  double worst = 0.0;
  std::string failed;
  for (const auto& r : reports) {
    shapes_per_group[r.op_name.substr(0, r.op_name.find(' '))]++;
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) failed += " [" + r.op_name + "]";
  }
  std::string thin;
  for (const auto& [group, n] : shapes_per_group) {
    if (n < 3) thin += " " + group;
  }
  const bool ok = failed.empty() && thin.empty() && elapsed < 120.0;
  std::string detail = fmt("%zu checks in %zu groups, max rel err %.2e, %.1fs", reports.size(),
                           shapes_per_group.size(), worst, elapsed);
  if (!failed.empty()) detail += "; failed:" + failed;
  if (!thin.empty()) detail += "; fewer than 3 shapes:" + thin;
  return {ok, detail};
}

Outcome loss_identities() {
  std::mt19937_64 rng(11);
  const LossParams params;  // lambda 0.85, alpha 10
  Graph<float> g(GradMode::kDisabled);
  bool ok = true;
  std::string detail;

  double worst_equal = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<float> gt = random_depth(rng, {2, 1, 8, 8}, 0.5, 80.0);
    const ValidMask mask = valid_mask(gt, 80.0);
    worst_equal = std::max(worst_equal, static_cast<double>(silog_loss(g, gt, gt, mask, params).item()));
  }
  ok = ok && worst_equal == 0.0;
  detail += fmt("pred=gt max loss %g", worst_equal);

  double worst_scaled = 0.0;
  for (double s : {0.5, 2.0, 10.0}) {
    Tensor<double> gt(Shape{1, 1, 16, 16});
    std::uniform_real_distribution<double> u(0.5, 8.0);
    for (auto& v : gt.data()) v = u(rng);
    Tensor<double> pred = gt.clone();
    for (auto& v : pred.data()) v *= s;
    const ValidMask mask = valid_mask(gt, 80.0);
    worst_scaled = std::max(worst_scaled, std::abs(silog_inner(pred, gt, mask, 1.0)));
  }
  ok = ok && worst_scaled <= 1e-9;
  detail += fmt(", scaled |inner| %.1e", worst_scaled);

  const double e = std::exp(1.0);
  Tensor<double> gt(Shape{1, 1, 1, 2}, std::vector<double>{e, e});
  Tensor<double> pred(Shape{1, 1, 1, 2}, std::vector<double>{1.0, 1.0});
  Graph<double> gd(GradMode::kDisabled);
  const double loss = silog_loss(gd, pred, gt, valid_mask(gt, 80.0), params).item();
  const double expected = 10.0 * std::sqrt(0.15);
  ok = ok && std::abs(loss - expected) <= 1e-6;
  detail += fmt(", worked example %.9f vs %.9f", loss, expected);
  return {ok, detail};
}

Outcome metrics_oracle() {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> side(1, 32);
  std::uniform_real_distribution<double> cap_dist(5.0, 80.0);
  std::bernoulli_distribution invalid(0.1);
  double worst = 0.0;
  int monotone_violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int h = side(rng);
    const int w = side(rng);
    const double cap = cap_dist(rng);
    Tensor<double> gt(Shape{1, 1, h, w});
    Tensor<double> pred(Shape{1, 1, h, w});
    std::uniform_real_distribution<double> depth(0.1, cap);
    std::uniform_real_distribution<double> noise(-0.6, 0.6);
    for (std::size_t i = 0; i < gt.numel(); ++i) {
      gt.data()[i] = invalid(rng) ? 0.0 : depth(rng);
      // Mostly near the truth, sometimes far off or outside the clamp range.
      pred.data()[i] = depth(rng) * std::exp(noise(rng));
      if (i % 7 == 0 && gt.data()[i] > 0) pred.data()[i] = gt.data()[i] * std::exp(noise(rng) * 0.3);
    }
    gt.data()[0] = depth(rng);  // at least one valid pixel
    const MetricsReport got = eval_metrics(pred, gt, valid_mask(gt, cap));
    const auto pv = pred.data();
    const auto gv = gt.data();
    const oracle::Metrics want = oracle::depth_metrics({pv.begin(), pv.end()}, {gv.begin(), gv.end()}, cap);
    for (auto [a, b] : {std::pair{got.abs_rel, want.abs_rel}, {got.sq_rel, want.sq_rel},
                        {got.rms, want.rms}, {got.log_rms, want.log_rms}, {got.log10, want.log10},
                        {got.delta1, want.delta1}, {got.delta2, want.delta2},
                        {got.delta3, want.delta3}}) {
      worst = std::max(worst, std::abs(a - b));
    }
    if (!(got.delta1 <= got.delta2 && got.delta2 <= got.delta3)) ++monotone_violations;
  }
  return {worst <= 1e-6 && monotone_violations == 0,
          fmt("100 maps, max |diff| %.2e, delta order violations %d", worst, monotone_violations)};
}

Outcome param_ordering() {
  std::size_t counts[3];
  int k = 0;
  for (SkipMode mode : {SkipMode::kFullSkip, SkipMode::kSameSkip, SkipMode::kNoSkip}) {
    ModelConfig cfg;
    cfg.skip_mode = mode;
    counts[k++] = param_count(build_model<float>(cfg, 0));
  }
  return {counts[0] > counts[1] && counts[1] > counts[2],
          fmt("full-skip %zu > same-skip %zu > no-skip %zu", counts[0], counts[1], counts[2])};
}

// The trained model is reused by the round-trip criterion.
struct OverfitRun {
  Outcome outcome;
  RunConfig config;
  std::vector<DepthSample> data;
  Checkpoint checkpoint;
};

OverfitRun overfit() {
  OverfitRun run;
  RunConfig& rc = run.config;
  rc.train.batch_size = 4;
  rc.train.total_steps = 2000;
  rc.train.seed = 0;
  rc.train.lr0 = 1e-3;
  rc.data.augment = AugmentConfig::disabled(rc.model.input_h, rc.model.input_w);
  rc.data.depth_cap_m = rc.model.max_depth_m;
  run.data = generate_synthetic(mix_seed(0, 0), 8, 64, 128, rc.model.max_depth_m);

  const auto t0 = Clock::now();
  Trainer trainer(build_model<float>(rc.model, rc.train.seed), run.data, rc.train, rc.data.augment,
                  rc.data.depth_cap_m, to_json(rc).dump());
  trainer.run();
  const double elapsed = seconds_since(t0);
  const MetricsReport m = aggregate(evaluate(trainer.model(), run.data, rc.data.depth_cap_m));
  run.checkpoint = trainer.checkpoint();

  const double rms_limit = 0.05 * rc.model.max_depth_m;
  run.outcome = {m.delta1 >= 0.98 && m.rms <= rms_limit && elapsed <= 600.0,
                 fmt("delta1 %.4f (>= 0.98), rms %.3f m (<= %.1f), final loss %.4f, %.0fs (<= 600)",
                     m.delta1, m.rms, rms_limit, trainer.log().back().loss, elapsed)};
  return run;
}

RunConfig ablation_config(int steps) {
  RunConfig rc;
  rc.train.batch_size = 4;
  rc.train.total_steps = steps;
  rc.train.lr0 = 1e-3;
  rc.data.augment = AugmentConfig::disabled(rc.model.input_h, rc.model.input_w);
  return rc;
}

std::string indent(const std::string& text) {
  std::istringstream in(text);
  std::string out, line;
  while (std::getline(in, line)) out += "    " + line + "\n";
  return out;
}

Outcome skip_ablation() {
  const RunConfig rc = ablation_config(200);
  Datasets data;
  data.train = generate_synthetic(mix_seed(7, 0), 64, 64, 128, rc.model.max_depth_m);
  data.test = generate_synthetic(mix_seed(7, 1), 64, 64, 128, rc.model.max_depth_m);
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const AblationResult r = run_ablation(rc, AblationGrid::kSkip, seeds, data);
  std::fputs(indent(r.table()).c_str(), stdout);
  const double full = r.rows[0].median.rms;
  const double same = r.rows[1].median.rms;
  const double none = r.rows[2].median.rms;
  return {full <= none,
          fmt("median rms full-skip %.3f <= no-skip %.3f (same-skip %.3f)", full, none, same)};
}

Outcome acm_ablation() {
  const RunConfig rc = ablation_config(10);
  Datasets data;
  data.train = generate_synthetic(mix_seed(9, 0), 8, 64, 128, rc.model.max_depth_m);
  data.test = generate_synthetic(mix_seed(9, 1), 8, 64, 128, rc.model.max_depth_m);
  const std::vector<std::uint64_t> seeds{0};
  const AblationResult r = run_ablation(rc, AblationGrid::kAcm, seeds, data);
  const std::string table = r.table();
  std::fputs(indent(table).c_str(), stdout);
  if (r.rows.size() != 4) return {false, fmt("%zu rows, expected 4", r.rows.size())};
  const std::size_t full = r.rows[0].params, no_cw = r.rows[1].params;
  const std::size_t no_se = r.rows[2].params, no_both = r.rows[3].params;
  const bool labels = r.rows[0].label == "full" && r.rows[1].label == "w/o CW" &&
                      r.rows[2].label == "w/o SE" && r.rows[3].label == "w/o CW&SE";
  const bool fewer = std::max(no_se, no_both) < std::min(full, no_cw);
  const bool emitted = table.find("w/o CW&SE") != std::string::npos;
  return {labels && fewer && emitted,
          fmt("#params full %zu, w/o CW %zu, w/o SE %zu, w/o CW&SE %zu", full, no_cw, no_se, no_both)};
}

Outcome determinism_and_resume() {
  RunConfig rc;
  rc.train.batch_size = 4;
  rc.train.total_steps = 10;
  rc.train.seed = 3;
  rc.train.lr0 = 1e-3;
  const auto data = generate_synthetic(mix_seed(3, 0), 8, 64, 128, rc.model.max_depth_m);
  auto make = [&] {
    return Trainer(build_model<float>(rc.model, rc.train.seed), data, rc.train, rc.data.augment,
                   rc.data.depth_cap_m, to_json(rc).dump());
  };
  auto losses = [](const std::vector<LossRecord>& log) {
    std::vector<double> v;
    for (const auto& r : log) v.push_back(r.loss);
    return v;
  };

  Trainer a = make();
  Trainer b = make();
  const auto log_a = losses(a.run());
  const auto log_b = losses(b.run());
  const bool same_logs = log_a.size() == 10 && log_a == log_b;

  const fs::path dir = scratch("resume");
  Trainer first = make();
  first.run(5);
  save_checkpoint(dir / "step5.ckpt", first.checkpoint());
  Trainer resumed = make();
  resumed.restore(load_checkpoint(dir / "step5.ckpt"));
  resumed.run();
  std::vector<double> stitched = losses(first.log());
  for (double v : losses(resumed.log())) stitched.push_back(v);
  const bool same_resume = stitched == log_a;

  std::size_t identical_params = 0;
  const auto pa = a.model().parameters();
  const auto pr = resumed.model().parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) {
    const auto x = pa[k].tensor.data();
    const auto y = pr[k].tensor.data();
    identical_params += std::equal(x.begin(), x.end(), y.begin(), y.end()) ? 1 : 0;
  }
  const bool same_params = identical_params == pa.size();
  return {same_logs && same_resume && same_params,
          fmt("repeat run logs %s, resumed log %s (%zu steps), %zu/%zu tensors bit-identical",
              same_logs ? "identical" : "DIFFER", same_resume ? "identical" : "DIFFERS", stitched.size(),
              identical_params, pa.size())};
}

Outcome predict_round_trip(const OverfitRun& run) {
  const fs::path dir = scratch("roundtrip");
  const std::vector<DepthSample> none;
  write_dataset(dir / "data", run.data, none);
  save_checkpoint(dir / "model.ckpt", run.checkpoint);
  const auto split = parse_split(dir / "data" / "splits" / "train.txt");
  const auto samples = load_split(split, dir / "data");

  FscnModel<float> model = build_model<float>(run.config.model, 0);
  {
    auto params = model.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      std::copy(run.checkpoint.params[k].begin(), run.checkpoint.params[k].end(),
                params[k].tensor.data().begin());
    }
  }
  const double cap = run.config.data.depth_cap_m;
  double worst_pixel = 0.0;
  double worst_rms = 0.0;
  double worst_delta = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const fs::path rgb = dir / "data" / split[i].rgb;
    const fs::path gt = dir / "data" / split[i].depth;
    const fs::path out = dir / ("pred_" + std::to_string(i) + ".png");
    const fs::path metrics = dir / ("metrics_" + std::to_string(i) + ".json");
    std::ostringstream sink;
    if (cli::run({"predict", "--checkpoint", (dir / "model.ckpt").string(), "--rgb", rgb.string(),
                  "--out", out.string()},
                 sink, sink) != cli::kExitOk ||
        cli::run({"eval", "--pred", out.string(), "--gt", gt.string(), "--cap", std::to_string(cap),
                  "--out", metrics.string()},
                 sink, sink) != cli::kExitOk) {
      return {false, "cli failed on sample " + std::to_string(i) + ": " + sink.str()};
    }

    const Tensor<float> direct = predict(model, samples[i].rgb);
    const Tensor<float> from_png = from_depth16(read_png_gray16(out));
    for (std::size_t p = 0; p < direct.numel(); ++p) {
      worst_pixel = std::max(worst_pixel, std::abs(static_cast<double>(direct.data()[p]) -
                                                   static_cast<double>(from_png.data()[p])));
    }
    const MetricsReport in_process = eval_metrics(direct, samples[i].depth, valid_mask(samples[i].depth, cap));
    const MetricsReport via_cli = metrics_from_json(nlohmann::json::parse(std::ifstream(metrics)));
    worst_rms = std::max(worst_rms, std::abs(in_process.rms - via_cli.rms));
    worst_delta = std::max(worst_delta, std::abs(in_process.delta1 - via_cli.delta1));
  }
  constexpr double kQuantum = 1.0 / 256.0;
  return {worst_pixel <= kQuantum && worst_rms <= kQuantum,
          fmt("%zu samples, max pixel diff %.5f m, max rms diff %.5f m (<= %.5f), max delta1 diff %.4f",
              samples.size(), worst_pixel, worst_rms, kQuantum, worst_delta)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("criterion %d %-28s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  };
  auto guarded = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    try {
      report(id, name, fn());
    } catch (const std::exception& e) {
      report(id, name, {false, std::string("threw: ") + e.what()});
    }
  };

  guarded(1, "gradient suite", gradient_suite);
  guarded(2, "loss identities", loss_identities);
  guarded(3, "metrics oracle", metrics_oracle);
  guarded(4, "parameter-count ordering", param_ordering);

  OverfitRun run;
  bool trained = false;
  guarded(5, "overfit 8 samples", [&] {
    run = overfit();
    trained = true;
    return run.outcome;
  });
  guarded(6, "skip ablation direction", skip_ablation);
  guarded(7, "acm ablation grid", acm_ablation);
  guarded(8, "determinism and resume", determinism_and_resume);
  guarded(9, "predict/eval round trip", [&] {
    return trained ? predict_round_trip(run) : Outcome{false, "no trained model from criterion 5"};
  });

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
