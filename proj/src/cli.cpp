#include "fscn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "fscn/ablation.hpp"
#include "fscn/checkpoint.hpp"
#include "fscn/config.hpp"
#include "fscn/grad_suite.hpp"
#include "fscn/image_io.hpp"
#include "fscn/train.hpp"

namespace fscn::cli {
namespace {

namespace fs = std::filesystem;

/// Error that maps to a specific exit code.
struct ExitError : std::runtime_error {
  ExitError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

struct Options {
  std::string config;
  std::string checkpoint;
  std::string resume;
  std::string rgb;
  std::string out;
  std::string pred;
  std::string gt;
  std::string grid = "skip";
  std::optional<std::uint64_t> seed;
  int seeds = 3;
  int n = 8;
  int n_test = -1;
  int height = 64;
  int width = 128;
  double max_depth = 80.0;
  double cap = 80.0;
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw ExitError(kExitUsage, "cannot write '" + path.string() + "'");
}

/// Model described by the config snapshot stored in a checkpoint.
FscnModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ckpt.config_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  const ModelConfig mc = j.contains("model") ? model_config_from_json(j.at("model")) : ModelConfig{};
  FscnModel<float> model = build_model<float>(mc, 0);
  auto params = model.parameters();
  if (params.size() != ckpt.params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].tensor.numel() != ckpt.params[k].size()) {
      throw CheckpointError("checkpoint tensor size mismatch at '" + params[k].name + "'");
    }
    std::copy(ckpt.params[k].begin(), ckpt.params[k].end(), params[k].tensor.data().begin());
  }
  return model;
}

std::string loss_csv(const std::vector<LossRecord>& log, bool header) {
  std::string text = header ? "step,lr,loss\n" : "";
  char line[96];
  for (const auto& r : log) {
    std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g\n", static_cast<long long>(r.step), r.lr, r.loss);
    text += line;
  }
  return text;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(o);
  Datasets data = load_datasets(cfg.data, cfg.model);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const std::string snapshot = to_json(cfg).dump(2);
  write_text(dir / "config.json", snapshot + "\n");

  Trainer trainer(build_model<float>(cfg.model, cfg.train.seed), std::move(data.train), cfg.train,
                  cfg.data.augment, cfg.data.depth_cap_m, to_json(cfg).dump());
  const bool resumed = !o.resume.empty();
  if (resumed) trainer.restore(load_checkpoint(o.resume));

  auto sink = [&](const Checkpoint& ckpt) {
    char name[32];
    std::snprintf(name, sizeof(name), "step_%06lld.ckpt", static_cast<long long>(ckpt.step));
    save_checkpoint(dir / name, ckpt);
    save_checkpoint(dir / "last.ckpt", ckpt);
  };
  const fs::path csv = dir / "loss.csv";
  const bool header = !resumed || !fs::exists(csv);
  int code = kExitOk;
  try {
    trainer.run(-1, sink);
  } catch (const NonFiniteError& e) {
    err << "fscn train: " << e.what() << "; last good checkpoint kept in " << dir << "\n";
    code = kExitFailure;
  }
  std::ofstream log(csv, header ? std::ios::trunc : std::ios::app);
  log << loss_csv(trainer.log(), header);
  if (code == kExitOk) {
    out << "trained " << trainer.step() << "/" << trainer.total_steps() << " steps";
    if (!trainer.log().empty()) out << ", final loss " << trainer.log().back().loss;
    out << "; checkpoint " << (dir / "last.ckpt").string() << "\n";
  }
  return code;
}

void emit_metrics(const MetricsReport& m, const std::string& label, std::optional<std::size_t> params,
                  const fs::path& json_path, std::ostream& out) {
  const std::vector<TableRow> rows{{label, params, m}};
  const std::string table = format_table(rows);
  if (!json_path.empty()) {
    write_text(json_path, to_json(m).dump(2) + "\n");
    write_text(fs::path(json_path).replace_extension(".txt"), table);
  }
  out << table;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (!o.pred.empty() || !o.gt.empty()) {
    if (o.pred.empty() || o.gt.empty()) throw ExitError(kExitUsage, "--pred and --gt go together");
    double cap = o.cap;
    if (!o.config.empty()) cap = resolve_config(o).data.depth_cap_m;
    const Tensor<float> pred = from_depth16(read_png_gray16(o.pred));
    const Tensor<float> gt = from_depth16(read_png_gray16(o.gt));
    const MetricsReport m = eval_metrics(pred, gt, valid_mask(gt, cap));
    emit_metrics(m, fs::path(o.pred).filename().string(), std::nullopt, o.out, out);
    return kExitOk;
  }
  if (o.config.empty() || o.checkpoint.empty()) {
    throw ExitError(kExitUsage, "eval needs --config and --checkpoint (or --pred and --gt)");
  }
  const RunConfig cfg = resolve_config(o);
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const FscnModel<float> model = model_from_checkpoint(ckpt);
  const Datasets data = load_datasets(cfg.data, model.config);
  if (data.test.empty()) throw DataError("eval: test split is empty");
  const MetricsReport m = aggregate(evaluate(model, data.test, cfg.data.depth_cap_m));
  const fs::path json_path = o.out.empty() ? fs::path(cfg.output_dir) / "metrics.json" : fs::path(o.out);
  emit_metrics(m, to_string(model.config.skip_mode), param_count(model), json_path, out);
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const AblationGrid grid = ablation_grid_from_string(o.grid);
  if (o.seeds <= 0) throw ExitError(kExitUsage, "--seeds must be positive");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < o.seeds; ++i) seeds.push_back(cfg.train.seed + static_cast<std::uint64_t>(i));
  const Datasets data = load_datasets(cfg.data, cfg.model);
  const AblationResult result =
      run_ablation(cfg, grid, seeds, data, [&](const AblationVariant& v, std::uint64_t seed, const MetricsReport& m) {
        out << "  " << v.label << " seed " << seed << ": rms " << m.rms << ", abs rel " << m.abs_rel << "\n";
      });
  const fs::path dir(cfg.output_dir);
  write_text(dir / ("ablation_" + o.grid + ".json"), result.to_json().dump(2) + "\n");
  write_text(dir / ("ablation_" + o.grid + ".txt"), result.table());
  out << result.table();
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const auto reports = run_grad_suite(o.seed.value_or(0));
  bool ok = true;
  char line[160];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-4s %-48s max rel %.3e\n", r.passed ? "ok" : "FAIL",
                  r.op_name.c_str(), r.max_rel_error);
    out << line;
    ok = ok && r.passed;
  }
  out << (ok ? "all " : "some ") << reports.size() << " checks " << (ok ? "passed" : "failed") << "\n";
  return ok ? kExitOk : kExitFailure;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const FscnModel<float> model = model_from_checkpoint(load_checkpoint(o.checkpoint));
  const Tensor<float> rgb = from_rgb8(read_png_rgb8(o.rgb));
  DepthSample sample{rgb, Tensor<float>(Shape{1, 1, rgb.shape().h, rgb.shape().w}), o.rgb};
  sample = center_crop(sample, model.config.input_h, model.config.input_w);
  const Tensor<float> depth = predict(model, sample.rgb);
  const fs::path path(o.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_png(path, to_depth16(depth));
  out << "wrote " << path.string() << " (" << depth.shape().h << "x" << depth.shape().w << ")\n";
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.n < 0) throw ExitError(kExitUsage, "--n must be >= 0");
  const int n_test = o.n_test >= 0 ? o.n_test : std::max(1, o.n / 4);
  const std::uint64_t seed = o.seed.value_or(0);
  const auto train = generate_synthetic(mix_seed(seed, 0), o.n, o.height, o.width, o.max_depth);
  const auto test = generate_synthetic(mix_seed(seed, 1), n_test, o.height, o.width, o.max_depth);
  write_dataset(o.out, train, test);
  out << "wrote " << train.size() << " train and " << test.size() << " test samples to " << o.out << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Full-skip encoder-decoder depth estimation"};
  app.require_subcommand(1);
  Options o;

  auto seed_option = [&o](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t s) { o.seed = s; },
                                            "Override the random seed");
  };

  CLI::App* train = app.add_subcommand("train", "Train a model and write checkpoints");
  train->add_option("--config", o.config, "Run config JSON")->required();
  train->add_option("--resume", o.resume, "Continue from a checkpoint");
  seed_option(train);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a predicted depth png");
  eval->add_option("--config", o.config, "Run config JSON");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate");
  eval->add_option("--pred", o.pred, "Predicted 16-bit depth png");
  eval->add_option("--gt", o.gt, "Ground-truth 16-bit depth png");
  eval->add_option("--cap", o.cap, "Depth cap in metres for --pred/--gt");
  eval->add_option("--out", o.out, "Metrics JSON path (table goes next to it as .txt)");
  seed_option(eval);

  CLI::App* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  ablate->add_option("--config", o.config, "Run config JSON")->required();
  ablate->add_option("--grid", o.grid, "skip or acm")->check(CLI::IsMember({"skip", "acm"}));
  ablate->add_option("--seeds", o.seeds, "Number of seeds, counted up from the train seed");
  seed_option(ablate);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  seed_option(gradcheck);

  CLI::App* predict_cmd = app.add_subcommand("predict", "Predict a depth png from an RGB png");
  predict_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  predict_cmd->add_option("--rgb", o.rgb, "8-bit RGB png")->required();
  predict_cmd->add_option("--out", o.out, "Output 16-bit depth png")->required();
  seed_option(predict_cmd);

  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic dataset to disk");
  synth->add_option("--n", o.n, "Training samples");
  synth->add_option("--n-test", o.n_test, "Test samples (default n/4, at least 1)");
  synth->add_option("--height", o.height, "Image height (multiple of 32)");
  synth->add_option("--width", o.width, "Image width (multiple of 32)");
  synth->add_option("--max-depth", o.max_depth, "Depth range of the scenes in metres");
  synth->add_option("--out", o.out, "Dataset root")->required();
  seed_option(synth);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "fscn: " << e.what() << "\n";
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "train") return cmd_train(o, out, err);
    if (name == "eval") return cmd_eval(o, out);
    if (name == "ablate") return cmd_ablate(o, out);
    if (name == "gradcheck") return cmd_gradcheck(o, out);
    if (name == "predict") return cmd_predict(o, out);
    return cmd_synth(o, out);
  } catch (const ExitError& e) {
    err << "fscn " << name << ": " << e.what() << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    err << "fscn " << name << ": config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "fscn " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "fscn " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const ImageIoError& e) {
    err << "fscn " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "fscn " << name << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace fscn::cli
