#include "schn_cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "schn/checkpoint.hpp"
#include "schn/degradation.hpp"
#include "schn/errors.hpp"
#include "schn/evaluation.hpp"
#include "schn/network.hpp"
#include "schn/parallel.hpp"
#include "schn/training.hpp"
#include "schn/visualize.hpp"
#include "schn_cli/ablation.hpp"
#include "schn_cli/manifest.hpp"

namespace fs = std::filesystem;

namespace schn::cli {
namespace {

constexpr const char* kCorpusFormat = "schn-degraded-corpus";

std::uint64_t image_seed(std::uint64_t seed, const std::string& name) {
  return derive_seed(seed, {fnv1a(name)});
}

// ---- degrade --------------------------------------------------------------

struct DegradeArgs {
  std::string input;
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string replay;
};

void write_sample(const fs::path& out, const std::string& name, const ImageBuffer& hr,
                  const Degraded& d) {
  write_png(hr, out / "hr" / (name + ".png"));
  write_png(d.y, out / "y" / (name + ".png"));
  write_png(d.x, out / "x" / (name + ".png"));
}

int cmd_degrade(const DegradeArgs& a, std::ostream& out) {
  RunManifest run;
  run.command = "degrade";
  const fs::path out_dir(a.out);

  DegradationSpec spec;
  std::vector<std::string> names;
  std::vector<Provenance> provenance;
  if (!a.replay.empty()) {
    const auto m = read_json(a.replay);
    if (m.value("format", std::string()) != kCorpusFormat) {
      throw ConfigError(a.replay + " is not a degraded-corpus manifest");
    }
    spec = m.at("spec").get<DegradationSpec>();
    for (const auto& s : m.at("samples")) {
      names.push_back(s.at("name").get<std::string>());
      provenance.push_back(provenance_from_json(s.at("provenance")));
    }
    run.inputs = {a.input, a.replay};
  } else {
    if (a.spec.empty()) throw ConfigError("degrade needs --spec (or --replay)");
    spec = read_json(a.spec).get<DegradationSpec>();
    if (a.seed) spec.seed = *a.seed;
    spec.validate();
    for (const auto& p : list_pngs(a.input)) names.push_back(p.stem().string());
    provenance.resize(names.size());
    run.inputs = {a.input, a.spec};
  }
  if (names.empty()) throw ConfigError("no PNG images in " + a.input);

  std::vector<int> heights(names.size()), widths(names.size());
  const bool replay = !a.replay.empty();
  parallel_for(names.size(), [&](std::size_t i) {
    const auto hr = mod_crop(read_png(fs::path(a.input) / (names[i] + ".png")), spec.scale_factor);
    Degraded d;
    if (replay) {
      d = degrade_replay(hr, spec.scale_factor, provenance[i], spec.kernel_size);
    } else {
      Rng rng(image_seed(spec.seed, names[i]));
      d = degrade(hr, spec, rng);
      provenance[i] = d.provenance;
    }
    heights[i] = hr.height;
    widths[i] = hr.width;
    write_sample(out_dir, names[i], hr, d);
  });

  auto samples = nlohmann::json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    samples.push_back({{"name", names[i]},
                       {"height", heights[i]},
                       {"width", widths[i]},
                       {"seed", image_seed(spec.seed, names[i])},
                       {"provenance", to_json(provenance[i])}});
  }
  const nlohmann::json manifest{{"format", kCorpusFormat}, {"version", 1},
                                {"spec", spec},            {"samples", samples}};
  write_json(out_dir / "manifest.json", manifest);

  run.config = spec;
  run.seed = spec.seed;
  run.outputs = {(out_dir / "hr").string(), (out_dir / "y").string(), (out_dir / "x").string(),
                 (out_dir / "manifest.json").string()};
  run.write(out_dir / "run_manifest.json");
  out << "degraded " << names.size() << " images into " << out_dir.string() << "\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  std::string resume;
  std::int64_t max_steps = -1;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<double> lambda;
  std::optional<int> batch_size;
  std::optional<int> epochs;
  std::optional<std::string> variant;
  std::optional<std::string> data;
};

TrainConfig resolve_train_config(const TrainArgs& a) {
  nlohmann::json j = read_json(a.config);
  if (a.seed) j["seed"] = *a.seed;
  if (a.lr) j["lr_initial"] = *a.lr;
  if (a.lambda) j["lambda"] = *a.lambda;
  if (a.batch_size) j["batch_size"] = *a.batch_size;
  if (a.epochs) j["max_epochs"] = *a.epochs;
  if (a.variant) j["variant"] = *a.variant;
  if (a.data) j["data"]["dir"] = *a.data;
  return j.get<TrainConfig>();
}

std::string epoch_checkpoint_name(std::int64_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03lld.schn", static_cast<long long>(epoch));
  return buf;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest run;
  run.command = "train";
  const fs::path out_dir(a.out);

  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    const auto contents = read_checkpoint(a.resume);
    const auto cfg = Trainer::config_from(contents);
    trainer.emplace(Trainer::restore(contents, load_training_patches(cfg.data)));
    run.inputs.push_back(a.resume);
  } else {
    if (a.config.empty()) throw ConfigError("train needs --config or --resume");
    const auto cfg = resolve_train_config(a);
    std::size_t skipped = 0;
    auto patches = load_training_patches(cfg.data, &skipped);
    if (skipped > 0) out << "skipped " << skipped << " images smaller than the patch size\n";
    trainer.emplace(cfg, std::move(patches));
    run.inputs.push_back(a.config);
  }
  const auto& cfg = trainer->config();
  fs::create_directories(out_dir);
  JsonlLog log(out_dir / "train.jsonl", !a.resume.empty());

  const auto spe = trainer->steps_per_epoch();
  std::int64_t done = 0;
  bool saved_last = false;
  while (!trainer->finished() && (a.max_steps < 0 || done < a.max_steps)) {
    StepResult r;
    try {
      r = trainer->step();
    } catch (const NonFiniteLoss& e) {
      write_json(out_dir / "nonfinite_batch.json", e.batch());
      throw;
    }
    ++done;
    saved_last = false;
    auto batch = nlohmann::json::array();
    for (const auto& item : r.batch) batch.push_back(to_json(item));
    log.write({{"step", r.step},
               {"epoch", r.epoch},
               {"lr", r.lr},
               {"total", r.total},
               {"per_head", r.per_head},
               {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
               {"batch", batch}});
    if (r.step % spe == 0) {
      const auto contents = trainer->checkpoint();
      write_checkpoint(out_dir / epoch_checkpoint_name(r.epoch), contents);
      write_checkpoint(out_dir / "last.schn", contents);
      saved_last = true;
      log.write({{"epoch_end", r.epoch}, {"head_loss_means", trainer->state().head_loss_means()}});
    }
  }
  if (!saved_last) write_checkpoint(out_dir / "last.schn", trainer->checkpoint());

  run.config = cfg;
  run.seed = cfg.seed;
  run.outputs = {(out_dir / "last.schn").string(), (out_dir / "train.jsonl").string()};
  run.write(out_dir / "run_manifest.json");
  out << "trained " << done << " steps (global step " << trainer->state().global_step << ", epoch "
      << trainer->state().epoch << ")\n";
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string baseline;
  std::string data;
  std::string grid;
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  RunManifest run;
  run.command = "eval";
  if (a.ckpt.empty() == a.baseline.empty()) {
    throw ConfigError("eval needs exactly one of --ckpt or --baseline");
  }
  if (!a.baseline.empty() && a.baseline != "bicubic") {
    throw ConfigError("unknown baseline '" + a.baseline + "' (only bicubic)");
  }
  const auto conditions = load_grid(a.grid);
  const auto system = a.ckpt.empty() ? EvalSystem::bicubic()
                                     : EvalSystem::from_model(fs::path(a.ckpt).filename().string(),
                                                              load_model(a.ckpt));
  const auto report = eval_grid(system, a.data, conditions, a.seed);
  const fs::path out_dir(a.out);
  write_text(out_dir / "report.csv", report.to_csv());
  write_json(out_dir / "report.json", report.to_json());

  auto grid = nlohmann::json::array();
  for (const auto& c : conditions) grid.push_back(c);
  run.config = {{"system", system.name}, {"conditions", grid}};
  run.seed = a.seed;
  run.inputs = {a.data, a.grid};
  if (!a.ckpt.empty()) run.inputs.push_back(a.ckpt);
  run.outputs = {(out_dir / "report.csv").string(), (out_dir / "report.json").string()};
  run.write(out_dir / "run_manifest.json");

  for (std::size_t i = 0; i < conditions.size(); ++i) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s %8.4f dB  %.4f  (n=%zu)\n", conditions[i].label().c_str(),
                  report.aggregates[i].psnr, report.aggregates[i].ssim, report.aggregates[i].count);
    out << buf;
  }
  if (report.skipped > 0) out << "skipped " << report.skipped << " images\n";
  return kExitOk;
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
  std::string ckpt;
  std::string input;
  std::string output;
  std::string dump_maps;
  double gain = 4.0;
  std::string mask = "none";
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  RunManifest run;
  run.command = "infer";
  if (!(a.gain > 0.0)) throw ConfigError("--gain must be > 0");
  auto model = load_model(a.ckpt);
  model.mask = parse_mask(a.mask, model.config());
  const auto lr = read_png(a.input);

  NoGradGuard guard;
  const auto input = images_to_tensor<float>(std::span<const ImageBuffer>(&lr, 1));
  const auto result = schn_forward(input, model, ForwardOptions{false});
  write_png(clamp01(tensor_to_image(result.final_output())), a.output);
  run.outputs.push_back(a.output);

  if (!a.dump_maps.empty()) {
    const fs::path dir(a.dump_maps);
    for (std::size_t m = 0; m < result.maps.size(); ++m) {
      for (std::size_t k = 0; k < result.maps[m].size(); ++k) {
        const auto path = dir / ("hmap_" + std::to_string(m + 1) + "_" + std::to_string(k + 1) + ".png");
        write_png(visualize_hallucination_map(result.maps[m][k], a.gain), path);
        run.outputs.push_back(path.string());
      }
    }
  }
  run.config = {{"model", model.config()}, {"mask", a.mask}, {"gain", a.gain}};
  run.inputs = {a.ckpt, a.input};
  run.write(a.output + ".run.json");
  out << "wrote " << a.output << "\n";
  return kExitOk;
}

// ---- params ---------------------------------------------------------------

int cmd_params(const std::string& config_path, bool test_bypass, std::ostream& out) {
  const auto j = read_json(config_path);
  SCHConfig config;
  try {
    config = j.contains("model") ? j.at("model").get<SCHConfig>() : j.get<SCHConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  out << param_count(config, test_bypass ? ParamMode::kTestBypassed : ParamMode::kFull) << "\n";
  return kExitOk;
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
  std::string grid = "maps=0..3,modules=0,1,4,8,12";
  std::string config;
  std::string out;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  RunManifest run;
  run.command = "ablate";
  const auto axes = parse_ablation_axes(a.grid);
  const auto j = read_json(a.config);
  const auto base = j.get<TrainConfig>();
  const auto settings =
      ablation_settings_from_json(j.value("ablation", nlohmann::json::object()), base.model.scale_factor);
  const auto patches = load_training_patches(base.data);
  const auto cells = run_ablation(base, axes, settings, patches);

  const fs::path out_dir(a.out);
  write_text(out_dir / "ablation.csv", ablation_csv(axes, cells));
  auto detail = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json cell{{"maps", c.maps}, {"modules", c.modules}, {"valid", c.result.has_value()}};
    if (c.result) {
      cell["psnr"] = c.result->psnr;
      cell["ssim"] = c.result->ssim;
      cell["parameters"] = c.parameters;
      cell["final_loss"] = c.final_loss;
    }
    detail.push_back(cell);
  }
  write_json(out_dir / "ablation.json", {{"grid", a.grid}, {"steps", settings.steps},
                                          {"condition", settings.condition}, {"cells", detail}});
  run.config = j;
  run.seed = base.seed;
  run.inputs = {a.config};
  run.outputs = {(out_dir / "ablation.csv").string(), (out_dir / "ablation.json").string()};
  run.write(out_dir / "run_manifest.json");
  out << ablation_csv(axes, cells);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Blind super-resolution toolkit: degradation, training, evaluation and ablation", "schn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SCHN_VERSION);

  DegradeArgs degrade_args;
  auto* degrade_cmd = app.add_subcommand("degrade", "Synthesize LR/HR pairs from a directory of HR PNGs");
  degrade_cmd->add_option("--input", degrade_args.input, "Directory of HR PNGs")->required();
  degrade_cmd->add_option("--spec", degrade_args.spec, "Degradation spec JSON");
  degrade_cmd->add_option("--out", degrade_args.out, "Output directory")->required();
  degrade_cmd->add_option("--seed", degrade_args.seed, "Override the spec seed");
  degrade_cmd->add_option("--replay", degrade_args.replay, "Regenerate from a corpus manifest");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train_args.config, "Train config JSON");
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint to continue from");
  train_cmd->add_option("--max-steps", train_args.max_steps, "Stop this run after N steps");
  train_cmd->add_option("--seed", train_args.seed, "Override the config seed");
  train_cmd->add_option("--lr", train_args.lr, "Initial learning rate");
  train_cmd->add_option("--lambda", train_args.lambda, "Intermediate-head loss weight");
  train_cmd->add_option("--batch-size", train_args.batch_size, "Patches per step");
  train_cmd->add_option("--epochs", train_args.epochs, "Maximum epochs");
  train_cmd->add_option("--variant", train_args.variant, "NF or AN");
  train_cmd->add_option("--data", train_args.data, "Directory of HR training PNGs");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or the bicubic baseline on a grid");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "Model checkpoint");
  eval_cmd->add_option("--baseline", eval_args.baseline, "Baseline system (bicubic)");
  eval_cmd->add_option("--data", eval_args.data, "Directory of HR PNGs")->required();
  eval_cmd->add_option("--grid", eval_args.grid, "Grid JSON of eval conditions")->required();
  eval_cmd->add_option("--out", eval_args.out, "Report directory")->required();
  eval_cmd->add_option("--seed", eval_args.seed, "Noise seed");

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Super-resolve one PNG");
  infer_cmd->add_option("--ckpt", infer_args.ckpt, "Model checkpoint")->required();
  infer_cmd->add_option("--input", infer_args.input, "LR PNG")->required();
  infer_cmd->add_option("--out", infer_args.output, "SR PNG")->required();
  infer_cmd->add_option("--dump-maps", infer_args.dump_maps, "Directory for hallucination map PNGs");
  infer_cmd->add_option("--gain", infer_args.gain, "Map visualization gain");
  infer_cmd->add_option("--mask", infer_args.mask, "Hallucination outputs to zero, e.g. all:1");

  std::string params_config;
  bool test_bypass = false;
  auto* params_cmd = app.add_subcommand("params", "Print the exact parameter count");
  params_cmd->add_option("--config", params_config, "Model or train config JSON")->required();
  params_cmd->add_flag("--test-bypass", test_bypass, "Exclude heads unused at inference");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score a maps x modules grid");
  ablate_cmd->add_option("--grid", ablate_args.grid, "Axes, e.g. maps=0..3,modules=0,1,4,8,12");
  ablate_cmd->add_option("--config", ablate_args.config, "Base train config JSON")->required();
  ablate_cmd->add_option("--out", ablate_args.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (degrade_cmd->parsed()) return cmd_degrade(degrade_args, out);
    if (train_cmd->parsed()) return cmd_train(train_args, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, out);
    if (infer_cmd->parsed()) return cmd_infer(infer_args, out);
    if (params_cmd->parsed()) return cmd_params(params_config, test_bypass, out);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_args, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace schn::cli
