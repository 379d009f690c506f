#include "slbr/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "slbr/config.hpp"
#include "slbr/errors.hpp"
#include "slbr/metrics.hpp"
#include "slbr/synth.hpp"
#include "slbr/train.hpp"

namespace slbr {
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key=value config file");
  cmd->add_option("--set", opts.overrides, "override, key=value (repeatable)");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "seed for synthesis and training");
}

AppConfig load_config(const CommonOptions& opts) {
  std::vector<Setting> settings;
  if (!opts.config_path.empty()) settings = read_config_file(opts.config_path);
  for (const std::string& s : opts.overrides) settings.push_back(parse_setting(s));
  if (opts.seed) {
    settings.emplace_back("synth.seed", std::to_string(*opts.seed));
    settings.emplace_back("train.seed", std::to_string(*opts.seed));
  }
  return build_config(settings);
}

fs::path require_out(const CommonOptions& opts, const char* cmd) {
  if (opts.out_dir.empty()) throw ConfigError(std::string(cmd) + ": --out is required");
  fs::create_directories(opts.out_dir);
  return opts.out_dir;
}

void require_path(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("missing config key '") + key + "'");
}

void pick_extractor(TrainConfig& cfg, std::ostream& err) {
  if (!cfg.extractor_weights.empty()) return;
  const char* env = std::getenv("SLBR_VGG_WEIGHTS");
  if (env != nullptr && *env != '\0') {
    cfg.extractor_weights = env;
  } else {
    err << "note: SLBR_VGG_WEIGHTS not set; perceptual loss uses the seeded extractor (seed "
        << cfg.extractor_seed << ")\n";
  }
}

int cmd_synth(const AppConfig& cfg, const CommonOptions& opts, std::ostream& out) {
  require_path(cfg.backgrounds_dir, "synth.backgrounds");
  require_path(cfg.watermarks_dir, "synth.watermarks");
  const std::vector<Image> backgrounds = load_backgrounds(cfg.backgrounds_dir);
  if (backgrounds.empty()) {
    throw LoadError("no PNG backgrounds in '" + cfg.backgrounds_dir.string() + "'");
  }
  const std::vector<WatermarkAsset> assets = load_watermarks(cfg.watermarks_dir);
  if (assets.empty()) throw LoadError("no PNG watermarks in '" + cfg.watermarks_dir.string() + "'");
  const fs::path root = require_out(opts, "synth");
  const Dataset ds = synthesize(backgrounds, assets, cfg.synth);
  write_dataset(ds, root);
  out << "wrote " << ds.manifest.count << " samples to " << root.string() << " (seed "
      << ds.manifest.seed << ", alpha [" << ds.manifest.alpha_min << ", " << ds.manifest.alpha_max
      << "], " << ds.manifest.image_size << "x" << ds.manifest.image_size << ", "
      << assets.size() << " watermark assets)\n";
  return kExitOk;
}

int cmd_train(AppConfig cfg, const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  require_path(cfg.data_path, "data.path");
  if (cfg.train.max_steps <= 0) throw ConfigError("train.max_steps must be set and positive");
  const Dataset ds = read_dataset(cfg.data_path);
  const fs::path root = require_out(opts, "train");
  pick_extractor(cfg.train, err);

  std::unique_ptr<Trainer> trainer;
  if (!cfg.resume_from.empty()) {
    trainer = Trainer::resume(cfg.resume_from, cfg.train, ds.samples);
    out << "resumed from " << cfg.resume_from.string() << " at step " << trainer->steps_done()
        << "\n";
  } else {
    trainer = std::make_unique<Trainer>(cfg.train, ds.samples);
  }
  out << "training " << trainer->network().parameter_count() << " parameters on "
      << ds.samples.size() << " samples\n";
  try {
    trainer->run(cfg.train.max_steps, [&](const HistoryRow& row) {
      if (cfg.log_every > 0 && (row.step % cfg.log_every == 0 || row.step == 1)) {
        out << "step " << row.step << " loss " << row.terms.total << " (L_c "
            << row.terms.coarse_l1 << ", L_r " << row.terms.refined_l1 << ", L_mask "
            << row.terms.mask << ")\n";
      }
      if (cfg.checkpoint_every > 0 && row.step % cfg.checkpoint_every == 0) {
        trainer->save_checkpoint(root / ("checkpoint_" + std::to_string(row.step) + ".slbr"));
      }
    });
  } catch (const NumericError&) {
    write_history_csv(root / "history.csv", trainer->history());
    throw;
  }
  write_history_csv(root / "history.csv", trainer->history());
  trainer->save_checkpoint(root / "checkpoint.slbr");
  out << "saved " << (root / "checkpoint.slbr").string() << "\n";
  return kExitOk;
}

int cmd_eval(const AppConfig& cfg, const CommonOptions& opts, std::ostream& out) {
  require_path(cfg.eval_data_path, "data.path");
  const Dataset ds = read_dataset(cfg.eval_data_path);
  MetricsReport report;
  if (cfg.eval_model == "identity") {
    report = evaluate_corpus(IdentityRestorer(), ds.samples);
  } else {
    require_path(cfg.checkpoint, "eval.checkpoint");
    const auto net = load_network(cfg.checkpoint, &cfg.train.network);
    report = evaluate_corpus(NetworkRestorer(*net), ds.samples);
  }
  const fs::path root = require_out(opts, "eval");
  std::ofstream f(root / "metrics.json", std::ios::trunc);
  f << nlohmann::json(report).dump(2) << "\n";
  out << std::fixed << std::setprecision(4) << "psnr " << report.psnr << " ssim " << report.ssim
      << " rmse " << report.rmse << " rmsew " << report.rmsew << " f1 " << report.f1 << " iou "
      << report.iou << " (" << report.n_images << " images, " << report.excluded_empty_mask
      << " without mask)\n";
  return kExitOk;
}

int cmd_infer(AppConfig cfg, const CommonOptions& opts, const std::string& input,
              std::ostream& out) {
  if (!input.empty()) cfg.infer_input = input;
  require_path(cfg.infer_input, "infer.input");
  require_path(cfg.checkpoint, "eval.checkpoint");
  PngImage png = read_png(cfg.infer_input);
  Image rgb = png.color;
  if (rgb.channels() == 1) {
    Image expanded(3, rgb.height(), rgb.width());
    for (int c = 0; c < 3; ++c) {
      std::copy(rgb.values().begin(), rgb.values().end(), expanded.values().begin() + c * rgb.plane());
    }
    rgb = expanded;
  }
  const auto net = load_network(cfg.checkpoint, &cfg.train.network);
  const Restoration r = NetworkRestorer(*net).restore(rgb);
  const fs::path dir = opts.out_dir.empty() ? cfg.infer_input.parent_path() : fs::path(opts.out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  const std::string stem = cfg.infer_input.stem().string();
  const fs::path refined = dir / (stem + "_refined.png");
  write_png(refined, r.image);
  write_png(dir / (stem + "_coarse.png"), r.coarse);
  write_png(dir / (stem + "_mask.png"), r.mask);
  out << "wrote " << refined.string() << " and companions (" << rgb.width() << "x" << rgb.height()
      << ")\n";
  return kExitOk;
}

int cmd_ablate(AppConfig cfg, const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  require_path(cfg.data_path, "data.path");
  if (cfg.train.max_steps <= 0) throw ConfigError("train.max_steps must be set and positive");
  const Dataset train_ds = read_dataset(cfg.data_path);
  const Dataset eval_ds =
      cfg.eval_data_path == cfg.data_path ? train_ds : read_dataset(cfg.eval_data_path);
  const fs::path root = require_out(opts, "ablate");
  pick_extractor(cfg.train, err);
  const auto results =
      run_ablation_grid(cfg.train, cfg.ablate_rows, train_ds.samples, eval_ds.samples, &err);
  write_ablation_csv(root / "ablation.csv", results);
  const std::string table = format_ablation_table(results);
  std::ofstream(root / "ablation.txt", std::ios::trunc) << table;
  out << table;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"visible watermark removal", "slbr"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::string infer_input;
  CLI::App* synth = app.add_subcommand("synth", "blend watermarks onto backgrounds");
  CLI::App* train = app.add_subcommand("train", "train the network");
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  CLI::App* infer = app.add_subcommand("infer", "remove the watermark from one image");
  CLI::App* ablate = app.add_subcommand("ablate", "train and score ablation rows");
  for (CLI::App* cmd : {synth, train, eval, infer, ablate}) add_common(cmd, opts);
  infer->add_option("input", infer_input, "input PNG");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    const AppConfig cfg = load_config(opts);
    if (synth->parsed()) return cmd_synth(cfg, opts, out);
    if (train->parsed()) return cmd_train(cfg, opts, out, err);
    if (eval->parsed()) return cmd_eval(cfg, opts, out);
    if (infer->parsed()) return cmd_infer(cfg, opts, infer_input, out);
    return cmd_ablate(cfg, opts, out, err);
  } catch (const CompatibilityError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCompat;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace slbr
