#include "commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "sdan/checkpoint.hpp"
#include "sdan/complexity.hpp"
#include "sdan/dataset.hpp"
#include "sdan/errors.hpp"
#include "sdan/image.hpp"
#include "sdan/metrics.hpp"
#include "sdan/resample.hpp"
#include "sdan/run_config.hpp"
#include "sdan/train.hpp"

namespace fs = std::filesystem;

namespace sdan::cli {

namespace {

constexpr const char* kCheckpointName = "model.ckpt";
constexpr const char* kSalvageName = "salvage.ckpt";
constexpr const char* kRunLogName = "run.log";
constexpr const char* kResolvedConfigName = "resolved.cfg";

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return "inf";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string summary_line(const char* label, const MetricReport& r) {
  return std::string(label) + " images=" + std::to_string(r.images.size()) +
         " psnr=" + fixed(r.mean_psnr, 4) + " ssim=" + fixed(r.mean_ssim, 6) +
         " shave=" + std::to_string(r.shave);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::unique_ptr<SdanModel> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<SdanModel>(ckpt.config);
  load_weights(*model, ckpt, /*prefer_ema=*/true);
  return model;
}

ImageRGB super_resolve(const SdanModel& model, const ImageRGB& lr) {
  return tensor_to_image(model.infer(image_to_tensor(lr, model.dtype())));
}

// "<root>/HR" → "<root>", tolerating a trailing separator.
fs::path dataset_root_of(const fs::path& hr_dir) {
  fs::path p = hr_dir.lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.parent_path();
}

}  // namespace

int cmd_train(const fs::path& config_path, Io io) {
  const RunConfig cfg = load_run_config(config_path);
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  write_text(out_dir / kResolvedConfigName, render_run_config(cfg));

  if (cfg.data_root.empty()) throw DataError("config: data_root is not set");
  const SRPairSet data = SRPairSet::load(cfg.data_root, cfg.model.scale);
  if (data.empty()) {
    throw DataError("no HR images under " + (fs::path(cfg.data_root) / "HR").string());
  }

  std::ofstream log(out_dir / kRunLogName, std::ios::binary | std::ios::trunc);
  if (!log) throw DataError("cannot write " + (out_dir / kRunLogName).string());

  SdanModel model(cfg.model, cfg.train.seed);
  TrainCallbacks callbacks;
  callbacks.on_log = [&](const TrainRecord& r) {
    io.out << format_progress(r) << '\n';
    log << format_log_record(r) << '\n';
    log.flush();
  };
  try {
    const Checkpoint ckpt = train(model, data, cfg.train, callbacks);
    save_checkpoint(out_dir / kCheckpointName, ckpt);
  } catch (const TrainingAborted& e) {
    save_checkpoint(out_dir / kSalvageName, e.salvage());
    io.err << "error: " << e.what() << "; last good weights in "
           << (out_dir / kSalvageName).string() << '\n';
    return kNumericAbort;
  }
  io.out << "wrote " << (out_dir / kCheckpointName).string() << '\n';
  return kOk;
}

int cmd_eval(const fs::path& model_path, const fs::path& data_root, int scale,
             Io io) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  if (ckpt.config.scale != scale) {
    throw ConfigError("checkpoint is x" + std::to_string(ckpt.config.scale) +
                      " but --scale is " + std::to_string(scale));
  }
  const SRPairSet data = SRPairSet::load(data_root, scale);
  if (data.empty()) {
    throw DataError("no HR images under " + (data_root / "HR").string());
  }
  const auto model = model_from_checkpoint(ckpt);

  std::vector<ImageMetric> ours;
  std::vector<ImageMetric> bicubic;
  for (const SRPair& pair : data.pairs()) {
    const ImageRGB sr = super_resolve(*model, pair.lr);
    const ImageRGB up = bicubic_resize(pair.lr, pair.hr.width, pair.hr.height);
    ours.push_back(evaluate_pair(pair.stem, pair.hr, sr, scale));
    bicubic.push_back(evaluate_pair(pair.stem, pair.hr, up, scale));
    io.out << format_metric_line(ours.back()) << '\n';
  }
  io.out << summary_line("mean", summarize(std::move(ours), scale)) << '\n';
  io.out << summary_line("bicubic", summarize(std::move(bicubic), scale)) << '\n';
  return kOk;
}

int cmd_sr(const fs::path& model_path, const fs::path& input,
           const fs::path& output, Io io) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  const ImageRGB lr = read_png(input);
  const auto model = model_from_checkpoint(ckpt);
  const ImageRGB sr = super_resolve(*model, lr);
  write_png(output, sr);
  io.out << "wrote " << output.string() << " (" << sr.width << "x" << sr.height
         << ")\n";
  return kOk;
}

int cmd_info(const std::optional<fs::path>& config,
             const std::optional<fs::path>& model, Io io) {
  if (config.has_value() == model.has_value()) {
    throw ConfigError("info: pass exactly one of --config or --model");
  }
  const ModelConfig cfg =
      config ? load_run_config(*config).model : load_checkpoint(*model).config;
  io.out << "params=" << count_params(cfg) << " flops_x" << cfg.scale
         << "@1280x720=" << count_flops(cfg, 720, 1280) << '\n';
  return kOk;
}

int cmd_degrade(const fs::path& hr_dir, int scale, Io io) {
  if (scale < 2 || scale > 4) {
    throw ConfigError("degrade: scale must be 2, 3 or 4");
  }
  const std::vector<fs::path> files = list_pngs(hr_dir);
  if (files.empty()) throw DataError("no PNG files in " + hr_dir.string());
  const fs::path lr_root = lr_dir(dataset_root_of(hr_dir), scale);
  fs::create_directories(lr_root);
  for (const fs::path& file : files) {
    ImageRGB hr = read_png(file);
    const int w = hr.width - hr.width % scale;
    const int h = hr.height - hr.height % scale;
    if (w == 0 || h == 0) {
      throw DataError(file.string() + " is smaller than the scale factor");
    }
    if (w != hr.width || h != hr.height) {
      hr = crop(hr, 0, 0, w, h);
      write_png(file, hr);
    }
    const ImageRGB lr = bicubic_resize(hr, w / scale, h / scale);
    write_png(lr_root / file.filename(), lr);
    io.out << file.filename().string() << ": HR " << w << "x" << h << " -> LR "
           << lr.width << "x" << lr.height << '\n';
  }
  return kOk;
}

int run(int argc, const char* const* argv, Io io) {
  CLI::App app{"SDAN super-resolution toolkit", "sdan"};
  app.require_subcommand(1);

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", train_config, "run config file")->required();

  std::string eval_model, eval_data;
  int eval_scale = 2;
  auto* eval_cmd = app.add_subcommand("eval", "Y-channel PSNR/SSIM on a dataset");
  eval_cmd->add_option("--model", eval_model, "checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "dataset root with HR/ and LR_x<s>/")
      ->required();
  eval_cmd->add_option("--scale", eval_scale, "upscaling factor")->required();

  std::string sr_model, sr_input, sr_output;
  auto* sr_cmd = app.add_subcommand("sr", "super-resolve one PNG");
  sr_cmd->add_option("--model", sr_model, "checkpoint")->required();
  sr_cmd->add_option("--input", sr_input, "input PNG")->required();
  sr_cmd->add_option("--output", sr_output, "output PNG")->required();

  std::optional<std::string> info_config, info_model;
  auto* info_cmd = app.add_subcommand("info", "parameter and FLOP counts");
  info_cmd->add_option("--config", info_config, "run config file");
  info_cmd->add_option("--model", info_model, "checkpoint");

  std::string degrade_hr;
  int degrade_scale = 2;
  auto* degrade_cmd =
      app.add_subcommand("degrade", "bicubic LR tree from an HR directory");
  degrade_cmd->add_option("--hr", degrade_hr, "HR directory")->required();
  degrade_cmd->add_option("--scale", degrade_scale, "downscaling factor")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, io.out, io.err);
    return code == 0 ? kOk : kConfigError;
  }

  auto as_path = [](const std::optional<std::string>& s) {
    return s ? std::optional<fs::path>(*s) : std::nullopt;
  };
  try {
    if (*train_cmd) return cmd_train(train_config, io);
    if (*eval_cmd) return cmd_eval(eval_model, eval_data, eval_scale, io);
    if (*sr_cmd) return cmd_sr(sr_model, sr_input, sr_output, io);
    if (*info_cmd) return cmd_info(as_path(info_config), as_path(info_model), io);
    if (*degrade_cmd) return cmd_degrade(degrade_hr, degrade_scale, io);
  } catch (const ConfigError& e) {
    io.err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UsageError& e) {
    io.err << "usage error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    io.err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    io.err << "numeric error: " << e.what() << '\n';
    return kNumericAbort;
  } catch (const fs::filesystem_error& e) {
    io.err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kConfigError;
}

}  // namespace sdan::cli
