#include "sdan/train.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "sdan/metrics.hpp"
#include "sdan/ops.hpp"

namespace sdan {

namespace {

// Flip/rotation mode for one sample; see augment().
unsigned draw_augment(const TrainConfig& cfg, std::mt19937_64& rng) {
  unsigned mode = 0;
  if (cfg.augment_rot90) {
    static constexpr unsigned kRotations[4] = {0u, 4u | 1u, 3u, 4u | 2u};
    mode = kRotations[rng() % 4];
  }
  if (cfg.augment_flip && (rng() & 1u)) mode ^= 1u;
  return mode;
}

struct ValidationPatch {
  Tensor lr;
  Tensor hr;
};

ValidationPatch center_patch(const SRPair& pair, int patch, DType dtype) {
  const int x = (pair.lr.width - patch) / 2;
  const int y = (pair.lr.height - patch) / 2;
  const int s = pair.scale;
  return ValidationPatch{
      image_to_tensor(crop(pair.lr, x, y, patch, patch), dtype),
      image_to_tensor(crop(pair.hr, x * s, y * s, patch * s, patch * s), dtype)};
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string format_progress(const TrainRecord& r) {
  return "iter=" + std::to_string(r.iter) + " loss=" + format_double(r.loss) +
         " psnr_val=" + format_double(r.psnr_val);
}

std::string format_log_record(const TrainRecord& r) {
  auto quoted = [](double v) {
    return std::isfinite(v) ? format_double(v) : "\"" + format_double(v) + "\"";
  };
  return "{\"iter\":" + std::to_string(r.iter) + ",\"loss\":" + quoted(r.loss) +
         ",\"psnr_val\":" + quoted(r.psnr_val) + "}";
}

double tensor_psnr_y(const Tensor& test, const Tensor& reference, int shave) {
  const Plane a = rgb_to_y(tensor_to_image(test));
  const Plane b = rgb_to_y(tensor_to_image(reference));
  return psnr(a, b, shave);
}

Checkpoint train(SdanModel& model, const SRPairSet& data, const TrainConfig& cfg,
                 const TrainCallbacks& callbacks) {
  const ModelConfig& mcfg = model.config();
  cfg.validate(mcfg);
  if (data.empty()) throw DataError("train: dataset is empty");
  if (data.scale() != mcfg.scale) {
    throw ConfigError("train: dataset scale x" + std::to_string(data.scale()) +
                      " does not match model scale x" +
                      std::to_string(mcfg.scale));
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SRPair& p = data.pairs()[i];
    if (p.lr.width >= cfg.patch_size && p.lr.height >= cfg.patch_size) {
      usable.push_back(i);
    }
  }
  if (usable.empty()) {
    throw DataError("train: no LR image is at least " +
                    std::to_string(cfg.patch_size) + " pixels on each side");
  }

  set_deterministic(cfg.deterministic);
  std::mt19937_64 rng(cfg.seed);
  ParameterSet& params = model.parameters();
  EmaShadow ema(params);
  AdanState state;
  const AdanHyper hyper = AdanHyper::from(cfg);

  const ValidationPatch val =
      center_patch(data.pairs()[usable.front()], cfg.patch_size, model.dtype());
  SdanModel ema_model(mcfg, 0, model.dtype());
  auto validate_ema = [&]() {
    ema_model.parameters().assign(ema.tensors());
    return tensor_psnr_y(ema_model.infer(val.lr), val.hr, mcfg.scale);
  };
  auto salvage = [&]() { return make_checkpoint(model, &ema.tensors()); };

  std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
  for (std::int64_t iter = 1; iter <= cfg.iterations; ++iter) {
    std::vector<Tensor> lr_items;
    std::vector<Tensor> hr_items;
    lr_items.reserve(static_cast<std::size_t>(cfg.batch_size));
    hr_items.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const SRPair& pair = data.pairs()[usable[pick(rng)]];
      std::optional<PatchPair> patch =
          sample_patch(pair, cfg.patch_size, rng, model.dtype());
      augment(*patch, draw_augment(cfg, rng));
      lr_items.push_back(std::move(patch->lr));
      hr_items.push_back(std::move(patch->hr));
    }
    const ag::Var lr(stack_batch(lr_items));
    const ag::Var hr(stack_batch(hr_items));

    params.zero_grad();
    const ag::Var loss = ag::l1_loss(model.forward(lr), hr);
    const double loss_value = loss.value().flat(0);
    if (!std::isfinite(loss_value)) {
      throw TrainingAborted("train: non-finite loss at iteration " +
                                std::to_string(iter),
                            iter, salvage());
    }
    if (callbacks.on_step) callbacks.on_step(iter, loss_value);
    ag::backward(loss);
    try {
      adan_step(params, state, hyper);
    } catch (const NumericError& e) {
      throw TrainingAborted(std::string(e.what()) + " at iteration " +
                                std::to_string(iter),
                            iter, salvage());
    }
    ema.update(params, cfg.ema_decay);

    if (callbacks.on_log &&
        (iter % cfg.log_interval == 0 || iter == cfg.iterations)) {
      callbacks.on_log(TrainRecord{iter, loss_value, validate_ema()});
    }
  }
  params.zero_grad();
  return make_checkpoint(model, &ema.tensors());
}

}  // namespace sdan
