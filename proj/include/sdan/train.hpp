#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "sdan/checkpoint.hpp"
#include "sdan/dataset.hpp"
#include "sdan/errors.hpp"
#include "sdan/model.hpp"
#include "sdan/optim.hpp"

namespace sdan {

struct TrainRecord {
  std::int64_t iter = 0;
  double loss = 0.0;
  double psnr_val = 0.0;  // EMA weights, Y channel, shave = scale
};

struct TrainCallbacks {
  // Every step, with the batch loss before the update.
  std::function<void(std::int64_t iter, double loss)> on_step;
  // Every log_interval steps and after the final step.
  std::function<void(const TrainRecord&)> on_log;
};

// Raised when the loss or a gradient turns non-finite. `salvage` holds the
// parameters and EMA shadow from before the failing step.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::int64_t iter, Checkpoint salvage)
      : NumericError(what), iter_(iter), salvage_(std::move(salvage)) {}
  std::int64_t iter() const { return iter_; }
  const Checkpoint& salvage() const { return salvage_; }

 private:
  std::int64_t iter_;
  Checkpoint salvage_;
};

// "iter=<i> loss=<f> psnr_val=<f>"
std::string format_progress(const TrainRecord& r);
// Same fields as a single-line JSON object.
std::string format_log_record(const TrainRecord& r);

// Y-channel PSNR between two (1, 3, H, W) tensors in [0,1] after 8-bit
// quantization.
double tensor_psnr_y(const Tensor& test, const Tensor& reference, int shave);

// Runs sample -> forward -> L1 -> backward -> Adan -> EMA for cfg.iterations
// steps, mutating `model` in place. Returns raw and EMA weights.
// Throws DataError for an empty or unusable dataset and ConfigError when the
// dataset scale differs from the model's.
Checkpoint train(SdanModel& model, const SRPairSet& data, const TrainConfig& cfg,
                 const TrainCallbacks& callbacks = {});

}  // namespace sdan
