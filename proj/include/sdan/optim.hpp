#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sdan/model.hpp"
#include "sdan/tensor.hpp"

namespace sdan {

struct TrainConfig {
  double lr = 5e-3;
  double beta1 = 0.98;
  double beta2 = 0.92;
  double beta3 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double ema_decay = 0.999;
  std::int64_t iterations = 1'000'000;
  int batch_size = 64;
  int patch_size = 64;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::int64_t log_interval = 100;
  bool augment_flip = false;
  bool augment_rot90 = false;

  // Throws ConfigError. The patch must cover the model's widest kernel.
  void validate(const ModelConfig& model) const;
  bool operator==(const TrainConfig&) const = default;
};

struct AdanHyper {
  double lr = 5e-3;
  double beta1 = 0.98;
  double beta2 = 0.92;
  double beta3 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;

  static AdanHyper from(const TrainConfig& cfg);
};

// Adan moments kept in double regardless of parameter dtype.
struct AdanSlot {
  std::vector<double> m;
  std::vector<double> v;
  std::vector<double> n;
  std::vector<double> g_prev;
};

struct AdanState {
  std::vector<AdanSlot> slots;
  std::int64_t step = 0;
};

// One Adan update with retention-factor betas:
//   m <- b1 m + (1-b1) g
//   v <- b2 v + (1-b2) (g - g_prev)
//   n <- b3 n + (1-b3) (g + b2 (g - g_prev))^2
//   theta <- (theta - lr (m^ + b2 v^) / (sqrt(n^) + eps)) / (1 + lr wd)
// with hats denoting bias correction by 1 - b^t. On the first step g_prev is
// taken to be g. Any non-finite gradient rejects the whole step (NumericError)
// before anything is modified. Returns the number of scalars updated.
std::size_t adan_step(std::span<Tensor* const> params,
                      std::span<const Tensor* const> grads, AdanState& state,
                      const AdanHyper& hyper);
std::size_t adan_step(ParameterSet& params, AdanState& state,
                      const AdanHyper& hyper);

// shadow <- decay shadow + (1 - decay) param, element-wise.
void ema_update(std::span<Tensor> shadow, std::span<const Tensor> params,
                double decay);

class EmaShadow {
 public:
  EmaShadow() = default;
  // Starts as a copy of the current parameters.
  explicit EmaShadow(const ParameterSet& params);

  void update(const ParameterSet& params, double decay);
  const std::vector<NamedTensor>& tensors() const { return shadow_; }

 private:
  std::vector<NamedTensor> shadow_;
};

}  // namespace sdan
