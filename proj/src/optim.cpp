#include "sdan/optim.hpp"

#include <cmath>
#include <string>

#include "sdan/errors.hpp"

namespace sdan {

namespace {

bool open_unit(double b) { return b > 0.0 && b < 1.0; }

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void update_tensor(Tensor& shadow, const Tensor& param, double decay) {
  if (!(shadow.shape() == param.shape()) || shadow.dtype() != param.dtype()) {
    throw UsageError("ema_update: shadow " + shadow.shape().str() +
                     " does not match parameter " + param.shape().str());
  }
  dispatch(shadow.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto s = shadow.data<T>();
    const auto p = param.data<T>();
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = static_cast<T>(decay * static_cast<double>(s[i]) +
                            (1.0 - decay) * static_cast<double>(p[i]));
    }
  });
}

}  // namespace

void TrainConfig::validate(const ModelConfig& model) const {
  require(lr > 0.0 && std::isfinite(lr), "lr must be positive");
  require(open_unit(beta1), "beta1 must lie in (0, 1)");
  require(open_unit(beta2), "beta2 must lie in (0, 1)");
  require(open_unit(beta3), "beta3 must lie in (0, 1)");
  require(eps > 0.0, "eps must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(ema_decay >= 0.0 && ema_decay <= 1.0,
          "ema_decay must lie in [0, 1]");
  require(iterations >= 0, "iterations must be non-negative");
  require(batch_size > 0, "batch_size must be positive");
  require(log_interval > 0, "log_interval must be positive");
  const int extent = max_kernel_extent(model);
  require(patch_size >= extent,
          "patch_size " + std::to_string(patch_size) +
              " is smaller than the widest kernel extent " +
              std::to_string(extent));
}

AdanHyper AdanHyper::from(const TrainConfig& cfg) {
  return AdanHyper{cfg.lr,  cfg.beta1, cfg.beta2,
                   cfg.beta3, cfg.eps, cfg.weight_decay};
}

std::size_t adan_step(std::span<Tensor* const> params,
                      std::span<const Tensor* const> grads, AdanState& state,
                      const AdanHyper& hyper) {
  if (params.size() != grads.size()) {
    throw UsageError("adan_step: " + std::to_string(params.size()) +
                     " parameters but " + std::to_string(grads.size()) +
                     " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(params[i]->shape() == grads[i]->shape())) {
      throw UsageError("adan_step: gradient " + std::to_string(i) + " shape " +
                       grads[i]->shape().str() + " vs parameter " +
                       params[i]->shape().str());
    }
    if (!grads[i]->all_finite()) {
      throw NumericError("adan_step: non-finite gradient for parameter " +
                         std::to_string(i) + "; step rejected");
    }
  }
  if (state.slots.empty()) {
    state.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::size_t len = params[i]->numel();
      state.slots[i] = AdanSlot{std::vector<double>(len), std::vector<double>(len),
                                std::vector<double>(len), std::vector<double>(len)};
    }
  } else if (state.slots.size() != params.size()) {
    throw UsageError("adan_step: state was built for a different parameter list");
  }

  const bool first = state.step == 0;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double b1 = hyper.beta1, b2 = hyper.beta2, b3 = hyper.beta3;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double c3 = 1.0 - std::pow(b3, t);
  const double shrink = 1.0 + hyper.lr * hyper.weight_decay;

  std::size_t touched = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    AdanSlot& slot = state.slots[i];
    Tensor& theta = *params[i];
    const Tensor& grad = *grads[i];
    dispatch(theta.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto w = theta.data<T>();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double g = grad.flat(j);
        const double prev = first ? g : slot.g_prev[j];
        const double diff = g - prev;
        const double lead = g + b2 * diff;
        slot.m[j] = b1 * slot.m[j] + (1.0 - b1) * g;
        slot.v[j] = b2 * slot.v[j] + (1.0 - b2) * diff;
        slot.n[j] = b3 * slot.n[j] + (1.0 - b3) * lead * lead;
        const double m_hat = slot.m[j] / c1;
        const double v_hat = slot.v[j] / c2;
        const double n_hat = slot.n[j] / c3;
        const double step = hyper.lr * (m_hat + b2 * v_hat) /
                            (std::sqrt(n_hat) + hyper.eps);
        w[j] = static_cast<T>((static_cast<double>(w[j]) - step) / shrink);
        slot.g_prev[j] = g;
      }
      touched += w.size();
    });
  }
  return touched;
}

std::size_t adan_step(ParameterSet& params, AdanState& state,
                      const AdanHyper& hyper) {
  std::vector<Tensor*> values;
  std::vector<const Tensor*> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (NamedParam& p : params.entries()) {
    if (!p.var.grad().all_finite()) {
      throw NumericError("adan_step: non-finite gradient for '" + p.name +
                         "'; step rejected");
    }
    values.push_back(&p.var.mutable_value());
    grads.push_back(&p.var.grad());
  }
  return adan_step(values, grads, state, hyper);
}

void ema_update(std::span<Tensor> shadow, std::span<const Tensor> params,
                double decay) {
  if (shadow.size() != params.size()) {
    throw UsageError("ema_update: list lengths differ");
  }
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    update_tensor(shadow[i], params[i], decay);
  }
}

EmaShadow::EmaShadow(const ParameterSet& params) : shadow_(params.snapshot()) {}

void EmaShadow::update(const ParameterSet& params, double decay) {
  const auto entries = params.entries();
  if (entries.size() != shadow_.size()) {
    throw UsageError("EmaShadow: parameter count changed");
  }
  for (std::size_t i = 0; i < shadow_.size(); ++i) {
    update_tensor(shadow_[i].tensor, entries[i].var.value(), decay);
  }
}

}  // namespace sdan
