#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdan/model.hpp"

namespace sdan {

// Closed-form cost of one stage of the network at a given input resolution.
// FLOPs follow the convention of the lightweight-SR literature: one
// multiply-accumulate counts as one FLOP. Element-wise work is counted per
// output element: GELU, star product and tensor add cost 1 each; pixel
// normalization costs 4 (center, scale, affine multiply, affine shift).
// Bias additions and pixel shuffle are free.
struct LayerCost {
  std::string name;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t elementwise = 0;
};

std::vector<LayerCost> complexity_ledger(const ModelConfig& cfg,
                                         std::int64_t in_h, std::int64_t in_w);

std::int64_t count_params(const ModelConfig& cfg);
// FLOPs at the input resolution implied by the given output size
// (out / scale, rounded down).
std::int64_t count_flops(const ModelConfig& cfg, std::int64_t out_h,
                         std::int64_t out_w);
std::int64_t count_macs(const ModelConfig& cfg, std::int64_t out_h,
                        std::int64_t out_w);

}  // namespace sdan
