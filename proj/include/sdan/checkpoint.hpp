#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdan/model.hpp"

namespace sdan {

// On-disk layout (all integers little-endian):
//   "SDAN" | u32 version | config block | tensor list | u8 has_ema [tensor list]
// config block: u32 x 9 (scale, channels, num_blocks, replicate_n, star_kernel,
//   strip_kernel, square_kernel, dilation, distill_channels), then u8
//   enable_sdm, u8 enable_mmlka, u8 attention_variant.
// tensor list: u32 count, then per tensor u32 name length, name bytes,
//   u8 dtype (0 = f32, 1 = f64), u32 x 4 shape (N, C, H, W), raw values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedTensor> params;
  std::optional<std::vector<NamedTensor>> ema;
};

Checkpoint make_checkpoint(const SdanModel& model,
                           const std::vector<NamedTensor>* ema = nullptr);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// `source` names the origin in error messages. Validates tensor names and
// shapes against the embedded config.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes,
                             const std::string& source);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint weights into a model built from ckpt.config. With
// prefer_ema the shadow weights are used when present.
void load_weights(SdanModel& model, const Checkpoint& ckpt, bool prefer_ema);

}  // namespace sdan
