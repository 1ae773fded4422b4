#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "sdan/dataset.hpp"
#include "sdan/image.hpp"
#include "sdan/model.hpp"
#include "sdan/resample.hpp"
#include "support/oracles.hpp"

namespace sdan::fixture {

inline std::filesystem::path data_dir() { return SDAN_TEST_DATA_DIR; }

inline ImageRGB astronaut() { return read_png(data_dir() / "astronaut.png"); }
inline ImageRGB coffee() { return read_png(data_dir() / "coffee.png"); }

// HR is a synthetic image; LR is its bicubic downscale.
inline SRPair synthetic_pair(const std::string& stem, int lr_w, int lr_h, int scale,
                             std::uint64_t seed) {
  SRPair p;
  p.stem = stem;
  p.scale = scale;
  p.hr = oracle::synthetic_image(lr_w * scale, lr_h * scale, seed);
  p.lr = bicubic_resize(p.hr, lr_w, lr_h);
  return p;
}

inline ModelConfig tiny_model(int scale = 2) {
  ModelConfig cfg;
  cfg.scale = scale;
  cfg.channels = 8;
  cfg.num_blocks = 1;
  cfg.distill_channels = 4;
  return cfg;
}

// Fresh, empty directory unique to this process and call.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("sdan_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sdan::fixture
