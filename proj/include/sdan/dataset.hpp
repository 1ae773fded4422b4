#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sdan/image.hpp"
#include "sdan/tensor.hpp"

namespace sdan {

struct SRPair {
  std::string stem;
  ImageRGB hr;
  ImageRGB lr;
  int scale = 2;
};

// In-memory LR/HR pairs. Directory convention: <root>/HR/<stem>.png and
// <root>/LR_x<scale>/<stem>.png. Pairs are sorted by stem.
class SRPairSet {
 public:
  SRPairSet() = default;
  explicit SRPairSet(int scale) : scale_(scale) {}

  // Throws DataError when the HR or LR tree is missing or a stem has no LR
  // partner, and ConfigError when HR dims are not exactly scale x LR dims.
  static SRPairSet load(const std::filesystem::path& root, int scale);

  void add(SRPair pair);
  int scale() const { return scale_; }
  const std::vector<SRPair>& pairs() const { return pairs_; }
  bool empty() const { return pairs_.empty(); }
  std::size_t size() const { return pairs_.size(); }

 private:
  int scale_ = 2;
  std::vector<SRPair> pairs_;
};

std::filesystem::path lr_dir(const std::filesystem::path& root, int scale);
// PNG files in `dir`, sorted by filename.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

struct PatchPair {
  Tensor lr;  // (1, 3, patch, patch) in [0,1]
  Tensor hr;  // (1, 3, scale*patch, scale*patch)
  int x = 0;  // LR crop offset
  int y = 0;
};

// Uniform random LR crop and the aligned HR crop. Returns nullopt (after a
// warning on stderr) when the LR image is smaller than the patch.
std::optional<PatchPair> sample_patch(const SRPair& pair, int patch,
                                      std::mt19937_64& rng,
                                      DType dtype = DType::f32);

// Flip/rotate a patch pair in place: bit 0 horizontal flip, bit 1 vertical
// flip, bit 2 transpose (with both flips, any rot90 multiple).
void augment(PatchPair& patch, unsigned mode);

// Stacks (1, C, H, W) tensors along N.
Tensor stack_batch(const std::vector<Tensor>& items);

}  // namespace sdan
