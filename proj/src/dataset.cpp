#include "sdan/dataset.hpp"

#include <algorithm>
#include <iostream>

#include "sdan/errors.hpp"

namespace fs = std::filesystem;

namespace sdan {

namespace {

Tensor transform(const Tensor& t, unsigned mode) {
  const Shape& s = t.shape();
  const bool transpose = (mode & 4u) != 0;
  const Shape os = transpose ? Shape{s.n, s.c, s.w, s.h} : s;
  Tensor out(os, t.dtype());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          std::size_t sx = (mode & 1u) ? s.w - 1 - x : x;
          std::size_t sy = (mode & 2u) ? s.h - 1 - y : y;
          const double v = t.at(n, c, sy, sx);
          if (transpose) {
            out.set(n, c, x, y, v);
          } else {
            out.set(n, c, y, x, v);
          }
        }
  return out;
}

}  // namespace

fs::path lr_dir(const fs::path& root, int scale) {
  return root / ("LR_x" + std::to_string(scale));
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

SRPairSet SRPairSet::load(const fs::path& root, int scale) {
  const fs::path hr_root = root / "HR";
  const fs::path lr_root = lr_dir(root, scale);
  if (!fs::is_directory(hr_root)) {
    throw DataError("dataset: missing HR directory " + hr_root.string());
  }
  if (!fs::is_directory(lr_root)) {
    throw DataError("dataset: missing LR directory " + lr_root.string());
  }
  SRPairSet set(scale);
  for (const fs::path& hr_path : list_pngs(hr_root)) {
    const fs::path lr_path = lr_root / hr_path.filename();
    if (!fs::exists(lr_path)) {
      throw DataError("dataset: no LR partner for " + hr_path.string());
    }
    set.add(SRPair{hr_path.stem().string(), read_png(hr_path), read_png(lr_path),
                   scale});
  }
  return set;
}

void SRPairSet::add(SRPair pair) {
  if (pair.scale != scale_) {
    throw ConfigError("dataset: pair '" + pair.stem + "' has scale " +
                    std::to_string(pair.scale) + ", set has " +
                    std::to_string(scale_));
  }
  if (pair.hr.width != scale_ * pair.lr.width ||
      pair.hr.height != scale_ * pair.lr.height) {
    throw ConfigError("dataset: pair '" + pair.stem + "' HR " +
                    std::to_string(pair.hr.width) + "x" +
                    std::to_string(pair.hr.height) + " is not x" +
                    std::to_string(scale_) + " of LR " +
                    std::to_string(pair.lr.width) + "x" +
                    std::to_string(pair.lr.height));
  }
  pairs_.push_back(std::move(pair));
  std::sort(pairs_.begin(), pairs_.end(),
            [](const SRPair& a, const SRPair& b) { return a.stem < b.stem; });
}

std::optional<PatchPair> sample_patch(const SRPair& pair, int patch,
                                      std::mt19937_64& rng, DType dtype) {
  if (patch <= 0) throw UsageError("sample_patch: patch size must be positive");
  if (pair.lr.width < patch || pair.lr.height < patch) {
    std::cerr << "warning: skipping '" << pair.stem << "' (LR "
              << pair.lr.width << "x" << pair.lr.height << " < patch " << patch
              << ")\n";
    return std::nullopt;
  }
  std::uniform_int_distribution<int> ux(0, pair.lr.width - patch);
  std::uniform_int_distribution<int> uy(0, pair.lr.height - patch);
  PatchPair out;
  out.x = ux(rng);
  out.y = uy(rng);
  const int s = pair.scale;
  out.lr = image_to_tensor(crop(pair.lr, out.x, out.y, patch, patch), dtype);
  out.hr = image_to_tensor(
      crop(pair.hr, out.x * s, out.y * s, patch * s, patch * s), dtype);
  return out;
}

void augment(PatchPair& patch, unsigned mode) {
  if ((mode & 7u) == 0) return;
  patch.lr = transform(patch.lr, mode);
  patch.hr = transform(patch.hr, mode);
}

Tensor stack_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw UsageError("stack_batch: no items");
  const Shape& first = items.front().shape();
  Tensor out(Shape{items.size(), first.c, first.h, first.w},
             items.front().dtype());
  const std::size_t stride = first.c * first.h * first.w;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Shape& s = items[i].shape();
    if (s.n != 1 || s.c != first.c || s.h != first.h || s.w != first.w) {
      throw UsageError("stack_batch: item " + std::to_string(i) + " has shape " +
                       s.str());
    }
    dispatch(out.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const auto src = items[i].data<T>();
      std::copy(src.begin(), src.end(), out.data<T>().begin() + i * stride);
    });
  }
  return out;
}

}  // namespace sdan
