#include "sdan/complexity.hpp"

namespace sdan {

namespace {

using i64 = std::int64_t;

struct Ledger {
  i64 pixels;
  std::vector<LayerCost> rows;

  // Conv with bias: weights + bias params, one MAC per weight per pixel.
  void conv(const std::string& name, i64 in, i64 out, i64 kh, i64 kw,
            i64 groups = 1) {
    const i64 weights = out * (in / groups) * kh * kw;
    rows.push_back({name, weights + out, weights * pixels, 0});
  }
  void elementwise(const std::string& name, i64 channels, i64 cost = 1) {
    rows.push_back({name, 0, 0, channels * pixels * cost});
  }
  void params_only(const std::string& name, i64 params) {
    rows.push_back({name, params, 0, 0});
  }
};

}  // namespace

std::vector<LayerCost> complexity_ledger(const ModelConfig& cfg, i64 in_h,
                                         i64 in_w) {
  cfg.validate();
  Ledger l{in_h * in_w, {}};
  const i64 c = cfg.channels;
  const i64 dc = cfg.distill_channels;
  const i64 kz = cfg.star_kernel;
  const i64 k = cfg.strip_kernel;
  const i64 s = cfg.square_kernel;
  const i64 g = c / 4;

  l.conv("head.pw", 3 * cfg.replicate_n, c, 1, 1);
  l.conv("head.dw", c, c, 3, 3, c);

  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string p = "blocks." + std::to_string(b);
    if (cfg.enable_sdm) {
      for (int i = 1; i <= 4; ++i) {
        l.conv(p + ".sdm.distill" + std::to_string(i), c, dc, 1, 1);
      }
      for (int i = 1; i <= 3; ++i) {
        const std::string r = p + ".sdm.refine" + std::to_string(i);
        l.conv(r + ".dw", c, c, kz, kz, c);
        l.conv(r + ".pw_a", c, c, 1, 1);
        l.elementwise(r + ".gelu", c);
        l.conv(r + ".pw_b", c, c, 1, 1);
        l.elementwise(r + ".star", c);
        l.conv(r + ".pw_out", c, c, 1, 1);
        l.elementwise(r + ".residual", c);
      }
      l.conv(p + ".sdm.fuse", 4 * dc, c, 1, 1);
    } else {
      l.conv(p + ".body", c, c, 3, 3);
      l.elementwise(p + ".body.gelu", c);
    }
    switch (cfg.attention()) {
      case AttentionVariant::MmLka:
        l.conv(p + ".mmlka.h", g, g, 1, k, g);
        l.conv(p + ".mmlka.h_dil", g, g, 1, k, g);
        l.conv(p + ".mmlka.v", g, g, k, 1, g);
        l.conv(p + ".mmlka.v_dil", g, g, k, 1, g);
        l.conv(p + ".mmlka.sq", g, g, s, s, g);
        l.conv(p + ".mmlka.sq_dil", g, g, s, s, g);
        l.conv(p + ".mmlka.fuse", c, c, 1, 1);
        l.elementwise(p + ".mmlka.star", c);
        break;
      case AttentionVariant::Lka13:
        l.conv(p + ".lka13.dw5", c, c, 5, 5, c);
        l.conv(p + ".lka13.dwd5", c, c, 5, 5, c);
        l.conv(p + ".lka13.pw", c, c, 1, 1);
        l.elementwise(p + ".lka13.star", c);
        break;
      case AttentionVariant::None:
        break;
    }
    l.conv(p + ".proj", c, c, 1, 1);
    l.params_only(p + ".norm", 2 * c);
    l.elementwise(p + ".norm", c, 4);
    l.elementwise(p + ".residual", c);
  }

  l.conv("fusion.pw", cfg.num_blocks * c, c, 1, 1);
  l.elementwise("fusion.gelu", c);
  l.conv("fusion.bs_pw", c, c, 1, 1);
  l.conv("fusion.bs_dw", c, c, 3, 3, c);
  l.elementwise("long_skip", c);
  l.conv("recon.conv", c, 3 * cfg.scale * cfg.scale, 3, 3);
  return l.rows;
}

i64 count_params(const ModelConfig& cfg) {
  i64 total = 0;
  for (const LayerCost& row : complexity_ledger(cfg, 1, 1)) total += row.params;
  return total;
}

i64 count_macs(const ModelConfig& cfg, i64 out_h, i64 out_w) {
  i64 total = 0;
  for (const LayerCost& row :
       complexity_ledger(cfg, out_h / cfg.scale, out_w / cfg.scale)) {
    total += row.macs;
  }
  return total;
}

i64 count_flops(const ModelConfig& cfg, i64 out_h, i64 out_w) {
  i64 total = 0;
  for (const LayerCost& row :
       complexity_ledger(cfg, out_h / cfg.scale, out_w / cfg.scale)) {
    total += row.macs + row.elementwise;
  }
  return total;
}

}  // namespace sdan
