#include "sdan/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "sdan/errors.hpp"

namespace sdan {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("model config: " + message);
}

bool odd_positive(int k) { return k > 0 && k % 2 == 1; }

}  // namespace

const char* attention_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::MmLka:
      return "MM_LKA";
    case AttentionVariant::Lka13:
      return "LKA13";
    case AttentionVariant::None:
      return "NONE";
  }
  return "?";
}

AttentionVariant parse_attention(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  if (upper == "MM_LKA" || upper == "MMLKA" || upper == "MM-LKA") {
    return AttentionVariant::MmLka;
  }
  if (upper == "LKA13") return AttentionVariant::Lka13;
  if (upper == "NONE") return AttentionVariant::None;
  throw ConfigError("unknown attention variant '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  require(scale >= 2 && scale <= 4, "scale must be 2, 3 or 4");
  require(channels > 0 && channels % 4 == 0,
          "channels must be a positive multiple of 4");
  require(num_blocks > 0, "num_blocks must be positive");
  require(replicate_n > 0, "replicate_n must be positive");
  require(odd_positive(star_kernel), "star_kernel must be odd");
  require(odd_positive(strip_kernel), "strip_kernel must be odd");
  require(odd_positive(square_kernel), "square_kernel must be odd");
  require(dilation > 0, "dilation must be positive");
  require(distill_channels > 0 && distill_channels < channels,
          "distill_channels must lie in (0, channels)");
}

int max_kernel_extent(const ModelConfig& cfg) {
  auto dilated = [&](int k) { return k + (k - 1) * (cfg.dilation - 1); };
  int extent = std::max(3, cfg.star_kernel);
  switch (cfg.attention()) {
    case AttentionVariant::MmLka:
      extent = std::max({extent, dilated(cfg.strip_kernel),
                         dilated(cfg.square_kernel)});
      break;
    case AttentionVariant::Lka13:
      extent = std::max(extent, 5 + 4 * 2);
      break;
    case AttentionVariant::None:
      break;
  }
  return extent;
}

ModelConfig default_model_config(int scale) {
  ModelConfig cfg;
  cfg.scale = scale;
  return cfg;
}

ag::Var ParameterSet::add(std::string name, Tensor init) {
  if (index_.contains(name)) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  index_.emplace(name, entries_.size());
  ag::Var var(std::move(init), true, name);
  entries_.push_back({std::move(name), var});
  return var;
}

const ag::Var& ParameterSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw ConfigError("no parameter named '" + std::string(name) + "'");
  }
  return entries_[it->second].var;
}

bool ParameterSet::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParameterSet::total_elements() const {
  std::size_t total = 0;
  for (const NamedParam& p : entries_) total += p.var.value().numel();
  return total;
}

std::vector<NamedTensor> ParameterSet::snapshot() const {
  std::vector<NamedTensor> out;
  out.reserve(entries_.size());
  for (const NamedParam& p : entries_) out.push_back({p.name, p.var.value()});
  return out;
}

void ParameterSet::assign(std::span<const NamedTensor> tensors) {
  if (tensors.size() != entries_.size()) {
    throw ConfigError("parameter assign: expected " +
                      std::to_string(entries_.size()) + " tensors, got " +
                      std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    NamedParam& p = entries_[i];
    const NamedTensor& t = tensors[i];
    if (t.name != p.name || t.tensor.shape() != p.var.shape()) {
      throw ConfigError("parameter assign: '" + t.name + "' " +
                        t.tensor.shape().str() + " does not match '" + p.name +
                        "' " + p.var.shape().str());
    }
    p.var.mutable_value() = t.tensor.to(p.var.dtype());
  }
}

void ParameterSet::zero_grad() {
  for (NamedParam& p : entries_) p.var.zero_grad();
}

ag::Var ConvLayer::operator()(const ag::Var& x) const {
  return ag::conv2d(x, weight, spec.has_bias ? &bias : nullptr, spec);
}

LayerBuilder::LayerBuilder(ParameterSet& params, std::uint64_t seed,
                           DType dtype)
    : params_(params), rng_(seed), dtype_(dtype) {}

double LayerBuilder::uniform(double bound) {
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * bound;
}

ConvLayer LayerBuilder::conv(const std::string& name, const ConvSpec& spec) {
  spec.validate();
  const int fan_in = (spec.in_channels / spec.groups) * spec.kernel_h *
                     spec.kernel_w;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  ConvLayer layer;
  layer.spec = spec;
  Tensor w(spec.weight_shape(), dtype_);
  for (std::size_t i = 0; i < w.numel(); ++i) w.set_flat(i, uniform(bound));
  layer.weight = params_.add(name + ".weight", std::move(w));
  if (spec.has_bias) {
    Tensor b(spec.bias_shape(), dtype_);
    for (std::size_t i = 0; i < b.numel(); ++i) b.set_flat(i, uniform(bound));
    layer.bias = params_.add(name + ".bias", std::move(b));
  }
  return layer;
}

PixelNormLayer LayerBuilder::pixel_norm(const std::string& name, int channels) {
  const Shape s{static_cast<std::size_t>(channels), 1, 1, 1};
  return PixelNormLayer{params_.add(name + ".gamma", Tensor::full(s, 1.0, dtype_)),
                        params_.add(name + ".beta", Tensor::zeros(s, dtype_))};
}

StarConvLayers LayerBuilder::star_conv(const std::string& name, int channels,
                                       int kernel) {
  StarConvLayers l;
  l.depthwise = conv(name + ".dw", ConvSpec::depthwise(channels, kernel, kernel));
  l.branch_a = conv(name + ".pw_a", ConvSpec::pointwise(channels, channels));
  l.branch_b = conv(name + ".pw_b", ConvSpec::pointwise(channels, channels));
  l.project = conv(name + ".pw_out", ConvSpec::pointwise(channels, channels));
  return l;
}

SdmLayers LayerBuilder::sdm(const std::string& name, const ModelConfig& cfg) {
  SdmLayers l;
  for (int i = 0; i < 4; ++i) {
    l.distill[i] = conv(name + ".distill" + std::to_string(i + 1),
                        ConvSpec::pointwise(cfg.channels, cfg.distill_channels));
    if (i < 3) {
      l.refine[i] = star_conv(name + ".refine" + std::to_string(i + 1),
                              cfg.channels, cfg.star_kernel);
    }
  }
  l.fuse = conv(name + ".fuse",
                ConvSpec::pointwise(4 * cfg.distill_channels, cfg.channels));
  return l;
}

MmLkaLayers LayerBuilder::mm_lka(const std::string& name,
                                 const ModelConfig& cfg) {
  const int g = cfg.channels / 4;
  const int k = cfg.strip_kernel;
  const int s = cfg.square_kernel;
  const int d = cfg.dilation;
  MmLkaLayers l;
  l.horizontal = conv(name + ".h", ConvSpec::depthwise(g, 1, k));
  l.horizontal_dilated = conv(name + ".h_dil", ConvSpec::depthwise(g, 1, k, d));
  l.vertical = conv(name + ".v", ConvSpec::depthwise(g, k, 1));
  l.vertical_dilated = conv(name + ".v_dil", ConvSpec::depthwise(g, k, 1, d));
  l.square = conv(name + ".sq", ConvSpec::depthwise(g, s, s));
  l.square_dilated = conv(name + ".sq_dil", ConvSpec::depthwise(g, s, s, d));
  l.fuse = conv(name + ".fuse", ConvSpec::pointwise(cfg.channels, cfg.channels));
  return l;
}

Lka13Layers LayerBuilder::lka13(const std::string& name, int channels) {
  Lka13Layers l;
  l.depthwise = conv(name + ".dw5", ConvSpec::depthwise(channels, 5, 5));
  l.depthwise_dilated =
      conv(name + ".dwd5", ConvSpec::depthwise(channels, 5, 5, 3));
  l.pointwise = conv(name + ".pw", ConvSpec::pointwise(channels, channels));
  return l;
}

RsdamLayers LayerBuilder::rsdam(const std::string& name,
                                const ModelConfig& cfg) {
  RsdamLayers l;
  if (cfg.enable_sdm) {
    l.sdm = sdm(name + ".sdm", cfg);
  } else {
    l.plain_body = conv(name + ".body", ConvSpec::dense(cfg.channels, cfg.channels, 3));
  }
  switch (cfg.attention()) {
    case AttentionVariant::MmLka:
      l.mm_lka = mm_lka(name + ".mmlka", cfg);
      break;
    case AttentionVariant::Lka13:
      l.lka13 = lka13(name + ".lka13", cfg.channels);
      break;
    case AttentionVariant::None:
      break;
  }
  l.project = conv(name + ".proj", ConvSpec::pointwise(cfg.channels, cfg.channels));
  l.norm = pixel_norm(name + ".norm", cfg.channels);
  return l;
}

SdanLayers LayerBuilder::sdan(const ModelConfig& cfg) {
  cfg.validate();
  const int c = cfg.channels;
  SdanLayers l;
  l.head_pointwise = conv("head.pw", ConvSpec::pointwise(3 * cfg.replicate_n, c));
  l.head_depthwise = conv("head.dw", ConvSpec::depthwise(c, 3, 3));
  for (int b = 0; b < cfg.num_blocks; ++b) {
    l.blocks.push_back(rsdam("blocks." + std::to_string(b), cfg));
  }
  l.fuse = conv("fusion.pw", ConvSpec::pointwise(cfg.num_blocks * c, c));
  l.smooth_pointwise = conv("fusion.bs_pw", ConvSpec::pointwise(c, c));
  l.smooth_depthwise = conv("fusion.bs_dw", ConvSpec::depthwise(c, 3, 3));
  l.reconstruct = conv("recon.conv",
                       ConvSpec::dense(c, 3 * cfg.scale * cfg.scale, 3));
  return l;
}

ag::Var star_conv(const ag::Var& x, const StarConvLayers& layers) {
  if (x.shape().c != static_cast<std::size_t>(layers.depthwise.spec.in_channels)) {
    throw ConfigError("star_conv: input has " + std::to_string(x.shape().c) +
                      " channels, layer expects " +
                      std::to_string(layers.depthwise.spec.in_channels));
  }
  ag::Var u = layers.depthwise(x);
  ag::Var a = ag::gelu(layers.branch_a(u));
  ag::Var b = layers.branch_b(u);
  return ag::add(layers.project(ag::star_product(a, b)), x);
}

ag::Var sdm_forward(const ag::Var& x, const SdmLayers& layers) {
  // Distillation taps the input and the first three refined streams.
  std::array<ag::Var, 4> distilled;
  ag::Var stream = x;
  for (std::size_t i = 0; i < 4; ++i) {
    distilled[i] = layers.distill[i](stream);
    if (i < 3) stream = star_conv(stream, layers.refine[i]);
  }
  return layers.fuse(ag::concat_channels(distilled));
}

ag::Var mm_lka_forward(const ag::Var& x, const MmLkaLayers& layers) {
  const std::size_t c = x.shape().c;
  if (c % 4 != 0) {
    throw ConfigError("mm_lka: channel count " + std::to_string(c) +
                      " not divisible by 4");
  }
  const std::array<std::size_t, 4> sizes{c / 4, c / 4, c / 4, c / 4};
  std::vector<ag::Var> groups = ag::split_channels(x, sizes);
  std::array<ag::Var, 4> refined{
      layers.horizontal_dilated(layers.horizontal(groups[0])),
      layers.vertical_dilated(layers.vertical(groups[1])),
      layers.square(groups[2]),
      layers.square_dilated(groups[3]),
  };
  ag::Var attn = layers.fuse(ag::concat_channels(refined));
  return ag::star_product(attn, x);
}

ag::Var lka13_forward(const ag::Var& x, const Lka13Layers& layers) {
  ag::Var attn =
      layers.pointwise(layers.depthwise_dilated(layers.depthwise(x)));
  return ag::star_product(attn, x);
}

ag::Var rsdam_forward(const ag::Var& x, const RsdamLayers& layers) {
  ag::Var h = layers.sdm ? sdm_forward(x, *layers.sdm)
                         : ag::gelu((*layers.plain_body)(x));
  if (layers.mm_lka) {
    h = mm_lka_forward(h, *layers.mm_lka);
  } else if (layers.lka13) {
    h = lka13_forward(h, *layers.lka13);
  }
  h = ag::pixel_norm(layers.project(h), layers.norm.gamma, layers.norm.beta);
  return ag::add(h, x);
}

ag::Var sdan_forward(const ag::Var& img, const SdanLayers& layers,
                     const ModelConfig& cfg) {
  if (img.shape().c != 3 || img.shape().n == 0 || img.shape().h == 0 ||
      img.shape().w == 0) {
    throw UsageError("sdan_forward: expected a non-empty (N, 3, H, W) image, got " +
                     img.shape().str());
  }
  ag::Var x = img;
  if (cfg.replicate_n > 1) {
    std::vector<ag::Var> copies(static_cast<std::size_t>(cfg.replicate_n), img);
    x = ag::concat_channels(copies);
  }
  const ag::Var shallow = layers.head_depthwise(layers.head_pointwise(x));

  std::vector<ag::Var> block_outputs;
  block_outputs.reserve(layers.blocks.size());
  ag::Var feature = shallow;
  for (const RsdamLayers& block : layers.blocks) {
    feature = rsdam_forward(feature, block);
    block_outputs.push_back(feature);
  }
  ag::Var fused = ag::gelu(layers.fuse(ag::concat_channels(block_outputs)));
  block_outputs.clear();
  feature = ag::Var();
  fused = layers.smooth_depthwise(layers.smooth_pointwise(fused));
  ag::Var out = layers.reconstruct(ag::add(fused, shallow));
  return ag::pixel_shuffle(out, cfg.scale);
}

SdanModel::SdanModel(const ModelConfig& cfg, std::uint64_t seed, DType dtype)
    : config_(cfg), dtype_(dtype) {
  cfg.validate();
  LayerBuilder builder(params_, seed, dtype);
  layers_ = builder.sdan(cfg);
}

ag::Var SdanModel::forward(const ag::Var& img) const {
  return sdan_forward(img, layers_, config_);
}

Tensor SdanModel::infer(const Tensor& img) const {
  ag::NoGradGuard guard;
  return forward(ag::Var(img.to(dtype_))).value();
}

}  // namespace sdan
