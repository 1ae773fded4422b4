#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sdan/autograd.hpp"
#include "sdan/ops.hpp"
#include "sdan/tensor.hpp"

namespace sdan {

enum class AttentionVariant : std::uint8_t { MmLka = 0, Lka13 = 1, None = 2 };

const char* attention_name(AttentionVariant v);
// Accepts "MM_LKA", "LKA13", "NONE" (case-insensitive); throws ConfigError.
AttentionVariant parse_attention(std::string_view text);

struct ModelConfig {
  int scale = 2;
  int channels = 56;
  int num_blocks = 7;
  int replicate_n = 1;
  int star_kernel = 3;
  int strip_kernel = 11;
  int square_kernel = 7;
  int dilation = 3;
  int distill_channels = 28;
  bool enable_sdm = true;
  bool enable_mmlka = true;
  AttentionVariant attention_variant = AttentionVariant::MmLka;

  // Attention actually built into each block: None when enable_mmlka is off.
  AttentionVariant attention() const {
    return enable_mmlka ? attention_variant : AttentionVariant::None;
  }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Largest effective (dilated) kernel extent along either axis.
int max_kernel_extent(const ModelConfig& cfg);

// The shipped configuration for a given upscaling factor.
ModelConfig default_model_config(int scale = 2);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct NamedParam {
  std::string name;
  ag::Var var;
};

// Ordered, uniquely named set of trainable leaves.
class ParameterSet {
 public:
  ag::Var add(std::string name, Tensor init);

  std::span<const NamedParam> entries() const { return entries_; }
  std::span<NamedParam> entries() { return entries_; }
  const ag::Var& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  std::vector<NamedTensor> snapshot() const;
  // Copies values in; names, order and shapes must match exactly.
  void assign(std::span<const NamedTensor> tensors);
  void zero_grad();

 private:
  std::vector<NamedParam> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ConvLayer {
  ConvSpec spec;
  ag::Var weight;
  ag::Var bias;  // empty when !spec.has_bias

  ag::Var operator()(const ag::Var& x) const;
};

struct PixelNormLayer {
  ag::Var gamma;
  ag::Var beta;
};

struct StarConvLayers {
  ConvLayer depthwise;
  ConvLayer branch_a;  // followed by GELU
  ConvLayer branch_b;
  ConvLayer project;
};

struct SdmLayers {
  std::array<ConvLayer, 4> distill;
  std::array<StarConvLayers, 3> refine;
  ConvLayer fuse;
};

struct MmLkaLayers {
  ConvLayer horizontal;  // 1 x k
  ConvLayer horizontal_dilated;
  ConvLayer vertical;  // k x 1
  ConvLayer vertical_dilated;
  ConvLayer square;  // s x s
  ConvLayer square_dilated;
  ConvLayer fuse;
};

struct Lka13Layers {
  ConvLayer depthwise;  // 5x5
  ConvLayer depthwise_dilated;  // 5x5, dilation 3
  ConvLayer pointwise;
};

struct RsdamLayers {
  std::optional<SdmLayers> sdm;
  std::optional<ConvLayer> plain_body;  // 3x3 conv + GELU when SDM is off
  std::optional<MmLkaLayers> mm_lka;
  std::optional<Lka13Layers> lka13;
  ConvLayer project;
  PixelNormLayer norm;
};

struct SdanLayers {
  ConvLayer head_pointwise;
  ConvLayer head_depthwise;
  std::vector<RsdamLayers> blocks;
  ConvLayer fuse;
  ConvLayer smooth_pointwise;
  ConvLayer smooth_depthwise;
  ConvLayer reconstruct;
};

// Deterministic uniform initializer shared by all layer builders.
class LayerBuilder {
 public:
  LayerBuilder(ParameterSet& params, std::uint64_t seed, DType dtype);

  // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  ConvLayer conv(const std::string& name, const ConvSpec& spec);
  PixelNormLayer pixel_norm(const std::string& name, int channels);
  StarConvLayers star_conv(const std::string& name, int channels, int kernel);
  SdmLayers sdm(const std::string& name, const ModelConfig& cfg);
  MmLkaLayers mm_lka(const std::string& name, const ModelConfig& cfg);
  Lka13Layers lka13(const std::string& name, int channels);
  RsdamLayers rsdam(const std::string& name, const ModelConfig& cfg);
  SdanLayers sdan(const ModelConfig& cfg);

 private:
  double uniform(double bound);

  ParameterSet& params_;
  std::mt19937_64 rng_;
  DType dtype_;
};

ag::Var star_conv(const ag::Var& x, const StarConvLayers& layers);
ag::Var sdm_forward(const ag::Var& x, const SdmLayers& layers);
ag::Var mm_lka_forward(const ag::Var& x, const MmLkaLayers& layers);
ag::Var lka13_forward(const ag::Var& x, const Lka13Layers& layers);
ag::Var rsdam_forward(const ag::Var& x, const RsdamLayers& layers);
ag::Var sdan_forward(const ag::Var& img, const SdanLayers& layers,
                     const ModelConfig& cfg);

class SdanModel {
 public:
  explicit SdanModel(const ModelConfig& cfg, std::uint64_t seed = 0,
                     DType dtype = DType::f32);
  SdanModel(const SdanModel&) = delete;
  SdanModel& operator=(const SdanModel&) = delete;

  const ModelConfig& config() const { return config_; }
  DType dtype() const { return dtype_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const SdanLayers& layers() const { return layers_; }

  ag::Var forward(const ag::Var& img) const;
  // Graph-free forward; values are bit-identical to forward().
  Tensor infer(const Tensor& img) const;

 private:
  ModelConfig config_;
  DType dtype_;
  ParameterSet params_;
  SdanLayers layers_;
};

}  // namespace sdan
