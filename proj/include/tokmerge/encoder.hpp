#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tokmerge/attention.hpp"
#include "tokmerge/tensor.hpp"
#include "tokmerge/token_grid.hpp"

namespace tokmerge {

struct StageSpec {
  int channels = 0;
  int depth = 0;
  int heads = 1;
  int sr_ratio = 1;
  double r_q = 0.0;
  double r_kv = 0.0;
};

enum class RatePreset { kHq, kFast };

struct ModelConfig {
  std::array<StageSpec, 4> stages;
  AttentionVariant variant = AttentionVariant::kSra;
  int num_classes = 19;
  int decode_channels = 64;
  bool proportional_attention = false;

  // Throws ConfigError on head/channel mismatch or infeasible rates.
  void validate() const;
};

// Four-stage toy MixTransformer: channels [32, 64, 160, 256], depths
// [2, 2, 2, 2], heads [1, 2, 5, 8], sr_ratios [8, 4, 2, 1], merge rates 0.
ModelConfig toy_model_config(AttentionVariant variant = AttentionVariant::kSra);

// Install per-stage (r_q, r_kv) pairs of the named preset:
//   hq:   (0, 0.6), (0, 0.6), (0.8, 0), (0.8, 0)
//   fast: (0, 0.9), (0, 0.9), (0.9, 0), (0.9, 0)
void apply_rate_preset(ModelConfig& config, RatePreset preset);
const char* preset_name(RatePreset preset);

struct FfnWeights {
  Tensor fc1_w, fc1_b;  // [D x 4D], [4D]
  Tensor dw_w, dw_b;    // [3 x 3 x 4D], [4D]
  Tensor fc2_w, fc2_b;  // [4D x D], [D]
};

struct BlockWeights {
  Tensor ln1_gamma, ln1_beta;
  AttentionWeights attn;
  Tensor ln2_gamma, ln2_beta;
  FfnWeights ffn;
};

struct StageWeights {
  Tensor embed_w, embed_b;          // stage 1: 7x7 s4 p3; stages 2-4: 3x3 s2 p1
  Tensor embed_ln_gamma, embed_ln_beta;  // stage 1 only (empty otherwise)
  std::vector<BlockWeights> blocks;
};

struct DecodeWeights {
  std::array<Tensor, 4> proj_w;  // [D_i x decode_channels]
  std::array<Tensor, 4> proj_b;
  Tensor fuse_w, fuse_b;  // [4*decode_channels x decode_channels]
  Tensor cls_w, cls_b;    // [decode_channels x num_classes]
};

struct ModelWeights {
  std::array<StageWeights, 4> stages;
  DecodeWeights decode;
};

// Weight tensors with the shapes implied by the config, zero-filled, in the
// canonical (name, tensor) order used by serialization. SR weights exist for
// every stage with sr_ratio > 1, independent of the variant, so one weight
// set can be shared across variants.
ModelWeights make_weight_skeleton(const ModelConfig& config);

// Visit every tensor as (name, ref) in canonical order.
void for_each_tensor(ModelWeights& w,
                     const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_tensor(const ModelWeights& w,
                     const std::function<void(const std::string&, const Tensor&)>& fn);

// 7x7 stride-4 pad-3 convolution plus layer norm: [H x W x 3] image to a
// [H/4 x W/4 x D1] token grid. H and W must be divisible by 64.
TokenGrid patch_embed(const Tensor& image, const StageWeights& stage);

// 3x3 stride-2 pad-1 convolution: grid_i -> grid_{i+1} at half resolution.
TokenGrid downsample_stage(const TokenGrid& grid, const StageWeights& stage);

// FFN(expand 4x) -> depthwise 3x3 conv -> GELU -> FFN(contract). Residual is
// the caller's job.
TokenGrid mix_ffn(const TokenGrid& grid, const FfnWeights& w);

using Pyramid = std::array<TokenGrid, 4>;

struct ForwardStats {
  std::array<uint64_t, 4> stage_attention_macs{};  // Q*K^T and scores*V only
  std::array<uint64_t, 4> stage_total_macs{};
  uint64_t total_macs = 0;
};

// Runs the four pyramid stages; stage i output has shape
// H/2^{i+1} x W/2^{i+1} x D_i. Blocks are pre-norm with residuals.
Pyramid encoder_forward(const Tensor& image, const ModelConfig& config, const ModelWeights& w,
                        ForwardStats* stats = nullptr);

// Projects each stage to decode_channels, resizes to 1/4 resolution,
// concatenates, fuses with a 1x1 conv and projects to num_classes.
Tensor decode_head(const Pyramid& pyramid, const DecodeWeights& w, const ModelConfig& config);

// encoder_forward + decode_head.
Tensor model_forward(const Tensor& image, const ModelConfig& config, const ModelWeights& w,
                     ForwardStats* stats = nullptr);

}  // namespace tokmerge
