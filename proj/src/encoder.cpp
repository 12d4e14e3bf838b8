#include "tokmerge/encoder.hpp"

#include <cstring>
#include <string>

#include "tokmerge/ops.hpp"

namespace tokmerge {

namespace {

constexpr float kLayerNormEps = 1e-5f;

void check_rate(double r, const char* what) {
  if (!(r >= 0.0) || r >= 1.0) {
    throw ConfigError(std::string(what) + " must lie in [0, 1), got " + std::to_string(r));
  }
}

AttentionConfig stage_attention_config(const ModelConfig& config, int stage) {
  const StageSpec& s = config.stages[static_cast<size_t>(stage)];
  AttentionConfig cfg;
  cfg.heads = s.heads;
  cfg.sr_ratio = s.sr_ratio;
  cfg.r_q = s.r_q;
  cfg.r_kv = s.r_kv;
  cfg.variant = config.variant;
  cfg.proportional_attention = config.proportional_attention;
  return cfg;
}

TokenGrid block_forward(TokenGrid g, const BlockWeights& bw, const AttentionConfig& cfg) {
  const TokenGrid normed(layernorm(g.data, bw.ln1_gamma, bw.ln1_beta, kLayerNormEps));
  const TokenGrid attn = attention_forward(normed, bw.attn, cfg);
  add_inplace(g.data, attn.data);
  const TokenGrid normed2(layernorm(g.data, bw.ln2_gamma, bw.ln2_beta, kLayerNormEps));
  const TokenGrid ffn = mix_ffn(normed2, bw.ffn);
  add_inplace(g.data, ffn.data);
  return g;
}

template <typename Weights, typename Fn>
void visit_tensors(Weights& w, const Fn& fn) {
  for (int s = 0; s < 4; ++s) {
    auto& stage = w.stages[static_cast<size_t>(s)];
    const std::string sp = "stage" + std::to_string(s + 1) + ".";
    fn(sp + "embed.conv.weight", stage.embed_w);
    fn(sp + "embed.conv.bias", stage.embed_b);
    if (s == 0) {
      fn(sp + "embed.norm.gamma", stage.embed_ln_gamma);
      fn(sp + "embed.norm.beta", stage.embed_ln_beta);
    }
    for (size_t b = 0; b < stage.blocks.size(); ++b) {
      auto& blk = stage.blocks[b];
      const std::string bp = sp + "block" + std::to_string(b + 1) + ".";
      fn(bp + "norm1.gamma", blk.ln1_gamma);
      fn(bp + "norm1.beta", blk.ln1_beta);
      fn(bp + "attn.q.weight", blk.attn.wq);
      fn(bp + "attn.q.bias", blk.attn.bq);
      fn(bp + "attn.k.weight", blk.attn.wk);
      fn(bp + "attn.k.bias", blk.attn.bk);
      fn(bp + "attn.v.weight", blk.attn.wv);
      fn(bp + "attn.v.bias", blk.attn.bv);
      fn(bp + "attn.out.weight", blk.attn.wo);
      fn(bp + "attn.out.bias", blk.attn.bo);
      if (blk.attn.sr.has_value()) {
        fn(bp + "attn.sr.conv.weight", blk.attn.sr->conv_w);
        fn(bp + "attn.sr.conv.bias", blk.attn.sr->conv_b);
        fn(bp + "attn.sr.norm.gamma", blk.attn.sr->ln_gamma);
        fn(bp + "attn.sr.norm.beta", blk.attn.sr->ln_beta);
      }
      fn(bp + "norm2.gamma", blk.ln2_gamma);
      fn(bp + "norm2.beta", blk.ln2_beta);
      fn(bp + "ffn.fc1.weight", blk.ffn.fc1_w);
      fn(bp + "ffn.fc1.bias", blk.ffn.fc1_b);
      fn(bp + "ffn.dw.weight", blk.ffn.dw_w);
      fn(bp + "ffn.dw.bias", blk.ffn.dw_b);
      fn(bp + "ffn.fc2.weight", blk.ffn.fc2_w);
      fn(bp + "ffn.fc2.bias", blk.ffn.fc2_b);
    }
  }
  for (int i = 0; i < 4; ++i) {
    const std::string dp = "decode.proj" + std::to_string(i + 1) + ".";
    fn(dp + "weight", w.decode.proj_w[static_cast<size_t>(i)]);
    fn(dp + "bias", w.decode.proj_b[static_cast<size_t>(i)]);
  }
  fn("decode.fuse.weight", w.decode.fuse_w);
  fn("decode.fuse.bias", w.decode.fuse_b);
  fn("decode.cls.weight", w.decode.cls_w);
  fn("decode.cls.bias", w.decode.cls_b);
}

}  // namespace

void ModelConfig::validate() const {
  for (size_t i = 0; i < stages.size(); ++i) {
    const StageSpec& s = stages[i];
    const std::string where = "stage " + std::to_string(i + 1) + ": ";
    if (s.channels < 1) throw ConfigError(where + "channels must be >= 1");
    if (s.depth < 1) throw ConfigError(where + "depth must be >= 1");
    if (s.heads < 1 || s.channels % s.heads != 0) {
      throw ConfigError(where + "head count " + std::to_string(s.heads) +
                        " must divide channels " + std::to_string(s.channels));
    }
    if (s.sr_ratio < 1) throw ConfigError(where + "sr_ratio must be >= 1");
    check_rate(s.r_q, (where + "r_q").c_str());
    check_rate(s.r_kv, (where + "r_kv").c_str());
    if (variant == AttentionVariant::kTomeSd && s.r_q != s.r_kv) {
      throw ConfigError(where + "tome_sd uses a single rate; r_q and r_kv disagree");
    }
  }
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (decode_channels < 1) throw ConfigError("decode_channels must be >= 1");
}

ModelConfig toy_model_config(AttentionVariant variant) {
  ModelConfig c;
  c.stages[0] = {32, 2, 1, 8, 0.0, 0.0};
  c.stages[1] = {64, 2, 2, 4, 0.0, 0.0};
  c.stages[2] = {160, 2, 5, 2, 0.0, 0.0};
  c.stages[3] = {256, 2, 8, 1, 0.0, 0.0};
  c.variant = variant;
  c.num_classes = 19;
  c.decode_channels = 64;
  return c;
}

void apply_rate_preset(ModelConfig& config, RatePreset preset) {
  const double hq[4][2] = {{0.0, 0.6}, {0.0, 0.6}, {0.8, 0.0}, {0.8, 0.0}};
  const double fast[4][2] = {{0.0, 0.9}, {0.0, 0.9}, {0.9, 0.0}, {0.9, 0.0}};
  const auto& table = (preset == RatePreset::kHq) ? hq : fast;
  for (int i = 0; i < 4; ++i) {
    config.stages[static_cast<size_t>(i)].r_q = table[i][0];
    config.stages[static_cast<size_t>(i)].r_kv = table[i][1];
  }
}

const char* preset_name(RatePreset preset) {
  return preset == RatePreset::kHq ? "hq" : "fast";
}

ModelWeights make_weight_skeleton(const ModelConfig& config) {
  config.validate();
  ModelWeights w;
  for (int s = 0; s < 4; ++s) {
    StageWeights& stage = w.stages[static_cast<size_t>(s)];
    const int64_t d = config.stages[static_cast<size_t>(s)].channels;
    if (s == 0) {
      stage.embed_w = Tensor({7, 7, 3, d});
      stage.embed_ln_gamma = Tensor::full({d}, 1.0f);
      stage.embed_ln_beta = Tensor({d});
    } else {
      const int64_t prev = config.stages[static_cast<size_t>(s - 1)].channels;
      stage.embed_w = Tensor({3, 3, prev, d});
    }
    stage.embed_b = Tensor({d});
    const int depth = config.stages[static_cast<size_t>(s)].depth;
    const int sr = config.stages[static_cast<size_t>(s)].sr_ratio;
    stage.blocks.resize(static_cast<size_t>(depth));
    for (BlockWeights& blk : stage.blocks) {
      blk.ln1_gamma = Tensor::full({d}, 1.0f);
      blk.ln1_beta = Tensor({d});
      blk.ln2_gamma = Tensor::full({d}, 1.0f);
      blk.ln2_beta = Tensor({d});
      blk.attn.wq = Tensor({d, d});
      blk.attn.bq = Tensor({d});
      blk.attn.wk = Tensor({d, d});
      blk.attn.bk = Tensor({d});
      blk.attn.wv = Tensor({d, d});
      blk.attn.bv = Tensor({d});
      blk.attn.wo = Tensor({d, d});
      blk.attn.bo = Tensor({d});
      if (sr > 1) {
        SrWeights srw;
        srw.conv_w = Tensor({sr, sr, d, d});
        srw.conv_b = Tensor({d});
        srw.ln_gamma = Tensor::full({d}, 1.0f);
        srw.ln_beta = Tensor({d});
        blk.attn.sr = std::move(srw);
      }
      blk.ffn.fc1_w = Tensor({d, 4 * d});
      blk.ffn.fc1_b = Tensor({4 * d});
      blk.ffn.dw_w = Tensor({3, 3, 4 * d});
      blk.ffn.dw_b = Tensor({4 * d});
      blk.ffn.fc2_w = Tensor({4 * d, d});
      blk.ffn.fc2_b = Tensor({d});
    }
  }
  const int64_t cd = config.decode_channels;
  for (int i = 0; i < 4; ++i) {
    w.decode.proj_w[static_cast<size_t>(i)] =
        Tensor({config.stages[static_cast<size_t>(i)].channels, cd});
    w.decode.proj_b[static_cast<size_t>(i)] = Tensor({cd});
  }
  w.decode.fuse_w = Tensor({4 * cd, cd});
  w.decode.fuse_b = Tensor({cd});
  w.decode.cls_w = Tensor({cd, config.num_classes});
  w.decode.cls_b = Tensor({config.num_classes});
  return w;
}

void for_each_tensor(ModelWeights& w,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_tensors(w, fn);
}

void for_each_tensor(const ModelWeights& w,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_tensors(w, fn);
}

TokenGrid patch_embed(const Tensor& image, const StageWeights& stage) {
  if (image.ndim() != 3 || image.dim(2) != stage.embed_w.dim(2)) {
    throw ShapeError("patch_embed expects an [H x W x C] image matching the embed weights");
  }
  if (image.dim(0) % 64 != 0 || image.dim(1) % 64 != 0) {
    throw ShapeError("input height and width must be divisible by 64, got " +
                     std::to_string(image.dim(0)) + "x" + std::to_string(image.dim(1)));
  }
  Tensor tokens = conv2d(image, stage.embed_w, stage.embed_b, 4, 3);
  tokens = layernorm(tokens, stage.embed_ln_gamma, stage.embed_ln_beta, kLayerNormEps);
  return TokenGrid(std::move(tokens));
}

TokenGrid downsample_stage(const TokenGrid& grid, const StageWeights& stage) {
  if (grid.rows() % 2 != 0 || grid.cols() % 2 != 0) {
    throw ShapeError("downsample_stage needs even grid dims, got " + std::to_string(grid.rows()) +
                     "x" + std::to_string(grid.cols()));
  }
  return TokenGrid(conv2d(grid.data, stage.embed_w, stage.embed_b, 2, 1));
}

TokenGrid mix_ffn(const TokenGrid& grid, const FfnWeights& w) {
  const int64_t rows = grid.rows(), cols = grid.cols();
  const Tensor expanded = linear(grid.flat(), w.fc1_w, w.fc1_b);
  const int64_t hidden = expanded.dim(1);
  Tensor spatial = depthwise_conv2d(expanded.reshape({rows, cols, hidden}), w.dw_w, w.dw_b, 1, 1);
  spatial = gelu(spatial);
  Tensor out = linear(std::move(spatial).reshape({rows * cols, hidden}), w.fc2_w, w.fc2_b);
  return TokenGrid::from_flat(std::move(out), rows, cols);
}

Pyramid encoder_forward(const Tensor& image, const ModelConfig& config, const ModelWeights& w,
                        ForwardStats* stats) {
  config.validate();
  for (int s = 0; s < 4; ++s) {
    const auto& stage = w.stages[static_cast<size_t>(s)];
    if (stage.embed_w.empty() ||
        stage.embed_w.dim(3) != config.stages[static_cast<size_t>(s)].channels ||
        static_cast<int>(stage.blocks.size()) != config.stages[static_cast<size_t>(s)].depth) {
      throw LoadError("weights do not match the model config at stage " + std::to_string(s + 1));
    }
  }

  const uint64_t macs_at_entry = mac_count();
  Pyramid pyramid;
  TokenGrid g;
  for (int s = 0; s < 4; ++s) {
    const uint64_t stage_macs0 = mac_count();
    const uint64_t stage_attn0 = attention_matmul_macs();
    const StageWeights& sw = w.stages[static_cast<size_t>(s)];
    g = (s == 0) ? patch_embed(image, sw) : downsample_stage(g, sw);
    const AttentionConfig cfg = stage_attention_config(config, s);
    for (const BlockWeights& blk : sw.blocks) {
      g = block_forward(std::move(g), blk, cfg);
    }
    pyramid[static_cast<size_t>(s)] = g;
    if (stats != nullptr) {
      stats->stage_total_macs[static_cast<size_t>(s)] = mac_count() - stage_macs0;
      stats->stage_attention_macs[static_cast<size_t>(s)] = attention_matmul_macs() - stage_attn0;
    }
  }
  if (stats != nullptr) stats->total_macs = mac_count() - macs_at_entry;
  return pyramid;
}

Tensor decode_head(const Pyramid& pyramid, const DecodeWeights& w, const ModelConfig& config) {
  const int64_t out_rows = pyramid[0].rows();
  const int64_t out_cols = pyramid[0].cols();
  const int64_t cd = config.decode_channels;
  Tensor concat({out_rows, out_cols, 4 * cd});
  for (int i = 0; i < 4; ++i) {
    const TokenGrid& g = pyramid[static_cast<size_t>(i)];
    Tensor proj = linear(g.flat(), w.proj_w[static_cast<size_t>(i)], w.proj_b[static_cast<size_t>(i)]);
    Tensor grid = std::move(proj).reshape({g.rows(), g.cols(), cd});
    if (g.rows() != out_rows || g.cols() != out_cols) {
      grid = bilinear_resize(grid, out_rows, out_cols);
    }
    const float* src = grid.data();
    float* dst = concat.data();
    for (int64_t t = 0; t < out_rows * out_cols; ++t) {
      std::memcpy(dst + t * 4 * cd + i * cd, src + t * cd, static_cast<size_t>(cd) * sizeof(float));
    }
  }
  Tensor fused = linear(std::move(concat).reshape({out_rows * out_cols, 4 * cd}), w.fuse_w, w.fuse_b);
  Tensor logits = linear(fused, w.cls_w, w.cls_b);
  return std::move(logits).reshape({out_rows, out_cols, config.num_classes});
}

Tensor model_forward(const Tensor& image, const ModelConfig& config, const ModelWeights& w,
                     ForwardStats* stats) {
  const Pyramid pyramid = encoder_forward(image, config, w, stats);
  return decode_head(pyramid, w.decode, config);
}

}  // namespace tokmerge
