#include "tokmerge/attention.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "tokmerge/ops.hpp"

namespace tokmerge {

namespace {

std::atomic<uint64_t> g_attention_macs{0};
std::atomic<uint64_t> g_attention_block_macs{0};

constexpr float kLayerNormEps = 1e-5f;
constexpr int64_t kQueryBlockRows = 256;

Tensor slice_block(const Tensor& m, int64_t r0, int64_t rlen, int64_t c0, int64_t clen) {
  const int64_t cols = m.dim(1);
  Tensor out({rlen, clen});
  for (int64_t i = 0; i < rlen; ++i) {
    std::memcpy(out.data() + i * clen, m.data() + (r0 + i) * cols + c0,
                static_cast<size_t>(clen) * sizeof(float));
  }
  return out;
}

void write_block(Tensor& dst, const Tensor& blk, int64_t r0, int64_t c0) {
  const int64_t cols = dst.dim(1), clen = blk.dim(1);
  for (int64_t i = 0; i < blk.dim(0); ++i) {
    std::memcpy(dst.data() + (r0 + i) * cols + c0, blk.data() + i * clen,
                static_cast<size_t>(clen) * sizeof(float));
  }
}

// Multi-head scaled dot-product attention over flat token matrices. Queries
// are processed in row blocks so the score matrix stays small; rows are
// independent, so blocking does not change any value. kv_sizes, when given,
// adds log(group size) to each key's logits (proportional attention).
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                      const std::vector<int32_t>* kv_sizes) {
  const int64_t nq = q.dim(0), d = q.dim(1), nkv = k.dim(0);
  if (heads < 1 || d % heads != 0) {
    throw ConfigError("head count " + std::to_string(heads) + " must divide channel dim " +
                      std::to_string(d));
  }
  const int64_t dh = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  std::vector<float> logit_bias;
  if (kv_sizes != nullptr) {
    logit_bias.resize(static_cast<size_t>(nkv));
    for (int64_t j = 0; j < nkv; ++j) {
      logit_bias[static_cast<size_t>(j)] = std::log(static_cast<float>((*kv_sizes)[static_cast<size_t>(j)]));
    }
  }

  Tensor out({nq, d});
  const uint64_t before = mac_count();
  for (int h = 0; h < heads; ++h) {
    const Tensor kh = slice_block(k, 0, nkv, h * dh, dh);
    const Tensor vh = slice_block(v, 0, nkv, h * dh, dh);
    for (int64_t r0 = 0; r0 < nq; r0 += kQueryBlockRows) {
      const int64_t rlen = std::min(kQueryBlockRows, nq - r0);
      const Tensor qh = slice_block(q, r0, rlen, h * dh, dh);
      Tensor scores = matmul_nt(qh, kh);
      float* sd = scores.data();
      for (int64_t i = 0; i < rlen; ++i) {
        float* row = sd + i * nkv;
        if (kv_sizes != nullptr) {
          for (int64_t j = 0; j < nkv; ++j) {
            row[j] = row[j] * scale + logit_bias[static_cast<size_t>(j)];
          }
        } else {
          for (int64_t j = 0; j < nkv; ++j) row[j] *= scale;
        }
      }
      const Tensor probs = softmax_rows(scores);
      const Tensor ctx = matmul(probs, vh);
      write_block(out, ctx, r0, h * dh);
    }
  }
  // Only matmul_nt and matmul above count MACs, so the delta is exactly the
  // two attention matmuls.
  g_attention_macs.fetch_add(mac_count() - before, std::memory_order_relaxed);
  return out;
}

// Stride-R conv plus layer norm; the K/V source for R > 1.
TokenGrid spatial_reduce(const TokenGrid& x, const AttentionWeights& w, int sr_ratio) {
  if (x.rows() % sr_ratio != 0 || x.cols() % sr_ratio != 0) {
    throw ShapeError("grid " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                     " not divisible by sr_ratio " + std::to_string(sr_ratio));
  }
  if (!w.sr.has_value()) {
    throw ConfigError("sr_ratio > 1 requires spatial-reduction weights");
  }
  Tensor reduced = conv2d(x.data, w.sr->conv_w, w.sr->conv_b, sr_ratio, 0);
  reduced = layernorm(reduced, w.sr->ln_gamma, w.sr->ln_beta, kLayerNormEps);
  return TokenGrid(std::move(reduced));
}

TokenGrid kv_source(const TokenGrid& x, const AttentionWeights& w, const AttentionConfig& cfg) {
  if (cfg.sr_ratio < 1) throw ConfigError("sr_ratio must be >= 1");
  if (cfg.sr_ratio == 1) return x;
  return spatial_reduce(x, w, cfg.sr_ratio);
}

}  // namespace

const char* variant_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kVanilla: return "vanilla";
    case AttentionVariant::kSra: return "sra";
    case AttentionVariant::kTomeSd: return "tome_sd";
    case AttentionVariant::kNeighbor2d: return "neighbor2d";
    case AttentionVariant::kSegformerpp: return "segformerpp";
  }
  return "unknown";
}

AttentionVariant variant_from_name(const std::string& name) {
  if (name == "vanilla") return AttentionVariant::kVanilla;
  if (name == "sra") return AttentionVariant::kSra;
  if (name == "tome_sd") return AttentionVariant::kTomeSd;
  if (name == "neighbor2d") return AttentionVariant::kNeighbor2d;
  if (name == "segformerpp") return AttentionVariant::kSegformerpp;
  throw ConfigError("unknown attention variant: " + name);
}

TokenGrid vanilla_attention(const TokenGrid& x, const AttentionWeights& w,
                            const AttentionConfig& cfg) {
  const Tensor xf = x.flat();
  const Tensor q = linear(xf, w.wq, w.bq);
  const Tensor k = linear(xf, w.wk, w.bk);
  const Tensor v = linear(xf, w.wv, w.bv);
  Tensor attn = attention_core(q, k, v, cfg.heads, nullptr);
  Tensor out = linear(attn, w.wo, w.bo);
  return TokenGrid::from_flat(std::move(out), x.rows(), x.cols());
}

TokenGrid sra_attention(const TokenGrid& x, const AttentionWeights& w,
                        const AttentionConfig& cfg) {
  const TokenGrid kv = kv_source(x, w, cfg);
  const Tensor q = linear(x.flat(), w.wq, w.bq);
  const Tensor kvf = kv.flat();
  const Tensor k = linear(kvf, w.wk, w.bk);
  const Tensor v = linear(kvf, w.wv, w.bv);
  Tensor attn = attention_core(q, k, v, cfg.heads, nullptr);
  Tensor out = linear(attn, w.wo, w.bo);
  return TokenGrid::from_flat(std::move(out), x.rows(), x.cols());
}

TokenGrid tome_sd_attention(const TokenGrid& x, const AttentionWeights& w,
                            const AttentionConfig& cfg) {
  if (cfg.r_q != cfg.r_kv) {
    throw ConfigError("tome_sd uses a single merge rate; r_q and r_kv disagree");
  }
  const MergePolicy policy{cfg.r_q, 0, cfg.similarity};
  const MergeMap map = bipartite_soft_matching(x, policy);
  const Tensor merged = merge_tokens(x.flat(), map);
  const Tensor q = linear(merged, w.wq, w.bq);
  const Tensor k = linear(merged, w.wk, w.bk);
  const Tensor v = linear(merged, w.wv, w.bv);
  const std::vector<int32_t>* sizes = cfg.proportional_attention ? &map.size_of : nullptr;
  Tensor attn = attention_core(q, k, v, cfg.heads, sizes);
  Tensor out = linear(attn, w.wo, w.bo);
  Tensor full = unmerge_tokens(out, map);
  return TokenGrid::from_flat(std::move(full), x.rows(), x.cols());
}

TokenGrid neighbor2d_attention(const TokenGrid& x, const AttentionWeights& w,
                               const AttentionConfig& cfg) {
  if (x.rows() % 2 != 0 || x.cols() % 2 != 0) {
    throw ShapeError("neighbor2d needs even grid dims, got " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()));
  }
  const TokenGrid kv = kv_source(x, w, cfg);
  const Tensor pooled = avgpool2d(x.data);  // [rows/2 x cols/2 x C]
  const int64_t pr = pooled.dim(0), pc = pooled.dim(1), c = pooled.dim(2);
  const Tensor q = linear(pooled.reshape({pr * pc, c}), w.wq, w.bq);
  const Tensor kvf = kv.flat();
  const Tensor k = linear(kvf, w.wk, w.bk);
  const Tensor v = linear(kvf, w.wv, w.bv);
  Tensor attn = attention_core(q, k, v, cfg.heads, nullptr);
  Tensor out = linear(attn, w.wo, w.bo);

  // Copy every pooled output token back over its 2x2 block.
  Tensor full({x.rows(), x.cols(), c});
  for (int64_t r = 0; r < x.rows(); ++r) {
    for (int64_t col = 0; col < x.cols(); ++col) {
      const int64_t src = (r / 2) * pc + col / 2;
      std::memcpy(full.data() + (r * x.cols() + col) * c, out.data() + src * c,
                  static_cast<size_t>(c) * sizeof(float));
    }
  }
  return TokenGrid(std::move(full));
}

TokenGrid segformerpp_attention(const TokenGrid& x, const AttentionWeights& w,
                                const AttentionConfig& cfg) {
  const TokenGrid kv = kv_source(x, w, cfg);
  const MergePolicy kv_policy{cfg.r_kv, 0, cfg.similarity};
  const MergeMap kv_map = bipartite_soft_matching(kv, kv_policy);
  const Tensor kv_merged = merge_tokens(kv.flat(), kv_map);

  const MergePolicy q_policy{cfg.r_q, 0, cfg.similarity};
  const MergeMap q_map = bipartite_soft_matching(x, q_policy);
  const Tensor q_merged = merge_tokens(x.flat(), q_map);

  const Tensor q = linear(q_merged, w.wq, w.bq);
  const Tensor k = linear(kv_merged, w.wk, w.bk);
  const Tensor v = linear(kv_merged, w.wv, w.bv);
  const std::vector<int32_t>* sizes = cfg.proportional_attention ? &kv_map.size_of : nullptr;
  Tensor attn = attention_core(q, k, v, cfg.heads, sizes);
  Tensor out = linear(attn, w.wo, w.bo);
  Tensor full = unmerge_tokens(out, q_map);
  return TokenGrid::from_flat(std::move(full), x.rows(), x.cols());
}

TokenGrid attention_forward(const TokenGrid& x, const AttentionWeights& w,
                            const AttentionConfig& cfg) {
  const uint64_t before = mac_count();
  TokenGrid out = [&] {
    switch (cfg.variant) {
      case AttentionVariant::kVanilla: return vanilla_attention(x, w, cfg);
      case AttentionVariant::kSra: return sra_attention(x, w, cfg);
      case AttentionVariant::kTomeSd: return tome_sd_attention(x, w, cfg);
      case AttentionVariant::kNeighbor2d: return neighbor2d_attention(x, w, cfg);
      case AttentionVariant::kSegformerpp: return segformerpp_attention(x, w, cfg);
    }
    throw ConfigError("unknown attention variant");
  }();
  g_attention_block_macs.fetch_add(mac_count() - before, std::memory_order_relaxed);
  return out;
}

uint64_t attention_matmul_macs() { return g_attention_macs.load(std::memory_order_relaxed); }

void reset_attention_matmul_macs() { g_attention_macs.store(0, std::memory_order_relaxed); }

uint64_t attention_block_macs() { return g_attention_block_macs.load(std::memory_order_relaxed); }

void reset_attention_block_macs() {
  g_attention_block_macs.store(0, std::memory_order_relaxed);
}

}  // namespace tokmerge
