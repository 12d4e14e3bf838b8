#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "tokmerge/tensor.hpp"
#include "tokmerge/token_grid.hpp"
#include "tokmerge/token_merge.hpp"

namespace tokmerge {

enum class AttentionVariant {
  kVanilla,     // full multi-head attention
  kSra,         // keys/values spatially reduced by a stride-R convolution
  kTomeSd,      // merge Q, K and V with one map, unmerge after attention
  kNeighbor2d,  // SRA keys/values, queries 2x2 average-pooled
  kSegformerpp, // SRA keys/values then merged; queries merged separately
};

const char* variant_name(AttentionVariant v);
AttentionVariant variant_from_name(const std::string& name);

struct AttentionConfig {
  int heads = 1;
  int sr_ratio = 1;       // R; ignored by vanilla and tome_sd
  double r_q = 0.0;       // query merge rate; ignored by vanilla/sra/neighbor2d
  double r_kv = 0.0;      // key/value merge rate; same rate as r_q for tome_sd
  AttentionVariant variant = AttentionVariant::kVanilla;
  bool proportional_attention = false;  // offset merged-key logits by log(group size)
  SimilarityKind similarity = SimilarityKind::kDot;
};

// Weights of the spatial-reduction path: stride-R conv plus layer norm.
struct SrWeights {
  Tensor conv_w;  // [R x R x D x D]
  Tensor conv_b;  // [D]
  Tensor ln_gamma;
  Tensor ln_beta;
};

struct AttentionWeights {
  Tensor wq, bq;  // [D x D], [D]
  Tensor wk, bk;
  Tensor wv, bv;
  Tensor wo, bo;
  std::optional<SrWeights> sr;  // present when the block was built with R > 1
};

// Each variant maps a TokenGrid to a TokenGrid of identical shape. The
// residual connection is the caller's job.
TokenGrid vanilla_attention(const TokenGrid& x, const AttentionWeights& w,
                            const AttentionConfig& cfg);
TokenGrid sra_attention(const TokenGrid& x, const AttentionWeights& w,
                        const AttentionConfig& cfg);
TokenGrid tome_sd_attention(const TokenGrid& x, const AttentionWeights& w,
                            const AttentionConfig& cfg);
TokenGrid neighbor2d_attention(const TokenGrid& x, const AttentionWeights& w,
                               const AttentionConfig& cfg);
TokenGrid segformerpp_attention(const TokenGrid& x, const AttentionWeights& w,
                                const AttentionConfig& cfg);

// Dispatch on cfg.variant.
TokenGrid attention_forward(const TokenGrid& x, const AttentionWeights& w,
                            const AttentionConfig& cfg);

// Global tally of MACs spent in the two attention matmuls (Q*K^T and
// scores*V) only — projections, SR convolutions and similarity scoring are
// excluded. Used to validate the analytical cost model.
uint64_t attention_matmul_macs();
void reset_attention_matmul_macs();

// Global tally of every MAC spent inside attention_forward: projections, SR
// convolutions, similarity scoring and the attention matmuls.
uint64_t attention_block_macs();
void reset_attention_block_macs();

}  // namespace tokmerge
