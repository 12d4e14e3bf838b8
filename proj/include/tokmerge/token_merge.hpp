#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tokmerge/tensor.hpp"
#include "tokmerge/token_grid.hpp"

namespace tokmerge {

enum class SimilarityKind {
  kDot,     // raw dot product (default)
  kCosine,  // normalized dot product
};

// How tokens are paired up for merging.
//
// rate is the fraction of tokens to merge; the resulting token count shrinks
// by lambda = 1/(1-rate). partition_region is the side length s of the s x s
// region from which one destination token is drawn; 0 means "derive from the
// rate" (smallest s >= 2 with s*s >= lambda, so enough sources exist).
struct MergePolicy {
  double rate = 0.0;
  int partition_region = 0;
  SimilarityKind similarity = SimilarityKind::kDot;

  // Validates the fields and returns a copy with partition_region resolved.
  MergePolicy resolved() const;
};

// lambda = 1/(1-r), the token-count reduction factor for merge rate r.
double lambda_from_rate(double rate);

// Bookkeeping produced by a matching step: enough to merge, to unmerge, and
// to restore the original 2D layout (destinations keep their original order).
struct MergeMap {
  int64_t n_original = 0;
  int64_t n_merged = 0;
  // Per original token: index of its destination in the merged sequence.
  std::vector<int32_t> dst_of;
  // Per merged token: number of originals it absorbed (>= 1).
  std::vector<int32_t> size_of;
  // Per original token: true if it was in the destination group A.
  std::vector<uint8_t> in_group_a;

  static MergeMap identity(int64_t n);

  // The merged (source -> destination) pairs in original-index terms, sorted.
  std::vector<std::pair<int32_t, int32_t>> merged_pairs() const;

  // Throws if the invariants do not hold (sizes sum to n_original, every
  // size >= 1, destinations self-consistent).
  void validate() const;
};

// Bipartite soft matching on a 2D grid. Destinations (group A) are the
// tokens at positions (row % s == 0 && col % s == 0); every other token is a
// candidate source (group B). Each source's best destination is scored by
// dot product (or cosine), and the floor(rate * N) sources with the highest
// best scores merge into their destinations. Ties break toward the lower
// flattened source index, then the lower destination index.
MergeMap bipartite_soft_matching(const TokenGrid& tokens, const MergePolicy& policy);

// merged[j] = arithmetic mean of the original tokens with dst_of == j.
// Group sums use power-of-two-split pairwise addition so that the mean of k
// bitwise-identical tokens is bitwise exact; merge-then-unmerge is therefore
// an exactly idempotent projection.
Tensor merge_tokens(const Tensor& tokens, const MergeMap& map);

// out[i] = merged[dst_of[i]]; restores the original token count.
Tensor unmerge_tokens(const Tensor& merged, const MergeMap& map);

// Classic iterative merging step on a flat sequence: even indices form group
// A, odd indices group B, and exactly `quantity` B tokens merge into their
// best A destination. Returns the shortened sequence (no unmerging; the 2D
// layout is not preserved) plus the map.
std::pair<Tensor, MergeMap> merge_by_quantity(const Tensor& tokens, int64_t quantity,
                                              SimilarityKind similarity = SimilarityKind::kDot);

}  // namespace tokmerge
