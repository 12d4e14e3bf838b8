#include "tokmerge/token_merge.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <string>

#include "tokmerge/ops.hpp"

namespace tokmerge {

double lambda_from_rate(double rate) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ParameterError("merge rate must lie in [0, 1), got " + std::to_string(rate));
  }
  return 1.0 / (1.0 - rate);
}

MergePolicy MergePolicy::resolved() const {
  MergePolicy p = *this;
  const double lambda = lambda_from_rate(p.rate);  // validates the rate
  if (p.partition_region == 0) {
    // Smallest s >= 2 with s*s >= lambda, derived without trusting
    // sqrt rounding at the boundary.
    int s = std::max(2, static_cast<int>(std::ceil(std::sqrt(lambda))));
    while (s > 2 && static_cast<double>(s - 1) * static_cast<double>(s - 1) >= lambda) --s;
    while (static_cast<double>(s) * static_cast<double>(s) < lambda) ++s;
    p.partition_region = s;
  } else if (p.partition_region < 2) {
    throw PolicyError("partition region must be >= 2");
  } else {
    const double s2 = static_cast<double>(p.partition_region) * p.partition_region;
    if (s2 < lambda) {
      throw PolicyError("partition region " + std::to_string(p.partition_region) +
                        " leaves too few source tokens for rate " + std::to_string(p.rate));
    }
  }
  return p;
}

MergeMap MergeMap::identity(int64_t n) {
  MergeMap map;
  map.n_original = n;
  map.n_merged = n;
  map.dst_of.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) map.dst_of[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  map.size_of.assign(static_cast<size_t>(n), 1);
  map.in_group_a.assign(static_cast<size_t>(n), 1);
  return map;
}

void MergeMap::validate() const {
  if (static_cast<int64_t>(dst_of.size()) != n_original ||
      static_cast<int64_t>(in_group_a.size()) != n_original ||
      static_cast<int64_t>(size_of.size()) != n_merged) {
    throw ShapeError("merge map field lengths inconsistent");
  }
  std::vector<int32_t> counts(static_cast<size_t>(n_merged), 0);
  std::vector<int32_t> a_members(static_cast<size_t>(n_merged), 0);
  for (int64_t i = 0; i < n_original; ++i) {
    const int32_t j = dst_of[static_cast<size_t>(i)];
    if (j < 0 || j >= n_merged) throw ShapeError("merge map destination out of range");
    ++counts[static_cast<size_t>(j)];
    if (in_group_a[static_cast<size_t>(i)]) ++a_members[static_cast<size_t>(j)];
  }
  int64_t total = 0;
  for (int64_t j = 0; j < n_merged; ++j) {
    const int32_t c = counts[static_cast<size_t>(j)];
    if (c < 1) throw ShapeError("merged token with no members");
    if (c != size_of[static_cast<size_t>(j)]) throw ShapeError("merge map sizes inconsistent");
    if (a_members[static_cast<size_t>(j)] > 1) {
      throw ShapeError("two destination-group tokens share a slot");
    }
    if (c > 1 && a_members[static_cast<size_t>(j)] == 0) {
      throw ShapeError("merged group without a destination-group token");
    }
    total += c;
  }
  if (total != n_original) throw ShapeError("merge map sizes do not sum to token count");
}

std::vector<std::pair<int32_t, int32_t>> MergeMap::merged_pairs() const {
  // Owner of a slot: its unique group-A member if present, else its only
  // member. Every other member is a merged source.
  std::vector<int32_t> owner(static_cast<size_t>(n_merged), -1);
  for (int64_t i = 0; i < n_original; ++i) {
    const size_t j = static_cast<size_t>(dst_of[static_cast<size_t>(i)]);
    if (in_group_a[static_cast<size_t>(i)]) {
      owner[j] = static_cast<int32_t>(i);
    } else if (owner[j] < 0) {
      owner[j] = static_cast<int32_t>(i);
    }
  }
  std::vector<std::pair<int32_t, int32_t>> pairs;
  for (int64_t i = 0; i < n_original; ++i) {
    const size_t j = static_cast<size_t>(dst_of[static_cast<size_t>(i)]);
    if (owner[j] != static_cast<int32_t>(i)) {
      pairs.emplace_back(static_cast<int32_t>(i), owner[j]);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

namespace {

Tensor gather_rows(const Tensor& flat, const std::vector<int32_t>& idx) {
  const int64_t c = flat.dim(1);
  Tensor out({static_cast<int64_t>(idx.size()), c});
  for (size_t i = 0; i < idx.size(); ++i) {
    std::memcpy(out.data() + static_cast<int64_t>(i) * c, flat.data() + idx[i] * c,
                static_cast<size_t>(c) * sizeof(float));
  }
  return out;
}

void normalize_rows(Tensor& t) {
  const int64_t rows = t.dim(0), c = t.dim(1);
  for (int64_t i = 0; i < rows; ++i) {
    float* row = t.data() + i * c;
    const float norm = std::sqrt(dot(row, row, c));
    if (norm > 0.0f) {
      for (int64_t j = 0; j < c; ++j) row[j] /= norm;
    }
  }
}

// Shared core of bipartite_soft_matching and merge_by_quantity: scores every
// B token against every A token, picks the merge_count sources with the
// highest best-match scores (ties toward the lower source index, then the
// lower destination index), and builds the map with kept tokens in original
// order.
MergeMap match_groups(const Tensor& flat, const std::vector<int32_t>& a_idx,
                      const std::vector<int32_t>& b_idx, int64_t merge_count,
                      SimilarityKind similarity) {
  const int64_t n = flat.dim(0);
  std::vector<int32_t> target_of(static_cast<size_t>(n), -1);
  std::vector<uint8_t> merged_away(static_cast<size_t>(n), 0);

  if (merge_count > 0) {
    Tensor afeat = gather_rows(flat, a_idx);
    Tensor bfeat = gather_rows(flat, b_idx);
    if (similarity == SimilarityKind::kCosine) {
      normalize_rows(afeat);
      normalize_rows(bfeat);
    }
    Tensor scores = matmul_nt(bfeat, afeat);  // [|B| x |A|]
    struct Candidate {
      float score;
      int32_t src;   // original index
      int32_t dst;   // original index of the best destination
    };
    std::vector<Candidate> candidates(b_idx.size());
    const int64_t na = static_cast<int64_t>(a_idx.size());
    for (size_t bi = 0; bi < b_idx.size(); ++bi) {
      const float* row = scores.data() + static_cast<int64_t>(bi) * na;
      int64_t best = 0;
      for (int64_t ai = 1; ai < na; ++ai) {
        if (row[ai] > row[best]) best = ai;
      }
      candidates[bi] = {row[best], b_idx[bi], a_idx[static_cast<size_t>(best)]};
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      if (x.score != y.score) return x.score > y.score;
      return x.src < y.src;
    });
    for (int64_t i = 0; i < merge_count; ++i) {
      const Candidate& c = candidates[static_cast<size_t>(i)];
      merged_away[static_cast<size_t>(c.src)] = 1;
      target_of[static_cast<size_t>(c.src)] = c.dst;
    }
  }

  MergeMap map;
  map.n_original = n;
  map.dst_of.assign(static_cast<size_t>(n), -1);
  map.in_group_a.assign(static_cast<size_t>(n), 0);
  for (int32_t a : a_idx) map.in_group_a[static_cast<size_t>(a)] = 1;

  std::vector<int32_t> slot(static_cast<size_t>(n), -1);
  int32_t next_slot = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (!merged_away[static_cast<size_t>(i)]) slot[static_cast<size_t>(i)] = next_slot++;
  }
  map.n_merged = next_slot;
  map.size_of.assign(static_cast<size_t>(next_slot), 0);
  for (int64_t i = 0; i < n; ++i) {
    const int32_t dst = merged_away[static_cast<size_t>(i)]
                            ? slot[static_cast<size_t>(target_of[static_cast<size_t>(i)])]
                            : slot[static_cast<size_t>(i)];
    map.dst_of[static_cast<size_t>(i)] = dst;
    ++map.size_of[static_cast<size_t>(dst)];
  }
  return map;
}

}  // namespace

MergeMap bipartite_soft_matching(const TokenGrid& tokens, const MergePolicy& policy_in) {
  const MergePolicy policy = policy_in.resolved();
  const int64_t rows = tokens.rows(), cols = tokens.cols();
  const int64_t n = rows * cols;
  const int s = policy.partition_region;

  std::vector<int32_t> a_idx, b_idx;
  a_idx.reserve(static_cast<size_t>((rows / s + 1) * (cols / s + 1)));
  b_idx.reserve(static_cast<size_t>(n));
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      const int32_t idx = static_cast<int32_t>(r * cols + c);
      if (r % s == 0 && c % s == 0) {
        a_idx.push_back(idx);
      } else {
        b_idx.push_back(idx);
      }
    }
  }

  const int64_t merge_count = static_cast<int64_t>(std::floor(policy.rate * static_cast<double>(n)));
  if (merge_count > static_cast<int64_t>(b_idx.size())) {
    throw PolicyError("merge count " + std::to_string(merge_count) + " exceeds the " +
                      std::to_string(b_idx.size()) + " available source tokens");
  }
  return match_groups(tokens.flat(), a_idx, b_idx, merge_count, policy.similarity);
}

Tensor merge_tokens(const Tensor& tokens, const MergeMap& map) {
  if (tokens.ndim() != 2 || tokens.dim(0) != map.n_original) {
    throw ShapeError("merge: token count does not match map");
  }
  const int64_t c = tokens.dim(1);

  // Bucket members per destination (CSR layout), preserving original order.
  std::vector<int32_t> offsets(static_cast<size_t>(map.n_merged) + 1, 0);
  for (int64_t i = 0; i < map.n_original; ++i) {
    ++offsets[static_cast<size_t>(map.dst_of[static_cast<size_t>(i)]) + 1];
  }
  for (size_t j = 1; j < offsets.size(); ++j) offsets[j] += offsets[j - 1];
  std::vector<int32_t> members(static_cast<size_t>(map.n_original));
  {
    std::vector<int32_t> cursor(offsets.begin(), offsets.end() - 1);
    for (int64_t i = 0; i < map.n_original; ++i) {
      const size_t j = static_cast<size_t>(map.dst_of[static_cast<size_t>(i)]);
      members[static_cast<size_t>(cursor[j]++)] = static_cast<int32_t>(i);
    }
  }

  // Pairwise group sums, split at the largest power of two below the length.
  // This keeps the mean of k bitwise-identical rows within half an ulp before
  // the final division, so averaging already-averaged groups is exact and
  // merge-unmerge is an idempotent projection.
  std::vector<float> scratch;
  const std::function<void(const int32_t*, int64_t, float*)> sum_rows =
      [&](const int32_t* idx, int64_t len, float* out) {
        if (len == 1) {
          std::memcpy(out, tokens.data() + idx[0] * c, static_cast<size_t>(c) * sizeof(float));
          return;
        }
        int64_t left = 1;
        while (left * 2 < len) left *= 2;
        std::vector<float> rhs(static_cast<size_t>(c));
        sum_rows(idx, left, out);
        sum_rows(idx + left, len - left, rhs.data());
        for (int64_t ch = 0; ch < c; ++ch) out[ch] += rhs[static_cast<size_t>(ch)];
      };

  Tensor out({map.n_merged, c});
  for (int64_t j = 0; j < map.n_merged; ++j) {
    const int32_t begin = offsets[static_cast<size_t>(j)];
    const int64_t len = offsets[static_cast<size_t>(j) + 1] - begin;
    float* orow = out.data() + j * c;
    sum_rows(members.data() + begin, len, orow);
    if (len > 1) {
      const float denom = static_cast<float>(len);
      for (int64_t ch = 0; ch < c; ++ch) orow[ch] /= denom;
    }
  }
  return out;
}

Tensor unmerge_tokens(const Tensor& merged, const MergeMap& map) {
  if (merged.ndim() != 2 || merged.dim(0) != map.n_merged) {
    throw ShapeError("unmerge: merged token count does not match map");
  }
  const int64_t c = merged.dim(1);
  Tensor out({map.n_original, c});
  for (int64_t i = 0; i < map.n_original; ++i) {
    std::memcpy(out.data() + i * c,
                merged.data() + static_cast<int64_t>(map.dst_of[static_cast<size_t>(i)]) * c,
                static_cast<size_t>(c) * sizeof(float));
  }
  return out;
}

std::pair<Tensor, MergeMap> merge_by_quantity(const Tensor& tokens, int64_t quantity,
                                              SimilarityKind similarity) {
  if (tokens.ndim() != 2) throw ShapeError("merge_by_quantity expects [N x C] tokens");
  if (quantity < 0) throw ParameterError("reduction quantity must be >= 0");
  const int64_t n = tokens.dim(0);
  std::vector<int32_t> a_idx, b_idx;
  for (int64_t i = 0; i < n; ++i) {
    if (i % 2 == 0) {
      a_idx.push_back(static_cast<int32_t>(i));
    } else {
      b_idx.push_back(static_cast<int32_t>(i));
    }
  }
  if (quantity >= static_cast<int64_t>(b_idx.size())) {
    throw ParameterError("reduction quantity " + std::to_string(quantity) +
                         " must be smaller than the source group size " +
                         std::to_string(b_idx.size()));
  }
  MergeMap map = match_groups(tokens, a_idx, b_idx, quantity, similarity);
  Tensor merged = merge_tokens(tokens, map);
  return {std::move(merged), std::move(map)};
}

}  // namespace tokmerge
