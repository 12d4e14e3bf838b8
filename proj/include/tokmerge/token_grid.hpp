#pragma once

#include "tokmerge/tensor.hpp"

namespace tokmerge {

// A token sequence with an explicit 2D layout: data has shape
// [rows x cols x channels], flattened row-major to rows*cols tokens.
struct TokenGrid {
  Tensor data;

  TokenGrid() = default;
  explicit TokenGrid(Tensor t);
  TokenGrid(int64_t rows, int64_t cols, int64_t channels);

  int64_t rows() const { return data.dim(0); }
  int64_t cols() const { return data.dim(1); }
  int64_t channels() const { return data.dim(2); }
  int64_t token_count() const { return rows() * cols(); }

  // [N x C] view of the same values (copy; layout is already contiguous).
  Tensor flat() const;

  // Reassemble a grid from a flat [rows*cols x C] token matrix.
  static TokenGrid from_flat(Tensor flat, int64_t rows, int64_t cols);
};

}  // namespace tokmerge
