#include "tokmerge/token_grid.hpp"

namespace tokmerge {

TokenGrid::TokenGrid(Tensor t) : data(std::move(t)) {
  if (data.ndim() != 3) throw ShapeError("TokenGrid tensor must be [rows x cols x channels]");
}

TokenGrid::TokenGrid(int64_t rows, int64_t cols, int64_t channels)
    : data(Tensor({rows, cols, channels})) {}

Tensor TokenGrid::flat() const { return data.reshape({token_count(), channels()}); }

TokenGrid TokenGrid::from_flat(Tensor flat, int64_t rows, int64_t cols) {
  if (flat.ndim() != 2 || flat.dim(0) != rows * cols) {
    throw ShapeError("from_flat: token count does not match rows*cols");
  }
  const int64_t channels = flat.dim(1);
  return TokenGrid(std::move(flat).reshape({rows, cols, channels}));
}

}  // namespace tokmerge
