#pragma once

#include <cstdint>
#include <vector>

#include "tokmerge/error.hpp"

namespace tokmerge {

// Dense row-major float32 tensor. Data is contiguous and owned; tensors are
// treated as immutable values once filled, so copies are safe to share across
// threads.
class Tensor {
 public:
  Tensor() = default;

  // Zero-initialized tensor of the given shape. Every dimension must be >= 1.
  explicit Tensor(std::vector<int64_t> shape);

  Tensor(std::vector<int64_t> shape, std::vector<float> data);

  static Tensor full(std::vector<int64_t> shape, float value);

  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
  float at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
  float& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  float at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  float& at(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  float at(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  // Same data, new shape; element count must match.
  Tensor reshape(std::vector<int64_t> new_shape) const&;
  Tensor reshape(std::vector<int64_t> new_shape) &&;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
};

// Process-global multiply-accumulate counter. matmul, matmul_nt, conv2d and
// depthwise_conv2d add their analytic MAC count once per call, so totals are
// exact regardless of the thread count. Monotone between resets.
uint64_t mac_count();
void reset_mac_count();
void add_macs(uint64_t n);

// Worker threads used by the row-parallel ops. Work is partitioned by output
// row with per-row arithmetic unchanged, so results are bitwise identical for
// every thread count. Default 1.
int num_threads();
void set_num_threads(int n);

}  // namespace tokmerge
