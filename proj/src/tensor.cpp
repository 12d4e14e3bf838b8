#include "tokmerge/tensor.hpp"

#include <atomic>
#include <string>

namespace tokmerge {

namespace {

int64_t checked_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 1) {
      throw ShapeError("tensor dimension must be >= 1, got " + std::to_string(d));
    }
    if (n > (int64_t{1} << 40) / d) {
      throw ShapeError("tensor too large");
    }
    n *= d;
  }
  return n;
}

std::atomic<uint64_t> g_macs{0};
std::atomic<int> g_threads{1};

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0f);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw ShapeError("tensor data length does not match shape");
  }
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
  Tensor t(std::move(shape));
  for (float& v : t.data_) v = value;
  return t;
}

Tensor Tensor::reshape(std::vector<int64_t> new_shape) const& {
  if (checked_numel(new_shape) != numel()) {
    throw ShapeError("reshape changes element count");
  }
  return Tensor(std::move(new_shape), data_);
}

Tensor Tensor::reshape(std::vector<int64_t> new_shape) && {
  if (checked_numel(new_shape) != numel()) {
    throw ShapeError("reshape changes element count");
  }
  return Tensor(std::move(new_shape), std::move(data_));
}

uint64_t mac_count() { return g_macs.load(std::memory_order_relaxed); }

void reset_mac_count() { g_macs.store(0, std::memory_order_relaxed); }

void add_macs(uint64_t n) { g_macs.fetch_add(n, std::memory_order_relaxed); }

int num_threads() { return g_threads.load(std::memory_order_relaxed); }

void set_num_threads(int n) {
  if (n < 1) throw ParameterError("thread count must be >= 1");
  g_threads.store(n, std::memory_order_relaxed);
}

}  // namespace tokmerge
