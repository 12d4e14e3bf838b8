#include "tokmerge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

namespace tokmerge {

namespace {

// Partitions [0, n) into contiguous chunks, one per worker. Per-row
// arithmetic is unaffected, so results match the single-threaded run bitwise.
template <typename F>
void parallel_rows(int64_t n, F&& fn) {
  int t = num_threads();
  if (t <= 1 || n < 2) {
    fn(int64_t{0}, n);
    return;
  }
  t = static_cast<int>(std::min<int64_t>(t, n));
  const int64_t chunk = (n + t - 1) / t;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) {
    const int64_t begin = i * chunk;
    const int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& w : workers) w.join();
}

void require(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

float dot(const float* a, const float* b, int64_t n) {
  float acc0 = 0.0f, acc1 = 0.0f, acc2 = 0.0f, acc3 = 0.0f;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc0 + acc1) + (acc2 + acc3)) + tail;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul expects 2D tensors");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions disagree: " + std::to_string(a.dim(1)) + " vs " +
                     std::to_string(b.dim(0)));
  }
  const int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor out({m, p});
  const float* ad = a.data();
  const float* bd = b.data();
  float* od = out.data();
  parallel_rows(m, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      float* orow = od + i * p;
      const float* arow = ad + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const float av = arow[kk];
        const float* brow = bd + kk * p;
        for (int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
      }
    }
  });
  add_macs(static_cast<uint64_t>(m) * static_cast<uint64_t>(k) * static_cast<uint64_t>(p));
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul_nt expects 2D tensors");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt inner dimensions disagree: " + std::to_string(a.dim(1)) + " vs " +
                     std::to_string(b.dim(1)));
  }
  const int64_t m = a.dim(0), k = a.dim(1), p = b.dim(0);
  Tensor out({m, p});
  const float* ad = a.data();
  const float* bd = b.data();
  float* od = out.data();
  parallel_rows(m, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const float* arow = ad + i * k;
      float* orow = od + i * p;
      for (int64_t j = 0; j < p; ++j) orow[j] = dot(arow, bd + j * k, k);
    }
  });
  add_macs(static_cast<uint64_t>(m) * static_cast<uint64_t>(k) * static_cast<uint64_t>(p));
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require(x.ndim() == 2, "softmax_rows expects a 2D tensor");
  const int64_t m = x.dim(0), p = x.dim(1);
  Tensor out({m, p});
  const float* xd = x.data();
  float* od = out.data();
  parallel_rows(m, [&](int64_t r0, int64_t r1) {
    std::vector<double> e(static_cast<size_t>(p));
    for (int64_t i = r0; i < r1; ++i) {
      const float* row = xd + i * p;
      float mx = row[0];
      for (int64_t j = 1; j < p; ++j) {
        if (row[j] > mx) mx = row[j];
      }
      double sum = 0.0;
      for (int64_t j = 0; j < p; ++j) {
        e[static_cast<size_t>(j)] = std::exp(static_cast<double>(row[j]) - static_cast<double>(mx));
        sum += e[static_cast<size_t>(j)];
      }
      float* orow = od + i * p;
      for (int64_t j = 0; j < p; ++j) {
        orow[j] = static_cast<float>(e[static_cast<size_t>(j)] / sum);
      }
    }
  });
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias, int stride,
              int padding) {
  require(x.ndim() == 3, "conv2d input must be [H x W x C]");
  require(weights.ndim() == 4, "conv2d weights must be [k x k x Cin x Cout]");
  if (stride < 1) throw ParameterError("conv2d stride must be >= 1");
  if (padding < 0) throw ParameterError("conv2d padding must be >= 0");
  const int64_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const int64_t k = weights.dim(0);
  if (weights.dim(1) != k) throw ShapeError("conv2d kernel must be square");
  if (weights.dim(2) != cin) {
    throw ShapeError("conv2d weight input channels disagree with input");
  }
  const int64_t cout = weights.dim(3);
  require(bias.ndim() == 1 && bias.dim(0) == cout, "conv2d bias must be [Cout]");
  const int64_t oh = (h + 2 * padding - k) / stride + 1;
  const int64_t ow = (w + 2 * padding - k) / stride + 1;
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw ShapeError("conv2d kernel larger than padded input");
  }
  Tensor out({oh, ow, cout});
  const float* xd = x.data();
  const float* wd = weights.data();
  const float* bd = bias.data();
  float* od = out.data();
  parallel_rows(oh, [&](int64_t r0, int64_t r1) {
    for (int64_t oy = r0; oy < r1; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        float* opix = od + (oy * ow + ox) * cout;
        for (int64_t co = 0; co < cout; ++co) opix[co] = bd[co];
        for (int64_t ky = 0; ky < k; ++ky) {
          const int64_t iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int64_t kx = 0; kx < k; ++kx) {
            const int64_t ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            const float* xpix = xd + (iy * w + ix) * cin;
            const float* wrow = wd + ((ky * k + kx) * cin) * cout;
            for (int64_t ci = 0; ci < cin; ++ci) {
              const float xv = xpix[ci];
              const float* wv = wrow + ci * cout;
              for (int64_t co = 0; co < cout; ++co) opix[co] += xv * wv[co];
            }
          }
        }
      }
    }
  });
  add_macs(static_cast<uint64_t>(oh * ow) * static_cast<uint64_t>(cout) *
           static_cast<uint64_t>(k * k) * static_cast<uint64_t>(cin));
  return out;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias, int stride,
                        int padding) {
  require(x.ndim() == 3, "depthwise_conv2d input must be [H x W x C]");
  require(weights.ndim() == 3, "depthwise_conv2d weights must be [k x k x C]");
  if (stride < 1) throw ParameterError("depthwise_conv2d stride must be >= 1");
  if (padding < 0) throw ParameterError("depthwise_conv2d padding must be >= 0");
  const int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const int64_t k = weights.dim(0);
  if (weights.dim(1) != k) throw ShapeError("depthwise_conv2d kernel must be square");
  if (weights.dim(2) != c) throw ShapeError("depthwise_conv2d channels disagree with input");
  require(bias.ndim() == 1 && bias.dim(0) == c, "depthwise_conv2d bias must be [C]");
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw ShapeError("depthwise_conv2d kernel larger than padded input");
  }
  const int64_t oh = (h + 2 * padding - k) / stride + 1;
  const int64_t ow = (w + 2 * padding - k) / stride + 1;
  Tensor out({oh, ow, c});
  const float* xd = x.data();
  const float* wd = weights.data();
  const float* bd = bias.data();
  float* od = out.data();
  parallel_rows(oh, [&](int64_t r0, int64_t r1) {
    for (int64_t oy = r0; oy < r1; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        float* opix = od + (oy * ow + ox) * c;
        for (int64_t ch = 0; ch < c; ++ch) opix[ch] = bd[ch];
        for (int64_t ky = 0; ky < k; ++ky) {
          const int64_t iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int64_t kx = 0; kx < k; ++kx) {
            const int64_t ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            const float* xpix = xd + (iy * w + ix) * c;
            const float* wv = wd + (ky * k + kx) * c;
            for (int64_t ch = 0; ch < c; ++ch) opix[ch] += xpix[ch] * wv[ch];
          }
        }
      }
    }
  });
  add_macs(static_cast<uint64_t>(oh * ow) * static_cast<uint64_t>(c) *
           static_cast<uint64_t>(k * k));
  return out;
}

Tensor avgpool2d(const Tensor& x) {
  require(x.ndim() == 3, "avgpool2d input must be [H x W x C]");
  const int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ParameterError("avgpool2d requires even height and width, got " + std::to_string(h) +
                         "x" + std::to_string(w));
  }
  const int64_t oh = h / 2, ow = w / 2;
  Tensor out({oh, ow, c});
  const float* xd = x.data();
  float* od = out.data();
  for (int64_t oy = 0; oy < oh; ++oy) {
    for (int64_t ox = 0; ox < ow; ++ox) {
      const float* p00 = xd + ((2 * oy) * w + 2 * ox) * c;
      const float* p01 = p00 + c;
      const float* p10 = xd + ((2 * oy + 1) * w + 2 * ox) * c;
      const float* p11 = p10 + c;
      float* opix = od + (oy * ow + ox) * c;
      for (int64_t ch = 0; ch < c; ++ch) {
        opix[ch] = ((p00[ch] + p01[ch]) + (p10[ch] + p11[ch])) * 0.25f;
      }
    }
  }
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  if (!(eps > 0.0f)) throw ParameterError("layernorm eps must be > 0");
  require(x.ndim() >= 1, "layernorm input must have at least one dimension");
  const int64_t l = x.dim(x.ndim() - 1);
  require(gamma.ndim() == 1 && gamma.dim(0) == l, "layernorm gamma length must match last dim");
  require(beta.ndim() == 1 && beta.dim(0) == l, "layernorm beta length must match last dim");
  const int64_t rows = x.numel() / l;
  Tensor out(x.shape());
  const float* xd = x.data();
  const float* gd = gamma.data();
  const float* bd = beta.data();
  float* od = out.data();
  parallel_rows(rows, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const float* row = xd + i * l;
      double mean = 0.0;
      for (int64_t j = 0; j < l; ++j) mean += row[j];
      mean /= static_cast<double>(l);
      double var = 0.0;
      for (int64_t j = 0; j < l; ++j) {
        const double d = static_cast<double>(row[j]) - mean;
        var += d * d;
      }
      var /= static_cast<double>(l);
      const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
      float* orow = od + i * l;
      for (int64_t j = 0; j < l; ++j) {
        const double z = (static_cast<double>(row[j]) - mean) * inv;
        orow[j] = static_cast<float>(z * static_cast<double>(gd[j]) + static_cast<double>(bd[j]));
      }
    }
  });
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  const float* xd = x.data();
  float* od = out.data();
  const double inv_sqrt2 = 0.7071067811865475244;
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double z = static_cast<double>(xd[i]);
    od[i] = static_cast<float>(0.5 * z * (1.0 + std::erf(z * inv_sqrt2)));
  }
  return out;
}

Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
  require(x.ndim() == 3, "bilinear_resize input must be [H x W x C]");
  if (out_h < 1 || out_w < 1) throw ParameterError("bilinear_resize output dims must be >= 1");
  const int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out({out_h, out_w, c});
  const float* xd = x.data();
  float* od = out.data();
  const double sy_scale = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx_scale = static_cast<double>(w) / static_cast<double>(out_w);
  for (int64_t oy = 0; oy < out_h; ++oy) {
    double sy = (static_cast<double>(oy) + 0.5) * sy_scale - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const int64_t y0 = static_cast<int64_t>(sy);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const float fy = static_cast<float>(sy - static_cast<double>(y0));
    for (int64_t ox = 0; ox < out_w; ++ox) {
      double sx = (static_cast<double>(ox) + 0.5) * sx_scale - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const int64_t x0 = static_cast<int64_t>(sx);
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const float fx = static_cast<float>(sx - static_cast<double>(x0));
      const float* p00 = xd + (y0 * w + x0) * c;
      const float* p01 = xd + (y0 * w + x1) * c;
      const float* p10 = xd + (y1 * w + x0) * c;
      const float* p11 = xd + (y1 * w + x1) * c;
      float* opix = od + (oy * out_w + ox) * c;
      for (int64_t ch = 0; ch < c; ++ch) {
        // Lerp form: constant fields survive bitwise.
        const float top = p00[ch] + fx * (p01[ch] - p00[ch]);
        const float bot = p10[ch] + fx * (p11[ch] - p10[ch]);
        opix[ch] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

void add_inplace(Tensor& out, const Tensor& x) {
  if (!out.same_shape(x)) throw ShapeError("add_inplace shapes disagree");
  float* od = out.data();
  const float* xd = x.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) od[i] += xd[i];
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out = matmul(x, w);
  const int64_t rows = out.dim(0), cols = out.dim(1);
  require(b.ndim() == 1 && b.dim(0) == cols, "linear bias length must match output dim");
  float* od = out.data();
  const float* bd = b.data();
  for (int64_t i = 0; i < rows; ++i) {
    float* orow = od + i * cols;
    for (int64_t j = 0; j < cols; ++j) orow[j] += bd[j];
  }
  return out;
}

}  // namespace tokmerge
