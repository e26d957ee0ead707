#ifndef SMARTPASTE_TENSOR_HPP
#define SMARTPASTE_TENSOR_HPP

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace smartpaste {

/// Dense row-major tensor of doubles. Images are rank-3 (height, width,
/// channels) with the channel index fastest. Convolution kernels are rank-4
/// (kh, kw, cin, cout), dense weights rank-2 (out, in).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != static_cast<size_t>(count(shape)))
      throw std::invalid_argument("tensor data/shape mismatch");
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 1) throw std::invalid_argument("tensor dims must be >= 1");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return full({1, 1, 1}, v); }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  // rank-3 image accessors
  int h() const { return shape[0]; }
  int w() const { return shape[1]; }
  int c() const { return shape[2]; }
  double& at(int y, int x, int ch) {
    return data[(static_cast<size_t>(y) * shape[1] + x) * shape[2] + ch];
  }
  const double& at(int y, int x, int ch) const {
    return data[(static_cast<size_t>(y) * shape[1] + x) * shape[2] + ch];
  }

  // rank-4 kernel accessor (kh, kw, cin, cout)
  double& at4(int a, int b, int c4, int d) {
    return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c4) *
                    shape[3] +
                d];
  }
  const double& at4(int a, int b, int c4, int d) const {
    return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c4) *
                    shape[3] +
                d];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  double min() const { return *std::min_element(data.begin(), data.end()); }
  double max() const { return *std::max_element(data.begin(), data.end()); }
  double sum() const { return std::accumulate(data.begin(), data.end(), 0.0); }
  double mean() const { return sum() / static_cast<double>(size()); }
};

using ImageTensor = Tensor;

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Bilinear resize with align-corners mapping; control points land exactly on
/// source samples when sizes line up.
inline Tensor bilinear_resize(const Tensor& src, int oh, int ow) {
  require(src.rank() == 3, "bilinear_resize expects a rank-3 image");
  require(oh >= 1 && ow >= 1, "bilinear_resize target must be >= 1");
  const int ih = src.h(), iw = src.w(), ch = src.c();
  Tensor out({oh, ow, ch});
  const double sy = oh > 1 ? double(ih - 1) / double(oh - 1) : 0.0;
  const double sx = ow > 1 ? double(iw - 1) / double(ow - 1) : 0.0;
  for (int y = 0; y < oh; ++y) {
    double fy = y * sy;
    int y0 = std::min(int(fy), ih - 1);
    int y1 = std::min(y0 + 1, ih - 1);
    double wy = fy - y0;
    for (int x = 0; x < ow; ++x) {
      double fx = x * sx;
      int x0 = std::min(int(fx), iw - 1);
      int x1 = std::min(x0 + 1, iw - 1);
      double wx = fx - x0;
      for (int k = 0; k < ch; ++k) {
        double v00 = src.at(y0, x0, k), v01 = src.at(y0, x1, k);
        double v10 = src.at(y1, x0, k), v11 = src.at(y1, x1, k);
        out.at(y, x, k) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                          wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  }
  return out;
}

inline Tensor clamp01(Tensor t) {
  for (double& v : t.data) v = std::clamp(v, 0.0, 1.0);
  return t;
}

}  // namespace smartpaste

#endif  // SMARTPASTE_TENSOR_HPP
