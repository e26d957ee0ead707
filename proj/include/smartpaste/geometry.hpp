#ifndef SMARTPASTE_GEOMETRY_HPP
#define SMARTPASTE_GEOMETRY_HPP

#include <array>
#include <cmath>
#include <stdexcept>

#include "rng.hpp"
#include "tensor.hpp"

namespace smartpaste {

struct DegenerateGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// 3x3 projective transform, normalized so h[2][2] == 1.
struct Homography {
  double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  static Homography identity() { return {}; }

  Homography inverse() const {
    const auto& a = m;
    double det =
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
        a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
        a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if (std::abs(det) < 1e-14)
      throw DegenerateGeometryError("homography is singular");
    double inv[3][3] = {
        {(a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det,
         (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det,
         (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det},
        {(a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det,
         (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det,
         (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det},
        {(a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det,
         (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det,
         (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det}};
    Homography out;
    double s = inv[2][2];
    if (std::abs(s) < 1e-14)
      throw DegenerateGeometryError("inverse homography not normalizable");
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out.m[i][j] = inv[i][j] / s;
    return out;
  }
};

inline Point project(const Homography& h, Point p) {
  double d = h.m[2][0] * p.x + h.m[2][1] * p.y + h.m[2][2];
  if (std::abs(d) < 1e-12)
    throw DegenerateGeometryError("projective denominator vanishes");
  return {(h.m[0][0] * p.x + h.m[0][1] * p.y + h.m[0][2]) / d,
          (h.m[1][0] * p.x + h.m[1][1] * p.y + h.m[1][2]) / d};
}

namespace detail {

/// Gaussian elimination with partial pivoting on an n x n system.
template <int N>
inline void solve_linear(double a[N][N], double b[N], double x[N]) {
  int perm[N];
  for (int i = 0; i < N; ++i) perm[i] = i;
  for (int col = 0; col < N; ++col) {
    int piv = col;
    for (int r = col + 1; r < N; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-12)
      throw DegenerateGeometryError("singular correspondence system");
    if (piv != col) {
      for (int k = 0; k < N; ++k) std::swap(a[col][k], a[piv][k]);
      std::swap(b[col], b[piv]);
    }
    for (int r = col + 1; r < N; ++r) {
      double f = a[r][col] / a[col][col];
      for (int k = col; k < N; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  for (int r = N - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < N; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
}

}  // namespace detail

/// Least-squares homography from 4 correspondences, direct linear transform
/// with h33 fixed to 1. For 4 generic correspondences the 8x8 system is
/// square, so the fit is exact up to floating point.
inline Homography solve_homography(const std::array<Point, 4>& src,
                                   const std::array<Point, 4>& dst) {
  double a[8][8] = {};
  double b[8] = {};
  for (int i = 0; i < 4; ++i) {
    double sx = src[i].x, sy = src[i].y;
    double dx = dst[i].x, dy = dst[i].y;
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = sx; r0[1] = sy; r0[2] = 1;
    r0[6] = -sx * dx; r0[7] = -sy * dx;
    r1[3] = sx; r1[4] = sy; r1[5] = 1;
    r1[6] = -sx * dy; r1[7] = -sy * dy;
    b[2 * i] = dx;
    b[2 * i + 1] = dy;
  }
  double x[8];
  detail::solve_linear<8>(a, b, x);
  Homography h;
  h.m[0][0] = x[0]; h.m[0][1] = x[1]; h.m[0][2] = x[2];
  h.m[1][0] = x[3]; h.m[1][1] = x[4]; h.m[1][2] = x[5];
  h.m[2][0] = x[6]; h.m[2][1] = x[7]; h.m[2][2] = 1.0;
  return h;
}

/// Bilinear sample with clamp-to-edge; pixel centers at integer coordinates.
inline double sample_bilinear(const Tensor& img, double x, double y, int ch) {
  const int w = img.w(), h = img.h();
  x = std::clamp(x, 0.0, double(w - 1));
  y = std::clamp(y, 0.0, double(h - 1));
  int x0 = std::min(int(x), w - 1);
  int y0 = std::min(int(y), h - 1);
  int x1 = std::min(x0 + 1, w - 1);
  int y1 = std::min(y0 + 1, h - 1);
  double fx = x - x0, fy = y - y0;
  double v00 = img.at(y0, x0, ch), v01 = img.at(y0, x1, ch);
  double v10 = img.at(y1, x0, ch), v11 = img.at(y1, x1, ch);
  return (1 - fy) * ((1 - fx) * v00 + fx * v01) +
         fy * ((1 - fx) * v10 + fx * v11);
}

/// Inverse warp: out(x,y) samples img at H^-1 (x,y). Output size equals
/// input size; out-of-bounds lookups clamp to the edge.
inline Tensor warp_image(const Tensor& img, const Homography& h) {
  Homography inv = h.inverse();
  Tensor out(img.shape);
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x) {
      Point p = project(inv, {double(x), double(y)});
      for (int k = 0; k < img.c(); ++k)
        out.at(y, x, k) = sample_bilinear(img, p.x, p.y, k);
    }
  return out;
}

/// Per-corner offsets drawn from U(-sigma, sigma).
struct CornerJitter {
  std::array<Point, 4> offsets;
  double sigma = 0.0;

  static CornerJitter sample(Rng& rng, double sigma) {
    CornerJitter j;
    j.sigma = sigma;
    for (auto& o : j.offsets) {
      o.x = rng.uniform(-sigma, sigma);
      o.y = rng.uniform(-sigma, sigma);
    }
    return j;
  }
};

inline std::array<Point, 4> image_corners(int h, int w) {
  return {{{0, 0},
           {double(w - 1), 0},
           {double(w - 1), double(h - 1)},
           {0, double(h - 1)}}};
}

/// Random-homography corruption: jitter the four corners by U(-sigma, sigma),
/// fit H, and inverse-warp. Returns the warped image and H for replay.
inline std::pair<Tensor, Homography> geometric_transform(const Tensor& img,
                                                         double sigma,
                                                         Rng& rng) {
  require(sigma >= 0.0, "sigma must be non-negative");
  CornerJitter jitter = CornerJitter::sample(rng, sigma);
  if (sigma == 0.0) return {img, Homography::identity()};
  auto src = image_corners(img.h(), img.w());
  std::array<Point, 4> dst;
  for (int i = 0; i < 4; ++i)
    dst[i] = {src[i].x + jitter.offsets[i].x, src[i].y + jitter.offsets[i].y};
  Homography h = solve_homography(src, dst);
  return {warp_image(img, h), h};
}

}  // namespace smartpaste

#endif  // SMARTPASTE_GEOMETRY_HPP
