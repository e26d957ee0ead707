#ifndef SMARTPASTE_COLOR_HPP
#define SMARTPASTE_COLOR_HPP

#include <cmath>

#include "rng.hpp"
#include "tensor.hpp"

namespace smartpaste {

/// Hexcone RGB -> HSV. Hue is scaled to [0,1). Inputs are expected in [0,1].
inline void rgb_to_hsv_pixel(double r, double g, double b, double& h,
                             double& s, double& v) {
  double mx = std::max(r, std::max(g, b));
  double mn = std::min(r, std::min(g, b));
  double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = 2.0 + (b - r) / d;
  else
    h = 4.0 + (r - g) / d;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
  if (h >= 1.0) h -= 1.0;
}

inline void hsv_to_rgb_pixel(double h, double s, double v, double& r,
                             double& g, double& b) {
  h -= std::floor(h);  // wrap into [0,1)
  s = std::clamp(s, 0.0, 1.0);
  double hh = h * 6.0;
  int i = std::min(int(hh), 5);
  double f = hh - i;
  double p = v * (1.0 - s);
  double q = v * (1.0 - s * f);
  double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

inline Tensor rgb_to_hsv(const Tensor& img) {
  require(img.rank() == 3 && img.c() == 3, "rgb_to_hsv expects 3 channels");
  Tensor out(img.shape);
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x) {
      double h, s, v;
      rgb_to_hsv_pixel(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), h,
                       s, v);
      out.at(y, x, 0) = h;
      out.at(y, x, 1) = s;
      out.at(y, x, 2) = v;
    }
  return out;
}

inline Tensor hsv_to_rgb(const Tensor& img) {
  require(img.rank() == 3 && img.c() == 3, "hsv_to_rgb expects 3 channels");
  Tensor out(img.shape);
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x) {
      double r, g, b;
      hsv_to_rgb_pixel(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), r,
                       g, b);
      out.at(y, x, 0) = r;
      out.at(y, x, 1) = g;
      out.at(y, x, 2) = b;
    }
  return out;
}

/// Sampled parameters of one color transform application.
struct ColorParams {
  double k1 = 1.0;               // saturation scale
  double delta1 = 0.0;           // hue bias
  double lambda[3] = {1, 1, 1};  // per-channel contrast scales
  double delta2 = 0.0;           // brightness bias

  static ColorParams identity() { return {}; }
  static ColorParams sample(Rng& rng) {
    ColorParams p;
    p.k1 = rng.uniform(0.5, 1.5);
    p.delta1 = rng.uniform(-0.5, 0.5);
    for (double& l : p.lambda) l = rng.uniform(0.5, 1.5);
    p.delta2 = rng.uniform(-0.5, 0.5);
    return p;
  }
};

inline Tensor brightness_adjust(const Tensor& img, double delta2) {
  require(img.c() == 3, "brightness_adjust expects 3 channels");
  Tensor out = img;
  for (double& v : out.data) v += delta2;
  return out;
}

inline Tensor contrast_adjust(const Tensor& img, const double lambda[3]) {
  require(img.c() == 3, "contrast_adjust expects 3 channels");
  double m[3] = {0, 0, 0};
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x)
      for (int k = 0; k < 3; ++k) m[k] += img.at(y, x, k);
  double n = double(img.h()) * img.w();
  for (double& v : m) v /= n;
  Tensor out(img.shape);
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x)
      for (int k = 0; k < 3; ++k)
        out.at(y, x, k) = (img.at(y, x, k) - m[k]) * lambda[k] + m[k];
  return out;
}

inline Tensor hue_adjust(const Tensor& img, double delta1) {
  Tensor hsv = rgb_to_hsv(clamp01(img));
  for (int y = 0; y < hsv.h(); ++y)
    for (int x = 0; x < hsv.w(); ++x) {
      double h = hsv.at(y, x, 0) + delta1;
      hsv.at(y, x, 0) = h - std::floor(h);
    }
  return hsv_to_rgb(hsv);
}

inline Tensor saturation_adjust(const Tensor& img, double k1) {
  Tensor hsv = rgb_to_hsv(clamp01(img));
  for (int y = 0; y < hsv.h(); ++y)
    for (int x = 0; x < hsv.w(); ++x)
      hsv.at(y, x, 1) = std::min(hsv.at(y, x, 1) * k1, 1.0);
  return hsv_to_rgb(hsv);
}

/// Brightness, then contrast, then hue, then saturation (rightmost first in
/// T_s . T_h . T_c . T_b). Output is not clamped; the shading fuse clamps.
inline Tensor color_transform(const Tensor& img, const ColorParams& p) {
  Tensor t = brightness_adjust(img, p.delta2);
  t = contrast_adjust(t, p.lambda);
  t = hue_adjust(t, p.delta1);
  t = saturation_adjust(t, p.k1);
  return t;
}

constexpr int kMixingControlSize = 10;

/// Low-frequency mixing field: a 10x10 grid of fair-coin {0,1} control values
/// bilinearly upsampled to (h, w, 1).
inline Tensor make_mixing_mask_from_controls(const Tensor& controls, int h,
                                             int w) {
  require(controls.h() == kMixingControlSize &&
              controls.w() == kMixingControlSize && controls.c() == 1,
          "mixing controls must be 10x10x1");
  return bilinear_resize(controls, h, w);
}

inline Tensor sample_mixing_controls(Rng& rng) {
  Tensor controls({kMixingControlSize, kMixingControlSize, 1});
  for (double& v : controls.data) v = rng.next_double() < 0.5 ? 0.0 : 1.0;
  return controls;
}

inline Tensor make_mixing_mask(Rng& rng, int h, int w) {
  require(h >= kMixingControlSize && w >= kMixingControlSize,
          "mixing mask target must be at least 10x10");
  return make_mixing_mask_from_controls(sample_mixing_controls(rng), h, w);
}

enum class ShadingMode { kLocal, kGlobal };

/// Everything needed to replay one shading transform bit-exactly.
struct ShadingRecord {
  ColorParams params_a;
  ColorParams params_b;
  Tensor mixing_controls;  // 10x10x1, values in {0,1}
  ShadingMode mode = ShadingMode::kLocal;

  static ShadingRecord identity() {
    ShadingRecord r;
    r.mixing_controls = Tensor::full({kMixingControlSize, kMixingControlSize, 1}, 1.0);
    return r;
  }
  static ShadingRecord sample(Rng& rng, ShadingMode mode) {
    ShadingRecord r;
    r.mode = mode;
    r.params_a = ColorParams::sample(rng);
    if (mode == ShadingMode::kLocal) {
      r.params_b = ColorParams::sample(rng);
      r.mixing_controls = sample_mixing_controls(rng);
    } else {
      r.params_b = r.params_a;
      r.mixing_controls =
          Tensor::full({kMixingControlSize, kMixingControlSize, 1}, 1.0);
    }
    return r;
  }
};

/// I1*Mmix + I2*(1-Mmix), clamped to [0,1]. Global mode collapses to a single
/// color transform (params_b == params_a, constant mix).
inline Tensor shading_transform(const Tensor& img, const ShadingRecord& rec) {
  require(img.c() == 3, "shading_transform expects 3 channels");
  Tensor mix = make_mixing_mask_from_controls(rec.mixing_controls, img.h(),
                                              img.w());
  Tensor i1 = color_transform(img, rec.params_a);
  Tensor i2 = color_transform(img, rec.params_b);
  Tensor out(img.shape);
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x) {
      double m = mix.at(y, x, 0);
      for (int k = 0; k < 3; ++k) {
        double v = i1.at(y, x, k) * m + i2.at(y, x, k) * (1.0 - m);
        out.at(y, x, k) = std::clamp(v, 0.0, 1.0);
      }
    }
  return out;
}

}  // namespace smartpaste

#endif  // SMARTPASTE_COLOR_HPP
