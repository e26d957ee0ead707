#ifndef SMARTPASTE_MASK_HPP
#define SMARTPASTE_MASK_HPP

#include <cmath>

#include "rng.hpp"
#include "tensor.hpp"

namespace smartpaste {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A rotated rectangle: center, half extents, rotation. Rendered as a binary
/// {0,1} mask by a point-in-rotated-rect test at pixel centers.
struct MaskSpec {
  double cx = 0.0, cy = 0.0;         // center, pixels
  double half_w = 0.0, half_h = 0.0; // half extents, pixels
  double rotation = 0.0;             // radians
};

struct MaskConfig {
  double area_min = 0.02, area_max = 0.30;  // fraction of canvas
  double aspect_min = 0.5, aspect_max = 2.0;
  double rot_min = 0.0, rot_max = M_PI;

  void validate() const {
    if (!(area_min > 0.0 && area_max <= 1.0 && area_min <= area_max))
      throw ConfigError("mask area fraction range must be within (0,1]");
    if (!(aspect_min > 0.0 && aspect_min <= aspect_max))
      throw ConfigError("mask aspect range is empty");
    if (!(rot_min <= rot_max)) throw ConfigError("mask rotation range is empty");
  }
};

inline Tensor render_mask(const MaskSpec& spec, int h, int w) {
  Tensor mask({h, w, 1});
  double c = std::cos(spec.rotation), s = std::sin(spec.rotation);
  int area = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // pixel center in rect-local coordinates
      double dx = (x + 0.5) - spec.cx;
      double dy = (y + 0.5) - spec.cy;
      double u = c * dx + s * dy;
      double v = -s * dx + c * dy;
      bool inside = std::abs(u) <= spec.half_w && std::abs(v) <= spec.half_h;
      mask.at(y, x, 0) = inside ? 1.0 : 0.0;
      area += inside;
    }
  if (area < 1) throw ConfigError("rendered mask is empty");
  return mask;
}

/// Draws a MaskSpec whose rotated bounding box fits the canvas when possible,
/// so the rendered area stays within the configured fraction range.
inline MaskSpec sample_mask_spec(Rng& rng, int h, int w,
                                 const MaskConfig& cfg) {
  cfg.validate();
  double canvas = double(h) * double(w);
  double frac = rng.uniform(cfg.area_min, cfg.area_max);
  double aspect = rng.uniform(cfg.aspect_min, cfg.aspect_max);
  double rot = rng.uniform(cfg.rot_min, cfg.rot_max);
  double area = frac * canvas;
  double half_w = 0.5 * std::sqrt(area * aspect);
  double half_h = 0.5 * std::sqrt(area / aspect);
  double c = std::abs(std::cos(rot)), s = std::abs(std::sin(rot));
  double bb_w = half_w * c + half_h * s;  // rotated bbox half extents
  double bb_h = half_w * s + half_h * c;
  MaskSpec spec;
  spec.half_w = half_w;
  spec.half_h = half_h;
  spec.rotation = rot;
  // keep the whole rect on canvas when it fits, otherwise center it
  spec.cx = 2 * bb_w < w ? rng.uniform(bb_w, w - bb_w) : w / 2.0;
  spec.cy = 2 * bb_h < h ? rng.uniform(bb_h, h - bb_h) : h / 2.0;
  return spec;
}

inline Tensor sample_mask(Rng& rng, int h, int w, const MaskConfig& cfg) {
  return render_mask(sample_mask_spec(rng, h, w, cfg), h, w);
}

}  // namespace smartpaste

#endif  // SMARTPASTE_MASK_HPP
