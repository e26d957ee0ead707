#ifndef SMARTPASTE_FORGE_HPP
#define SMARTPASTE_FORGE_HPP

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "color.hpp"
#include "geometry.hpp"
#include "mask.hpp"
#include "png_io.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace smartpaste {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Lazily decodable list of corpus images with deterministic (lexicographic)
/// ordering. Undecodable files are skipped with a warning on load.
class Corpus {
 public:
  /// target_height, when set, rescales each image on decode so its height
  /// equals target_height (width scaled proportionally).
  static Corpus load(const std::string& directory,
                     std::optional<int> target_height = std::nullopt) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(directory))
      throw DataError("corpus directory not found: " + directory);
    Corpus c;
    c.target_height_ = target_height;
    for (const auto& e : fs::directory_iterator(directory))
      if (e.is_regular_file()) c.paths_.push_back(e.path().string());
    std::sort(c.paths_.begin(), c.paths_.end());
    // verify at least one file decodes; drop the ones that do not
    std::vector<std::string> good;
    for (const auto& p : c.paths_) {
      try {
        read_png(p);
        good.push_back(p);
      } catch (const ImageIoError&) {
        std::cerr << "warning: skipping undecodable file " << p << "\n";
      }
    }
    c.paths_ = std::move(good);
    if (c.paths_.empty())
      throw DataError("no decodable images in " + directory);
    return c;
  }

  size_t size() const { return paths_.size(); }
  const std::string& path(size_t i) const { return paths_.at(i); }

  /// Decodes image i as 3-channel RGB in [0,1] (gray replicated, alpha
  /// dropped), resized on ingest when configured.
  Tensor image(size_t i) const {
    Tensor img = read_png(paths_.at(i));
    Tensor rgb({img.h(), img.w(), 3});
    for (int y = 0; y < img.h(); ++y)
      for (int x = 0; x < img.w(); ++x)
        for (int c = 0; c < 3; ++c)
          rgb.at(y, x, c) = img.at(y, x, std::min(c, img.c() - 1));
    if (target_height_ && *target_height_ != rgb.h()) {
      int th = *target_height_;
      int tw = std::max(1, int(std::lround(double(rgb.w()) * th / rgb.h())));
      rgb = bilinear_resize(rgb, th, tw);
    }
    return rgb;
  }

 private:
  std::vector<std::string> paths_;
  std::optional<int> target_height_;
};

inline Tensor random_crop(const Tensor& img, int size, Rng& rng) {
  if (img.h() < size || img.w() < size)
    throw DataError("image smaller than crop size");
  int oy = rng.uniform_int(0, img.h() - size);
  int ox = rng.uniform_int(0, img.w() - size);
  Tensor out({size, size, img.c()});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < img.c(); ++c)
        out.at(y, x, c) = img.at(oy + y, ox + x, c);
  return out;
}

/// All sampled parameters of one application of the corruption T, enough to
/// replay T(I) bit-exactly from the same I.
struct TransformRecord {
  ShadingRecord shading;
  Homography homography;
  double sigma = 0.0;
  bool identity_shading = false;

  nlohmann::json to_json() const {
    auto color_json = [](const ColorParams& p) {
      return nlohmann::json{{"k1", p.k1},
                            {"delta1", p.delta1},
                            {"lambda", {p.lambda[0], p.lambda[1], p.lambda[2]}},
                            {"delta2", p.delta2}};
    };
    nlohmann::json j;
    j["sigma"] = sigma;
    j["identity_shading"] = identity_shading;
    j["shading_mode"] =
        shading.mode == ShadingMode::kLocal ? "local" : "global";
    j["color_a"] = color_json(shading.params_a);
    j["color_b"] = color_json(shading.params_b);
    j["mixing_controls"] = shading.mixing_controls.data;
    std::vector<double> hflat;
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) hflat.push_back(homography.m[i][k]);
    j["homography"] = hflat;
    return j;
  }

  static TransformRecord from_json(const nlohmann::json& j) {
    auto color_from = [](const nlohmann::json& cj) {
      ColorParams p;
      p.k1 = cj.at("k1");
      p.delta1 = cj.at("delta1");
      for (int i = 0; i < 3; ++i) p.lambda[i] = cj.at("lambda").at(i);
      p.delta2 = cj.at("delta2");
      return p;
    };
    TransformRecord r;
    r.sigma = j.at("sigma");
    r.identity_shading = j.value("identity_shading", false);
    r.shading.mode =
        j.at("shading_mode") == "local" ? ShadingMode::kLocal : ShadingMode::kGlobal;
    r.shading.params_a = color_from(j.at("color_a"));
    r.shading.params_b = color_from(j.at("color_b"));
    std::vector<double> mix = j.at("mixing_controls");
    r.shading.mixing_controls =
        Tensor({kMixingControlSize, kMixingControlSize, 1}, std::move(mix));
    std::vector<double> hflat = j.at("homography");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) r.homography.m[i][k] = hflat[i * 3 + k];
    return r;
  }
};

struct ForgeConfig {
  int crop_size = 64;
  double sigma = 15.0;
  ShadingMode shading_mode = ShadingMode::kLocal;
  bool identity_shading = false;  // ablation/debug: skip the shading transform
  bool fixed_mask = false;        // centered axis-aligned rect, 25% area
  MaskConfig mask;
};

/// T = T_shading . T_geometric (geometric applied first). The record replays
/// the exact output on the same input.
inline std::pair<Tensor, TransformRecord> apply_full_transform(
    const Tensor& img, const ForgeConfig& cfg, Rng& rng) {
  require(img.c() == 3, "apply_full_transform expects 3 channels");
  TransformRecord rec;
  rec.sigma = cfg.sigma;
  auto [warped, h] = geometric_transform(img, cfg.sigma, rng);
  rec.homography = h;
  if (cfg.identity_shading) {
    rec.identity_shading = true;
    rec.shading = ShadingRecord::identity();
    rec.shading.mode = cfg.shading_mode;
    return {clamp01(warped), rec};
  }
  rec.shading = ShadingRecord::sample(rng, cfg.shading_mode);
  return {shading_transform(warped, rec.shading), rec};
}

inline Tensor replay_transform(const Tensor& img, const TransformRecord& rec) {
  Tensor warped = rec.sigma == 0.0 ? img : warp_image(img, rec.homography);
  if (rec.identity_shading) return clamp01(warped);
  return shading_transform(warped, rec.shading);
}

/// Ground truth I, 4-channel input X = (I(1-M) + T(I)M, M), the mask, and the
/// transform record.
struct TrainingSample {
  Tensor ground_truth;  // (s, s, 3)
  Tensor input;         // (s, s, 4)
  Tensor mask;          // (s, s, 1), values in {0,1}
  TransformRecord transform;
};

/// Assembles X by per-pixel selection so context pixels are bit-identical to
/// the ground truth.
inline Tensor assemble_input(const Tensor& gt, const Tensor& transformed,
                             const Tensor& mask) {
  Tensor x({gt.h(), gt.w(), 4});
  for (int y = 0; y < gt.h(); ++y)
    for (int xx = 0; xx < gt.w(); ++xx) {
      bool inside = mask.at(y, xx, 0) != 0.0;
      for (int c = 0; c < 3; ++c)
        x.at(y, xx, c) = inside ? transformed.at(y, xx, c) : gt.at(y, xx, c);
      x.at(y, xx, 3) = inside ? 1.0 : 0.0;
    }
  return x;
}

inline TrainingSample forge_sample(const Corpus& corpus, size_t index,
                                   const ForgeConfig& cfg, Rng& rng) {
  Tensor img = corpus.image(index % corpus.size());
  TrainingSample s;
  s.ground_truth = random_crop(img, cfg.crop_size, rng);
  auto [transformed, rec] = apply_full_transform(s.ground_truth, cfg, rng);
  s.transform = rec;
  if (cfg.fixed_mask) {
    MaskSpec spec;
    spec.cx = cfg.crop_size / 2.0;
    spec.cy = cfg.crop_size / 2.0;
    spec.half_w = cfg.crop_size / 4.0;
    spec.half_h = cfg.crop_size / 4.0;
    s.mask = render_mask(spec, cfg.crop_size, cfg.crop_size);
  } else {
    s.mask = sample_mask(rng, cfg.crop_size, cfg.crop_size, cfg.mask);
  }
  s.input = assemble_input(s.ground_truth, transformed, s.mask);
  return s;
}

}  // namespace smartpaste

#endif  // SMARTPASTE_FORGE_HPP
