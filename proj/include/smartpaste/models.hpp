#ifndef SMARTPASTE_MODELS_HPP
#define SMARTPASTE_MODELS_HPP

#include <array>
#include <cmath>
#include <map>
#include <string>

#include "autodiff.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace smartpaste {

/// Named parameter tensors with per-parameter Adam state. std::map keeps
/// iteration order stable for serialization and determinism.
struct ParamStore {
  struct Param {
    Tensor value;
    Tensor m;  // Adam first moment
    Tensor v;  // Adam second moment
  };
  std::map<std::string, Param> params;
  int64_t step = 0;

  NodePtr param(const std::string& name) {
    auto it = params.find(name);
    require(it != params.end(), "unknown parameter name");
    return leaf(it->second.value, name);
  }

  void create(const std::string& name, Tensor init) {
    require(!params.count(name), "duplicate parameter name");
    Param p;
    p.m = Tensor::zeros(init.shape);
    p.v = Tensor::zeros(init.shape);
    p.value = std::move(init);
    params[name] = std::move(p);
  }
};

enum class NoiseMode { kLayers, kInputChannel, kOff };

struct GeneratorConfig {
  int in_channels = 4;
  std::array<int, 3> enc_channels = {32, 64, 128};
  std::array<int, 7> dilation = {1, 2, 4, 8, 16, 16, 16};
  NoiseMode noise_mode = NoiseMode::kLayers;

  int input_channels() const {
    return noise_mode == NoiseMode::kInputChannel ? in_channels + 1
                                                  : in_channels;
  }
};

struct CriticConfig {
  int base_resolution = 64;
  std::array<int, 4> global_channels = {16, 32, 64, 128};
  std::array<int, 3> local_channels = {16, 32, 64};
  int local_pad = 16;
};

namespace model_detail {

inline Tensor he_kernel(Rng& rng, int kh, int kw, int cin, int cout) {
  Tensor k({kh, kw, cin, cout});
  double scale = std::sqrt(2.0 / double(kh * kw * cin));
  for (double& v : k.data) v = rng.gaussian() * scale;
  return k;
}

}  // namespace model_detail

inline void init_generator_params(ParamStore& store, const GeneratorConfig& cfg,
                                  Rng& rng) {
  using model_detail::he_kernel;
  int cin = cfg.input_channels();
  for (int s = 0; s < 3; ++s) {
    int co = cfg.enc_channels[size_t(s)];
    std::string p = "g.enc" + std::to_string(s);
    store.create(p + ".down.k", he_kernel(rng, 3, 3, cin, co));
    store.create(p + ".down.b", Tensor::zeros({1, 1, co}));
    store.create(p + ".conv.k", he_kernel(rng, 3, 3, co, co));
    store.create(p + ".conv.b", Tensor::zeros({1, 1, co}));
    cin = co;
  }
  for (int i = 0; i < 7; ++i) {
    std::string p = "g.dil" + std::to_string(i);
    store.create(p + ".k", he_kernel(rng, 3, 3, cin, cin));
    store.create(p + ".b", Tensor::zeros({1, 1, cin}));
  }
  for (int s = 2; s >= 0; --s) {
    int co = s > 0 ? cfg.enc_channels[size_t(s - 1)] : cfg.enc_channels[0];
    std::string p = "g.dec" + std::to_string(s);
    // transposed conv kernel is (4, 4, cout, cin)
    store.create(p + ".up.k", he_kernel(rng, 4, 4, co, cin));
    store.create(p + ".up.b", Tensor::zeros({1, 1, co}));
    store.create(p + ".noise", Tensor::zeros({1, 1, co}));
    int conv_in = s > 0 ? co + cfg.enc_channels[size_t(s - 1)] : co;
    store.create(p + ".conv.k", he_kernel(rng, 3, 3, conv_in, co));
    store.create(p + ".conv.b", Tensor::zeros({1, 1, co}));
    cin = co;
  }
  store.create("g.out.k", he_kernel(rng, 3, 3, cin, 3));
  store.create("g.out.b", Tensor::zeros({1, 1, 3}));
}

inline void init_critic_params(ParamStore& store, const CriticConfig& cfg,
                               Rng& rng) {
  using model_detail::he_kernel;
  int cin = 7;  // Y (3) + composite (3) + mask (1)
  for (size_t s = 0; s < cfg.global_channels.size(); ++s) {
    int co = cfg.global_channels[s];
    std::string p = "d.glob" + std::to_string(s);
    store.create(p + ".k", he_kernel(rng, 3, 3, cin, co));
    store.create(p + ".b", Tensor::zeros({1, 1, co}));
    cin = co;
  }
  int lin = 7;
  for (size_t s = 0; s < cfg.local_channels.size(); ++s) {
    int co = cfg.local_channels[s];
    std::string p = "d.loc" + std::to_string(s);
    store.create(p + ".k", he_kernel(rng, 3, 3, lin, co));
    store.create(p + ".b", Tensor::zeros({1, 1, co}));
    lin = co;
  }
  int r = cfg.base_resolution;
  int glob_r = r >> cfg.global_channels.size();
  int loc_r = (r / 2) >> cfg.local_channels.size();
  int flat = glob_r * glob_r * cfg.global_channels.back() +
             loc_r * loc_r * cfg.local_channels.back();
  Tensor w({1, flat});
  double scale = std::sqrt(1.0 / double(flat));
  for (double& v : w.data) v = rng.gaussian() * scale;
  store.create("d.dense.w", std::move(w));
  store.create("d.dense.b", Tensor::zeros({1, 1, 1}));
}

namespace model_detail {

inline NodePtr conv_bias(const NodePtr& x, ParamStore& store,
                         const std::string& k, const std::string& b,
                         int stride = 1, int dilation = 1, bool trainable = true) {
  NodePtr kn = store.param(k);
  NodePtr bn = store.param(b);
  if (!trainable) {
    kn->requires_grad = false;
    bn->requires_grad = false;
  }
  NodePtr y = conv2d(x, kn, stride, dilation);
  return add(y, spatial_broadcast(bn, y->value.h(), y->value.w()));
}

}  // namespace model_detail

/// Encoder / dilated block / decoder with skip connections; returns the
/// 3-channel residual (linear output). Spatial dims must be divisible by 8;
/// the network is fully convolutional so any such size works.
inline NodePtr generator_forward(const NodePtr& x_in, ParamStore& store,
                                 const GeneratorConfig& cfg, Rng& noise_rng,
                                 bool trainable = true) {
  using model_detail::conv_bias;
  const int h = x_in->value.h(), w = x_in->value.w();
  require(h % 8 == 0 && w % 8 == 0,
          "generator input dims must be divisible by 8");
  NodePtr x = x_in;
  if (cfg.noise_mode == NoiseMode::kInputChannel) {
    Tensor noise = draw_gaussian_image(noise_rng, h, w);
    x = concat({x, constant(std::move(noise))});
  }
  require(x->value.c() == cfg.input_channels(),
          "generator input channel mismatch");

  std::array<NodePtr, 3> skips;
  for (int s = 0; s < 3; ++s) {
    std::string p = "g.enc" + std::to_string(s);
    x = conv_bias(x, store, p + ".down.k", p + ".down.b", 2, 1, trainable);
    x = lrn(leaky_relu(x));
    x = conv_bias(x, store, p + ".conv.k", p + ".conv.b", 1, 1, trainable);
    x = lrn(leaky_relu(x));
    skips[size_t(s)] = x;
  }
  for (int i = 0; i < 7; ++i) {
    std::string p = "g.dil" + std::to_string(i);
    x = conv_bias(x, store, p + ".k", p + ".b", 1, cfg.dilation[size_t(i)],
                  trainable);
    x = lrn(leaky_relu(x));
  }
  for (int s = 2; s >= 0; --s) {
    std::string p = "g.dec" + std::to_string(s);
    NodePtr kup = store.param(p + ".up.k");
    NodePtr bup = store.param(p + ".up.b");
    NodePtr nscale = store.param(p + ".noise");
    if (!trainable) {
      kup->requires_grad = false;
      bup->requires_grad = false;
      nscale->requires_grad = false;
    }
    x = transposed_conv2d(x, kup);
    x = add(x, spatial_broadcast(bup, x->value.h(), x->value.w()));
    if (cfg.noise_mode == NoiseMode::kLayers) {
      Tensor noise = draw_gaussian_image(noise_rng, x->value.h(), x->value.w());
      x = noise_add(x, constant(std::move(noise)), nscale);
    }
    x = lrn(leaky_relu(x));
    if (s > 0) x = concat({x, skips[size_t(s - 1)]});
    x = conv_bias(x, store, p + ".conv.k", p + ".conv.b", 1, 1, trainable);
    x = lrn(leaky_relu(x));
  }
  return conv_bias(x, store, "g.out.k", "g.out.b", 1, 1, trainable);
}

/// Y = (residual + source) M + context (1 - M). Context pixels come through a
/// {0,1} mask multiply, so they are bit-identical to the context input.
inline NodePtr composite_output(const NodePtr& residual, const Tensor& source,
                                const Tensor& context, const Tensor& mask) {
  require(residual->value.same_shape(source) && source.same_shape(context),
          "composite shape mismatch");
  require(mask.h() == source.h() && mask.w() == source.w() && mask.c() == 1,
          "composite mask shape mismatch");
  Tensor m3({mask.h(), mask.w(), 3});
  Tensor inv3 = m3;
  Tensor ctx_masked = context;
  for (int y = 0; y < mask.h(); ++y)
    for (int x = 0; x < mask.w(); ++x) {
      double m = mask.at(y, x, 0);
      for (int c = 0; c < 3; ++c) {
        m3.at(y, x, c) = m;
        inv3.at(y, x, c) = 1.0 - m;
        ctx_masked.at(y, x, c) = context.at(y, x, c) * (1.0 - m);
      }
    }
  NodePtr content = mask_mul(add(residual, constant(source)), std::move(m3));
  return add(content, constant(std::move(ctx_masked)));
}

/// Bounding box of nonzero mask pixels padded by pad, clamped to the canvas.
/// Empty masks fall back to the full image.
struct BBox {
  int y0 = 0, x0 = 0, h = 0, w = 0;
};

inline BBox mask_bbox(const Tensor& mask, int pad) {
  int ymin = mask.h(), ymax = -1, xmin = mask.w(), xmax = -1;
  for (int y = 0; y < mask.h(); ++y)
    for (int x = 0; x < mask.w(); ++x)
      if (mask.at(y, x, 0) != 0.0) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
      }
  BBox b;
  if (ymax < 0) {  // empty mask: whole image
    b.h = mask.h();
    b.w = mask.w();
    return b;
  }
  b.y0 = std::max(0, ymin - pad);
  b.x0 = std::max(0, xmin - pad);
  b.h = std::min(mask.h(), ymax + 1 + pad) - b.y0;
  b.w = std::min(mask.w(), xmax + 1 + pad) - b.x0;
  return b;
}

/// Two-branch conditional critic: a global branch over concat(Y, condition)
/// and a local branch over the resized mask neighborhood, merged by one dense
/// layer into a scalar.
inline NodePtr critic_forward(const NodePtr& y, const NodePtr& condition,
                              const Tensor& mask, ParamStore& store,
                              const CriticConfig& cfg, bool trainable = true) {
  using model_detail::conv_bias;
  require(y->value.c() == 3 && condition->value.c() == 4,
          "critic expects 3-channel image and 4-channel condition");
  require(y->value.h() == cfg.base_resolution &&
              y->value.w() == cfg.base_resolution,
          "critic input must match its configured resolution");
  NodePtr full = concat({y, condition});

  NodePtr g = full;
  for (size_t s = 0; s < cfg.global_channels.size(); ++s) {
    std::string p = "d.glob" + std::to_string(s);
    g = conv_bias(g, store, p + ".k", p + ".b", 2, 1, trainable);
    g = leaky_relu(g);
  }

  BBox bb = mask_bbox(mask, cfg.local_pad);
  NodePtr l = spatial_crop(full, bb.y0, bb.x0, bb.h, bb.w);
  int lr = cfg.base_resolution / 2;
  l = resize(l, lr, lr);
  for (size_t s = 0; s < cfg.local_channels.size(); ++s) {
    std::string p = "d.loc" + std::to_string(s);
    l = conv_bias(l, store, p + ".k", p + ".b", 2, 1, trainable);
    l = leaky_relu(l);
  }

  NodePtr merged = concat({flatten(g), flatten(l)});
  NodePtr w = store.param("d.dense.w");
  NodePtr b = store.param("d.dense.b");
  if (!trainable) {
    w->requires_grad = false;
    b->requires_grad = false;
  }
  return dense(merged, w, b);
}

}  // namespace smartpaste

#endif  // SMARTPASTE_MODELS_HPP
