#ifndef SMARTPASTE_AUTODIFF_HPP
#define SMARTPASTE_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace smartpaste {

// Reverse-mode autodiff over dense tensors. Values are computed eagerly at
// node construction (define-by-run). Every backward rule emits graph nodes
// rather than raw tensors, so gradients are themselves differentiable; the
// gradient-penalty term needs exactly this (differentiating through the
// critic's input gradient).

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  std::vector<NodePtr> inputs;
  bool requires_grad = false;
  std::string name;  // nonempty for parameter leaves

  // Given the upstream gradient (same shape as value), produce gradient nodes
  // for each input; entries may be null for inputs that need no gradient.
  std::function<std::vector<NodePtr>(const NodePtr& upstream)> backward_fn;
};

inline NodePtr constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

inline NodePtr leaf(Tensor t, std::string name = "") {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

namespace ad_detail {

inline NodePtr make(Tensor value, std::vector<NodePtr> inputs,
                    std::function<std::vector<NodePtr>(const NodePtr&)> bwd) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs)
    if (in && in->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(bwd);
  return n;
}

}  // namespace ad_detail

// ---------------------------------------------------------------------------
// elementwise ops

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  require(a->value.same_shape(b->value), "add shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  return ad_detail::make(std::move(out), {a, b}, [](const NodePtr& u) {
    return std::vector<NodePtr>{u, u};
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b);
inline NodePtr neg(const NodePtr& a);
inline NodePtr mul(const NodePtr& a, const NodePtr& b);
inline NodePtr scalar_mul(const NodePtr& a, double s);

inline NodePtr neg(const NodePtr& a) { return scalar_mul(a, -1.0); }

inline NodePtr scalar_mul(const NodePtr& a, double s) {
  Tensor out = a->value;
  for (double& v : out.data) v *= s;
  return ad_detail::make(std::move(out), {a}, [s](const NodePtr& u) {
    return std::vector<NodePtr>{scalar_mul(u, s)};
  });
}

inline NodePtr add_scalar(const NodePtr& a, double s) {
  Tensor out = a->value;
  for (double& v : out.data) v += s;
  return ad_detail::make(std::move(out), {a}, [](const NodePtr& u) {
    return std::vector<NodePtr>{u};
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  return add(a, neg(b));
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  require(a->value.same_shape(b->value), "mul shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
  return ad_detail::make(std::move(out), {a, b}, [a, b](const NodePtr& u) {
    return std::vector<NodePtr>{mul(u, b), mul(u, a)};
  });
}

inline NodePtr div(const NodePtr& a, const NodePtr& b) {
  require(a->value.same_shape(b->value), "div shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] /= b->value.data[i];
  return ad_detail::make(std::move(out), {a, b}, [a, b](const NodePtr& u) {
    NodePtr ga = div(u, b);
    NodePtr gb = neg(div(mul(u, a), mul(b, b)));
    return std::vector<NodePtr>{ga, gb};
  });
}

inline NodePtr sqrt_node(const NodePtr& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = std::sqrt(v);
  auto self = ad_detail::make(std::move(out), {a}, nullptr);
  if (self->requires_grad) {
    std::weak_ptr<Node> wself = self;
    self->backward_fn = [wself](const NodePtr& u) {
      NodePtr s = wself.lock();
      return std::vector<NodePtr>{div(u, scalar_mul(s, 2.0))};
    };
  }
  return self;
}

inline NodePtr square(const NodePtr& a) { return mul(a, a); }

/// Elementwise multiply by a constant mask derived from the forward value;
/// used for the piecewise-linear ops whose second derivative is zero.
inline NodePtr mask_mul(const NodePtr& a, Tensor mask) {
  require(a->value.same_shape(mask), "mask_mul shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out.data[i] *= mask.data[i];
  auto mask_ptr = std::make_shared<Tensor>(std::move(mask));
  return ad_detail::make(std::move(out), {a}, [mask_ptr](const NodePtr& u) {
    return std::vector<NodePtr>{mask_mul(u, *mask_ptr)};
  });
}

inline NodePtr leaky_relu(const NodePtr& a, double alpha = 0.2) {
  Tensor mask = a->value;
  for (double& v : mask.data) v = v >= 0.0 ? 1.0 : alpha;
  return mask_mul(a, std::move(mask));
}

inline NodePtr abs_node(const NodePtr& a) {
  Tensor mask = a->value;
  for (double& v : mask.data) v = v >= 0.0 ? 1.0 : -1.0;
  return mask_mul(a, std::move(mask));
}

inline NodePtr clamp_node(const NodePtr& a, double lo, double hi) {
  Tensor mask = a->value;
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) {
    double v = out.data[i];
    mask.data[i] = (v >= lo && v <= hi) ? 1.0 : 0.0;
    out.data[i] = std::clamp(v, lo, hi);
  }
  auto mask_ptr = std::make_shared<Tensor>(std::move(mask));
  return ad_detail::make(std::move(out), {a}, [mask_ptr](const NodePtr& u) {
    return std::vector<NodePtr>{mask_mul(u, *mask_ptr)};
  });
}

// ---------------------------------------------------------------------------
// reductions and broadcasts (mutually adjoint pairs)

inline NodePtr broadcast_all(const NodePtr& s, std::vector<int> shape);

inline NodePtr sum_all(const NodePtr& a) {
  std::vector<int> shape = a->value.shape;
  Tensor out = Tensor::scalar(a->value.sum());
  return ad_detail::make(std::move(out), {a}, [shape](const NodePtr& u) {
    return std::vector<NodePtr>{broadcast_all(u, shape)};
  });
}

inline NodePtr broadcast_all(const NodePtr& s, std::vector<int> shape) {
  require(s->value.size() == 1, "broadcast_all expects a scalar");
  Tensor out = Tensor::full(shape, s->value.data[0]);
  return ad_detail::make(std::move(out), {s}, [](const NodePtr& u) {
    return std::vector<NodePtr>{sum_all(u)};
  });
}

inline NodePtr mean_all(const NodePtr& a) {
  return scalar_mul(sum_all(a), 1.0 / double(a->value.size()));
}

inline NodePtr min_all(const NodePtr& a) {
  int64_t idx = 0;
  for (int64_t i = 1; i < a->value.size(); ++i)
    if (a->value.data[i] < a->value.data[idx]) idx = i;
  std::vector<int> shape = a->value.shape;
  return ad_detail::make(Tensor::scalar(a->value.data[idx]), {a},
                         [shape, idx](const NodePtr& u) {
                           NodePtr g = broadcast_all(u, shape);
                           Tensor mask(shape);
                           mask.data[idx] = 1.0;
                           return std::vector<NodePtr>{mask_mul(g, mask)};
                         });
}

inline NodePtr max_all(const NodePtr& a) {
  int64_t idx = 0;
  for (int64_t i = 1; i < a->value.size(); ++i)
    if (a->value.data[i] > a->value.data[idx]) idx = i;
  std::vector<int> shape = a->value.shape;
  return ad_detail::make(Tensor::scalar(a->value.data[idx]), {a},
                         [shape, idx](const NodePtr& u) {
                           NodePtr g = broadcast_all(u, shape);
                           Tensor mask(shape);
                           mask.data[idx] = 1.0;
                           return std::vector<NodePtr>{mask_mul(g, mask)};
                         });
}

inline NodePtr channel_broadcast(const NodePtr& a, int channels);

/// Sum over the channel axis of a rank-3 image: (h, w, c) -> (h, w, 1).
inline NodePtr channel_sum(const NodePtr& a) {
  const Tensor& x = a->value;
  Tensor out({x.h(), x.w(), 1});
  for (int y = 0; y < x.h(); ++y)
    for (int xx = 0; xx < x.w(); ++xx) {
      double s = 0;
      for (int c = 0; c < x.c(); ++c) s += x.at(y, xx, c);
      out.at(y, xx, 0) = s;
    }
  int ch = x.c();
  return ad_detail::make(std::move(out), {a}, [ch](const NodePtr& u) {
    return std::vector<NodePtr>{channel_broadcast(u, ch)};
  });
}

inline NodePtr channel_broadcast(const NodePtr& a, int channels) {
  const Tensor& x = a->value;
  require(x.c() == 1, "channel_broadcast expects a 1-channel image");
  Tensor out({x.h(), x.w(), channels});
  for (int y = 0; y < x.h(); ++y)
    for (int xx = 0; xx < x.w(); ++xx)
      for (int c = 0; c < channels; ++c) out.at(y, xx, c) = x.at(y, xx, 0);
  return ad_detail::make(std::move(out), {a}, [](const NodePtr& u) {
    return std::vector<NodePtr>{channel_sum(u)};
  });
}

inline NodePtr spatial_broadcast(const NodePtr& a, int h, int w);

/// Sum over both spatial axes: (h, w, c) -> (1, 1, c).
inline NodePtr spatial_sum(const NodePtr& a) {
  const Tensor& x = a->value;
  Tensor out({1, 1, x.c()});
  for (int y = 0; y < x.h(); ++y)
    for (int xx = 0; xx < x.w(); ++xx)
      for (int c = 0; c < x.c(); ++c) out.at(0, 0, c) += x.at(y, xx, c);
  int h = x.h(), w = x.w();
  return ad_detail::make(std::move(out), {a}, [h, w](const NodePtr& u) {
    return std::vector<NodePtr>{spatial_broadcast(u, h, w)};
  });
}

inline NodePtr spatial_broadcast(const NodePtr& a, int h, int w) {
  const Tensor& x = a->value;
  require(x.h() == 1 && x.w() == 1, "spatial_broadcast expects (1,1,c)");
  Tensor out({h, w, x.c()});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int c = 0; c < x.c(); ++c) out.at(y, xx, c) = x.at(0, 0, c);
  return ad_detail::make(std::move(out), {a}, [](const NodePtr& u) {
    return std::vector<NodePtr>{spatial_sum(u)};
  });
}

// ---------------------------------------------------------------------------
// channel concat / slice / spatial crop (adjoint pairs)

inline NodePtr channel_slice(const NodePtr& a, int c0, int len);

inline NodePtr concat(const std::vector<NodePtr>& xs) {
  require(!xs.empty(), "concat needs at least one input");
  int h = xs[0]->value.h(), w = xs[0]->value.w();
  int ctot = 0;
  for (const auto& x : xs) {
    require(x->value.h() == h && x->value.w() == w,
            "concat spatial dims mismatch");
    ctot += x->value.c();
  }
  Tensor out({h, w, ctot});
  int off = 0;
  for (const auto& x : xs) {
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int c = 0; c < x->value.c(); ++c)
          out.at(y, xx, off + c) = x->value.at(y, xx, c);
    off += x->value.c();
  }
  std::vector<int> widths;
  for (const auto& x : xs) widths.push_back(x->value.c());
  return ad_detail::make(std::move(out), xs, [widths](const NodePtr& u) {
    std::vector<NodePtr> grads;
    int off = 0;
    for (int cw : widths) {
      grads.push_back(channel_slice(u, off, cw));
      off += cw;
    }
    return grads;
  });
}

inline NodePtr channel_pad(const NodePtr& a, int c0, int ctot);

inline NodePtr channel_slice(const NodePtr& a, int c0, int len) {
  const Tensor& x = a->value;
  require(c0 >= 0 && c0 + len <= x.c(), "channel_slice out of range");
  Tensor out({x.h(), x.w(), len});
  for (int y = 0; y < x.h(); ++y)
    for (int xx = 0; xx < x.w(); ++xx)
      for (int c = 0; c < len; ++c) out.at(y, xx, c) = x.at(y, xx, c0 + c);
  int ctot = x.c();
  return ad_detail::make(std::move(out), {a}, [c0, ctot](const NodePtr& u) {
    return std::vector<NodePtr>{channel_pad(u, c0, ctot)};
  });
}

inline NodePtr channel_pad(const NodePtr& a, int c0, int ctot) {
  const Tensor& x = a->value;
  Tensor out({x.h(), x.w(), ctot});
  for (int y = 0; y < x.h(); ++y)
    for (int xx = 0; xx < x.w(); ++xx)
      for (int c = 0; c < x.c(); ++c) out.at(y, xx, c0 + c) = x.at(y, xx, c);
  int len = x.c();
  return ad_detail::make(std::move(out), {a}, [c0, len](const NodePtr& u) {
    return std::vector<NodePtr>{channel_slice(u, c0, len)};
  });
}

/// Row-major reshape; a pure relabeling of indices.
inline NodePtr reshape(const NodePtr& a, std::vector<int> shape) {
  require(Tensor::count(shape) == a->value.size(), "reshape size mismatch");
  Tensor out(shape, a->value.data);
  std::vector<int> orig = a->value.shape;
  return ad_detail::make(std::move(out), {a}, [orig](const NodePtr& u) {
    return std::vector<NodePtr>{reshape(u, orig)};
  });
}

/// Flatten to a (1, 1, n) channel vector.
inline NodePtr flatten(const NodePtr& a) {
  return reshape(a, {1, 1, int(a->value.size())});
}

inline NodePtr spatial_uncrop(const NodePtr& a, int y0, int x0, int h, int w);

inline NodePtr spatial_crop(const NodePtr& a, int y0, int x0, int ch_h,
                            int ch_w) {
  const Tensor& x = a->value;
  require(y0 >= 0 && x0 >= 0 && y0 + ch_h <= x.h() && x0 + ch_w <= x.w(),
          "spatial_crop out of range");
  Tensor out({ch_h, ch_w, x.c()});
  for (int y = 0; y < ch_h; ++y)
    for (int xx = 0; xx < ch_w; ++xx)
      for (int c = 0; c < x.c(); ++c)
        out.at(y, xx, c) = x.at(y0 + y, x0 + xx, c);
  int H = x.h(), W = x.w();
  return ad_detail::make(std::move(out), {a}, [y0, x0, H, W](const NodePtr& u) {
    return std::vector<NodePtr>{spatial_uncrop(u, y0, x0, H, W)};
  });
}

inline NodePtr spatial_uncrop(const NodePtr& a, int y0, int x0, int h, int w) {
  const Tensor& x = a->value;
  Tensor out({h, w, x.c()});
  for (int y = 0; y < x.h(); ++y)
    for (int xx = 0; xx < x.w(); ++xx)
      for (int c = 0; c < x.c(); ++c) out.at(y0 + y, x0 + xx, c) = x.at(y, xx, c);
  int ch_h = x.h(), ch_w = x.w();
  return ad_detail::make(std::move(out), {a},
                         [y0, x0, ch_h, ch_w](const NodePtr& u) {
                           return std::vector<NodePtr>{
                               spatial_crop(u, y0, x0, ch_h, ch_w)};
                         });
}

// ---------------------------------------------------------------------------
// bilinear resize (linear map; adjoint pair)

inline NodePtr resize_adjoint(const NodePtr& a, int oh, int ow);

inline NodePtr resize(const NodePtr& a, int oh, int ow) {
  Tensor out = bilinear_resize(a->value, oh, ow);
  int ih = a->value.h(), iw = a->value.w();
  return ad_detail::make(std::move(out), {a}, [ih, iw](const NodePtr& u) {
    return std::vector<NodePtr>{resize_adjoint(u, ih, iw)};
  });
}

/// Transpose of bilinear_resize: scatters each output-pixel weight back to
/// its source taps. (a has the resized shape; result has shape (oh, ow, c).)
inline NodePtr resize_adjoint(const NodePtr& a, int oh, int ow) {
  const Tensor& g = a->value;
  const int gh = g.h(), gw = g.w(), ch = g.c();
  Tensor out({oh, ow, ch});
  const double sy = gh > 1 ? double(oh - 1) / double(gh - 1) : 0.0;
  const double sx = gw > 1 ? double(ow - 1) / double(gw - 1) : 0.0;
  for (int y = 0; y < gh; ++y) {
    double fy = y * sy;
    int y0 = std::min(int(fy), oh - 1);
    int y1 = std::min(y0 + 1, oh - 1);
    double wy = fy - y0;
    for (int x = 0; x < gw; ++x) {
      double fx = x * sx;
      int x0 = std::min(int(fx), ow - 1);
      int x1 = std::min(x0 + 1, ow - 1);
      double wx = fx - x0;
      for (int k = 0; k < ch; ++k) {
        double v = g.at(y, x, k);
        out.at(y0, x0, k) += (1 - wy) * (1 - wx) * v;
        out.at(y0, x1, k) += (1 - wy) * wx * v;
        out.at(y1, x0, k) += wy * (1 - wx) * v;
        out.at(y1, x1, k) += wy * wx * v;
      }
    }
  }
  int ih = gh, iw = gw;
  return ad_detail::make(std::move(out), {a}, [ih, iw](const NodePtr& u) {
    return std::vector<NodePtr>{resize(u, ih, iw)};
  });
}

// ---------------------------------------------------------------------------
// convolution family
//
// One trilinear form T(x, k, y) = sum y[o,co] * x[i(o,t),ci] * k[t,ci,co]
// underlies conv_y (forward), conv_x (input adjoint, also the transposed
// convolution) and conv_k (kernel adjoint). Each one's gradients are the
// other two with permuted operands, which closes the set under repeated
// differentiation.

struct ConvSpec {
  int kh = 3, kw = 3;
  int cin = 0, cout = 0;
  int stride = 1, dilation = 1;
  int pad = 0;
  int xh = 0, xw = 0;  // x-slot spatial dims
  int yh = 0, yw = 0;  // y-slot spatial dims

  static ConvSpec same(int xh, int xw, int cin, int cout, int stride,
                       int dilation, int kh = 3, int kw = 3) {
    ConvSpec s;
    s.kh = kh;
    s.kw = kw;
    s.cin = cin;
    s.cout = cout;
    s.stride = stride;
    s.dilation = dilation;
    s.pad = dilation * (kh - 1) / 2;
    if (stride == 2 && kh == 4) s.pad = 1;
    s.xh = xh;
    s.xw = xw;
    s.yh = (xh + 2 * s.pad - dilation * (kh - 1) - 1) / stride + 1;
    s.yw = (xw + 2 * s.pad - dilation * (kw - 1) - 1) / stride + 1;
    return s;
  }
};

namespace ad_detail {

inline Tensor conv_contract_y(const Tensor& x, const Tensor& k,
                              const ConvSpec& s) {
  Tensor y({s.yh, s.yw, s.cout});
  for (int oy = 0; oy < s.yh; ++oy)
    for (int ox = 0; ox < s.yw; ++ox) {
      double* yp = &y.at(oy, ox, 0);
      for (int ky = 0; ky < s.kh; ++ky) {
        int iy = oy * s.stride - s.pad + ky * s.dilation;
        if (iy < 0 || iy >= s.xh) continue;
        for (int kx = 0; kx < s.kw; ++kx) {
          int ix = ox * s.stride - s.pad + kx * s.dilation;
          if (ix < 0 || ix >= s.xw) continue;
          const double* xp = &x.at(iy, ix, 0);
          for (int ci = 0; ci < s.cin; ++ci) {
            double xv = xp[ci];
            if (xv == 0.0) continue;
            const double* kp = &k.at4(ky, kx, ci, 0);
            for (int co = 0; co < s.cout; ++co) yp[co] += xv * kp[co];
          }
        }
      }
    }
  return y;
}

inline Tensor conv_contract_x(const Tensor& y, const Tensor& k,
                              const ConvSpec& s) {
  Tensor x({s.xh, s.xw, s.cin});
  for (int oy = 0; oy < s.yh; ++oy)
    for (int ox = 0; ox < s.yw; ++ox) {
      const double* yp = &y.at(oy, ox, 0);
      for (int ky = 0; ky < s.kh; ++ky) {
        int iy = oy * s.stride - s.pad + ky * s.dilation;
        if (iy < 0 || iy >= s.xh) continue;
        for (int kx = 0; kx < s.kw; ++kx) {
          int ix = ox * s.stride - s.pad + kx * s.dilation;
          if (ix < 0 || ix >= s.xw) continue;
          double* xp = &x.at(iy, ix, 0);
          for (int ci = 0; ci < s.cin; ++ci) {
            const double* kp = &k.at4(ky, kx, ci, 0);
            double acc = 0;
            for (int co = 0; co < s.cout; ++co) acc += yp[co] * kp[co];
            xp[ci] += acc;
          }
        }
      }
    }
  return x;
}

inline Tensor conv_contract_k(const Tensor& x, const Tensor& y,
                              const ConvSpec& s) {
  Tensor k({s.kh, s.kw, s.cin, s.cout});
  for (int oy = 0; oy < s.yh; ++oy)
    for (int ox = 0; ox < s.yw; ++ox) {
      const double* yp = &y.at(oy, ox, 0);
      for (int ky = 0; ky < s.kh; ++ky) {
        int iy = oy * s.stride - s.pad + ky * s.dilation;
        if (iy < 0 || iy >= s.xh) continue;
        for (int kx = 0; kx < s.kw; ++kx) {
          int ix = ox * s.stride - s.pad + kx * s.dilation;
          if (ix < 0 || ix >= s.xw) continue;
          const double* xp = &x.at(iy, ix, 0);
          for (int ci = 0; ci < s.cin; ++ci) {
            double xv = xp[ci];
            if (xv == 0.0) continue;
            double* kp = &k.at4(ky, kx, ci, 0);
            for (int co = 0; co < s.cout; ++co) kp[co] += xv * yp[co];
          }
        }
      }
    }
  return k;
}

}  // namespace ad_detail

inline NodePtr conv_x_op(const NodePtr& y, const NodePtr& k, const ConvSpec& s);
inline NodePtr conv_k_op(const NodePtr& x, const NodePtr& y, const ConvSpec& s);

/// Forward convolution (cross-correlation) with "same"-style zero padding.
inline NodePtr conv_y_op(const NodePtr& x, const NodePtr& k,
                         const ConvSpec& s) {
  require(x->value.h() == s.xh && x->value.w() == s.xw &&
              x->value.c() == s.cin,
          "conv input shape mismatch");
  require(k->value.rank() == 4 && k->value.shape[0] == s.kh &&
              k->value.shape[1] == s.kw && k->value.shape[2] == s.cin &&
              k->value.shape[3] == s.cout,
          "conv kernel shape mismatch");
  Tensor out = ad_detail::conv_contract_y(x->value, k->value, s);
  return ad_detail::make(std::move(out), {x, k}, [x, k, s](const NodePtr& u) {
    return std::vector<NodePtr>{conv_x_op(u, k, s), conv_k_op(x, u, s)};
  });
}

/// Adjoint w.r.t. the input slot; also serves as the transposed convolution
/// (operand lives in the y slot, result in the x slot).
inline NodePtr conv_x_op(const NodePtr& y, const NodePtr& k,
                         const ConvSpec& s) {
  require(y->value.h() == s.yh && y->value.w() == s.yw &&
              y->value.c() == s.cout,
          "conv_x operand shape mismatch");
  Tensor out = ad_detail::conv_contract_x(y->value, k->value, s);
  return ad_detail::make(std::move(out), {y, k}, [y, k, s](const NodePtr& u) {
    return std::vector<NodePtr>{conv_y_op(u, k, s), conv_k_op(u, y, s)};
  });
}

/// Adjoint w.r.t. the kernel slot.
inline NodePtr conv_k_op(const NodePtr& x, const NodePtr& y,
                         const ConvSpec& s) {
  Tensor out = ad_detail::conv_contract_k(x->value, y->value, s);
  return ad_detail::make(std::move(out), {x, y}, [x, y, s](const NodePtr& u) {
    return std::vector<NodePtr>{conv_x_op(y, u, s), conv_y_op(x, u, s)};
  });
}

/// 3x3 convolution, stride 1 or 2, optional dilation, zero "same" padding.
inline NodePtr conv2d(const NodePtr& x, const NodePtr& k, int stride = 1,
                      int dilation = 1) {
  int cin = x->value.c();
  int cout = k->value.shape[3];
  require(k->value.shape[2] == cin, "conv2d kernel cin mismatch");
  ConvSpec s = ConvSpec::same(x->value.h(), x->value.w(), cin, cout, stride,
                              dilation, k->value.shape[0], k->value.shape[1]);
  return conv_y_op(x, k, s);
}

/// 4x4 stride-2 transposed convolution: doubles spatial dims. Kernel shape is
/// (4, 4, cout, cin) — the underlying conv maps cout -> cin.
inline NodePtr transposed_conv2d(const NodePtr& x, const NodePtr& k) {
  int cin = x->value.c();
  require(k->value.rank() == 4 && k->value.shape[0] == 4 &&
              k->value.shape[1] == 4 && k->value.shape[3] == cin,
          "transposed_conv2d kernel shape mismatch");
  int cout = k->value.shape[2];
  ConvSpec s = ConvSpec::same(2 * x->value.h(), 2 * x->value.w(), cout, cin,
                              /*stride=*/2, /*dilation=*/1, 4, 4);
  return conv_x_op(x, k, s);
}

// ---------------------------------------------------------------------------
// dense layer (flattened input)

struct DenseSpec {
  std::vector<int> xshape;
  int in = 0, out = 0;
};

inline NodePtr dense_x_op(const NodePtr& y, const NodePtr& w,
                          const DenseSpec& s);
inline NodePtr dense_w_op(const NodePtr& x, const NodePtr& y,
                          const DenseSpec& s);

inline NodePtr dense_y_op(const NodePtr& x, const NodePtr& w,
                          const DenseSpec& s) {
  Tensor out({s.out, 1, 1});
  for (int j = 0; j < s.out; ++j) {
    const double* wr = &w->value.data[size_t(j) * s.in];
    double acc = 0;
    for (int i = 0; i < s.in; ++i) acc += wr[i] * x->value.data[i];
    out.data[j] = acc;
  }
  return ad_detail::make(std::move(out), {x, w}, [x, w, s](const NodePtr& u) {
    return std::vector<NodePtr>{dense_x_op(u, w, s), dense_w_op(x, u, s)};
  });
}

inline NodePtr dense_x_op(const NodePtr& y, const NodePtr& w,
                          const DenseSpec& s) {
  Tensor out(s.xshape);
  for (int j = 0; j < s.out; ++j) {
    const double* wr = &w->value.data[size_t(j) * s.in];
    double yv = y->value.data[j];
    for (int i = 0; i < s.in; ++i) out.data[i] += wr[i] * yv;
  }
  return ad_detail::make(std::move(out), {y, w}, [y, w, s](const NodePtr& u) {
    return std::vector<NodePtr>{dense_y_op(u, w, s), dense_w_op(u, y, s)};
  });
}

inline NodePtr dense_w_op(const NodePtr& x, const NodePtr& y,
                          const DenseSpec& s) {
  Tensor out({s.out, s.in});
  for (int j = 0; j < s.out; ++j) {
    double yv = y->value.data[j];
    double* wr = &out.data[size_t(j) * s.in];
    for (int i = 0; i < s.in; ++i) wr[i] = x->value.data[i] * yv;
  }
  return ad_detail::make(std::move(out), {x, y}, [x, y, s](const NodePtr& u) {
    return std::vector<NodePtr>{dense_x_op(y, u, s), dense_y_op(x, u, s)};
  });
}

/// y = W flat(x) + b; W is (out, in), b is (out, 1, 1).
inline NodePtr dense(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
  DenseSpec s;
  s.xshape = x->value.shape;
  s.in = int(x->value.size());
  s.out = w->value.shape[0];
  require(w->value.rank() == 2 && w->value.shape[1] == s.in,
          "dense weight shape mismatch");
  require(b->value.size() == s.out, "dense bias shape mismatch");
  return add(dense_y_op(x, w, s), b);
}

// ---------------------------------------------------------------------------
// composites

/// Local response normalization across channels:
/// x / sqrt(mean_c(x^2) + 1e-8), per spatial site.
inline NodePtr lrn(const NodePtr& x, double eps = 1e-8) {
  int ch = x->value.c();
  NodePtr msq = scalar_mul(channel_sum(square(x)), 1.0 / double(ch));
  NodePtr denom = sqrt_node(add_scalar(msq, eps));
  return div(x, channel_broadcast(denom, ch));
}

/// Adds a broadcast single-channel noise image scaled by learned per-channel
/// factors: out_c = x_c + scales_c * noise.
inline NodePtr noise_add(const NodePtr& x, const NodePtr& noise,
                         const NodePtr& scales) {
  int ch = x->value.c();
  require(noise->value.c() == 1 && noise->value.h() == x->value.h() &&
              noise->value.w() == x->value.w(),
          "noise_add noise shape mismatch");
  require(scales->value.size() == ch, "noise_add scales shape mismatch");
  NodePtr n = channel_broadcast(noise, ch);
  NodePtr s = spatial_broadcast(scales, x->value.h(), x->value.w());
  return add(x, mul(n, s));
}

// ---------------------------------------------------------------------------
// backward

using GradMap = std::unordered_map<const Node*, NodePtr>;

namespace ad_detail {

inline void topo_sort(const NodePtr& root, std::vector<NodePtr>& order) {
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<NodePtr, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      NodePtr child = node->inputs[idx++];
      if (child && child->requires_grad && !seen.count(child.get())) {
        seen.insert(child.get());
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace ad_detail

/// Reverse-mode accumulation from a scalar loss. Returns gradient nodes for
/// every reachable node that requires grad; gradients are graph nodes, so a
/// second backward pass through them yields second-order derivatives.
inline GradMap backward(const NodePtr& loss) {
  require(loss->value.size() == 1, "backward expects a scalar loss");
  std::vector<NodePtr> order;
  ad_detail::topo_sort(loss, order);  // post-order: inputs before consumers
  GradMap grads;
  grads[loss.get()] = constant(Tensor::scalar(1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodePtr& node = *it;
    auto git = grads.find(node.get());
    if (git == grads.end() || !node->backward_fn) continue;
    std::vector<NodePtr> in_grads = node->backward_fn(git->second);
    for (size_t i = 0; i < node->inputs.size(); ++i) {
      const NodePtr& in = node->inputs[i];
      if (!in || !in->requires_grad || i >= in_grads.size() || !in_grads[i])
        continue;
      auto acc = grads.find(in.get());
      if (acc == grads.end())
        grads[in.get()] = in_grads[i];
      else
        acc->second = add(acc->second, in_grads[i]);
    }
  }
  return grads;
}

/// The gradient of a scalar output w.r.t. one input, as a differentiable node.
inline NodePtr input_gradient_graph(const NodePtr& output,
                                    const NodePtr& wrt) {
  GradMap grads = backward(output);
  auto it = grads.find(wrt.get());
  if (it != grads.end()) return it->second;
  return constant(Tensor::zeros(wrt->value.shape));
}

}  // namespace smartpaste

#endif  // SMARTPASTE_AUTODIFF_HPP
