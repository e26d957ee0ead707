#ifndef SMARTPASTE_GRADCHECK_HPP
#define SMARTPASTE_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "models.hpp"
#include "rng.hpp"
#include "trainer.hpp"

namespace smartpaste {

// Central finite-difference verification of every differentiable operator and
// of the assembled generator/critic graphs, shared by the test suite and the
// `gradcheck` CLI subcommand.

struct GradCheckResult {
  std::string op;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

namespace gc_detail {

inline double rel_err(double analytic, double numeric) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0});
  return std::abs(analytic - numeric) / denom;
}

/// Checks d loss / d x against central differences on every coordinate of x
/// (or a sample of coordinates for large tensors).
/// build: maps a leaf for x to a scalar loss node.
inline double check_input_gradient(
    Tensor x, const std::function<NodePtr(const NodePtr&)>& build,
    double eps = 1e-3, int max_coords = 64, uint64_t coord_seed = 7,
    double sabotage = 0.0) {
  NodePtr xl = leaf(x);
  NodePtr loss = build(xl);
  GradMap grads = backward(loss);
  auto it = grads.find(xl.get());
  Tensor analytic = it != grads.end() ? it->second->value
                                      : Tensor::zeros(x.shape);

  std::vector<int64_t> coords;
  if (x.size() <= max_coords) {
    for (int64_t i = 0; i < x.size(); ++i) coords.push_back(i);
  } else {
    Rng pick(coord_seed, 0);
    for (int i = 0; i < max_coords; ++i)
      coords.push_back(int64_t(pick.next_u64() % uint64_t(x.size())));
  }

  double worst = 0.0;
  for (int64_t i : coords) {
    Tensor xp = x, xm = x;
    xp.data[i] += eps;
    xm.data[i] -= eps;
    double fp = build(constant(xp))->value.data[0];
    double fm = build(constant(xm))->value.data[0];
    double numeric = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, rel_err(analytic.data[i] + sabotage, numeric));
  }
  return worst;
}

}  // namespace gc_detail

/// Runs the per-op finite-difference suite. `sabotage` perturbs the analytic
/// conv gradient so tests can confirm the harness detects broken backward
/// passes.
inline std::vector<GradCheckResult> run_gradcheck(double tol = 1e-4,
                                                  double tol2 = 1e-3,
                                                  double sabotage = 0.0) {
  using gc_detail::check_input_gradient;
  std::vector<GradCheckResult> results;
  Rng rng(42, 0);
  auto randt = [&](std::vector<int> shape) {
    Tensor t(shape);
    for (double& v : t.data) v = rng.gaussian() * 0.5 + 0.1;
    return t;
  };
  auto record = [&](const std::string& op, double err, double t) {
    results.push_back({op, err, t, err <= t});
  };

  // convolution: gradient w.r.t. input and kernel
  {
    Tensor k = randt({3, 3, 2, 3});
    auto build = [&](const NodePtr& x) {
      return sum_all(square(conv2d(x, constant(k), 1, 1)));
    };
    record("conv2d.input",
           check_input_gradient(randt({8, 8, 2}), build, 1e-3, 64, 7, sabotage),
           tol);
    Tensor x8 = randt({8, 8, 2});
    auto buildk = [&](const NodePtr& kk) {
      return sum_all(square(conv2d(constant(x8), kk, 1, 1)));
    };
    record("conv2d.kernel", check_input_gradient(randt({3, 3, 2, 3}), buildk),
           tol);
  }
  {
    Tensor k = randt({3, 3, 2, 3});
    auto build = [&](const NodePtr& x) {
      return sum_all(square(conv2d(x, constant(k), 2, 1)));
    };
    record("conv2d.stride2", check_input_gradient(randt({8, 8, 2}), build),
           tol);
  }
  {
    Tensor k = randt({3, 3, 2, 2});
    auto build = [&](const NodePtr& x) {
      return sum_all(square(conv2d(x, constant(k), 1, 2)));
    };
    record("conv2d.dilated", check_input_gradient(randt({8, 8, 2}), build),
           tol);
  }
  {
    Tensor k = randt({4, 4, 3, 2});
    auto build = [&](const NodePtr& x) {
      return sum_all(square(transposed_conv2d(x, constant(k))));
    };
    record("transposed_conv2d.input",
           check_input_gradient(randt({4, 4, 2}), build), tol);
    Tensor x4 = randt({4, 4, 2});
    auto buildk = [&](const NodePtr& kk) {
      return sum_all(square(transposed_conv2d(constant(x4), kk)));
    };
    record("transposed_conv2d.kernel",
           check_input_gradient(randt({4, 4, 3, 2}), buildk), tol);
  }
  {
    auto build = [](const NodePtr& x) {
      return sum_all(square(leaky_relu(x, 0.2)));
    };
    record("leaky_relu", check_input_gradient(randt({6, 6, 3}), build), tol);
  }
  {
    auto build = [](const NodePtr& x) { return sum_all(square(lrn(x))); };
    record("lrn", check_input_gradient(randt({5, 5, 4}), build), tol);
  }
  {
    Rng nrng(3, 3);
    Tensor noise = draw_gaussian_image(nrng, 5, 5);
    Tensor x5 = randt({5, 5, 3});
    auto build = [&](const NodePtr& s) {
      return sum_all(square(noise_add(constant(x5), constant(noise), s)));
    };
    record("noise_add.scales", check_input_gradient(randt({1, 1, 3}), build),
           tol);
    Tensor scales = randt({1, 1, 3});
    auto buildx = [&](const NodePtr& x) {
      return sum_all(square(noise_add(x, constant(noise), constant(scales))));
    };
    record("noise_add.input", check_input_gradient(x5, buildx), tol);
  }
  {
    Tensor b = randt({6, 6, 2});
    auto build = [&](const NodePtr& x) {
      return sum_all(square(concat({x, constant(b)})));
    };
    record("concat", check_input_gradient(randt({6, 6, 3}), build), tol);
  }
  {
    Tensor w = randt({3, 48});
    Tensor bias = randt({3, 1, 1});
    auto build = [&](const NodePtr& x) {
      return sum_all(square(dense(x, constant(w), constant(bias))));
    };
    record("dense.input", check_input_gradient(randt({4, 4, 3}), build), tol);
    Tensor x4 = randt({4, 4, 3});
    auto buildw = [&](const NodePtr& ww) {
      return sum_all(square(dense(constant(x4), ww, constant(bias))));
    };
    record("dense.weight", check_input_gradient(randt({3, 48}), buildw), tol);
  }
  {
    auto build = [](const NodePtr& x) {
      return sum_all(square(resize(x, 9, 5)));
    };
    record("bilinear_resize", check_input_gradient(randt({6, 4, 2}), build),
           tol);
  }
  {
    auto build = [](const NodePtr& x) {
      return sum_all(square(spatial_crop(x, 1, 2, 3, 3)));
    };
    record("spatial_crop", check_input_gradient(randt({6, 6, 2}), build), tol);
  }
  {
    auto build = [](const NodePtr& x) { return mean_all(square(x)); };
    record("mean_square", check_input_gradient(randt({5, 5, 2}), build), tol);
    auto builda = [](const NodePtr& x) { return sum_all(abs_node(x)); };
    // keep values away from the kink at 0 so central differences are valid
    Tensor xa = randt({5, 5, 2});
    for (double& v : xa.data) v += v >= 0 ? 0.1 : -0.1;
    record("abs", check_input_gradient(xa, builda), tol);
    auto builds = [](const NodePtr& x) {
      return sum_all(sqrt_node(add_scalar(square(x), 0.5)));
    };
    record("sqrt", check_input_gradient(randt({5, 5, 2}), builds), tol);
    auto buildm = [](const NodePtr& x) { return max_all(x); };
    record("max", check_input_gradient(randt({5, 5, 2}), buildm), tol);
    auto buildmin = [](const NodePtr& x) { return min_all(x); };
    record("min", check_input_gradient(randt({5, 5, 2}), buildmin), tol);
    auto buildc = [](const NodePtr& x) {
      return sum_all(clamp_node(x, -0.4, 0.9));
    };
    record("clamp", check_input_gradient(randt({5, 5, 2}), buildc), tol);
  }

  // full generator graph: d loss / d input on a 16x16 toy configuration
  {
    GeneratorConfig gcfg;
    gcfg.enc_channels = {4, 6, 8};
    gcfg.dilation = {1, 2, 2, 4, 4, 4, 4};
    gcfg.noise_mode = NoiseMode::kOff;
    ParamStore store;
    Rng init(11, 0);
    init_generator_params(store, gcfg, init);
    auto build = [&](const NodePtr& x) {
      Rng noise(1, 1);
      return sum_all(square(generator_forward(x, store, gcfg, noise, false)));
    };
    // a smaller step than the per-op default: deep stacks of leaky relus have
    // activation-sign flips within +-1e-3 of the base point
    record("generator.graph",
           check_input_gradient(randt({16, 16, 4}), build, 1e-4, 24), tol);
  }
  // full critic graph: d output / d image
  {
    CriticConfig ccfg;
    ccfg.base_resolution = 16;
    ccfg.global_channels = {4, 6, 8, 8};
    ccfg.local_channels = {4, 6, 8};
    ccfg.local_pad = 2;
    ParamStore store;
    Rng init(12, 0);
    init_critic_params(store, ccfg, init);
    Tensor cond = randt({16, 16, 4});
    Tensor mask = Tensor::zeros({16, 16, 1});
    for (int y = 4; y < 12; ++y)
      for (int x = 4; x < 12; ++x) mask.at(y, x, 0) = 1.0;
    auto build = [&](const NodePtr& y) {
      return sum_all(
          critic_forward(y, constant(cond), mask, store, ccfg, false));
    };
    record("critic.graph",
           check_input_gradient(randt({16, 16, 3}), build, 1e-4, 24), tol);
  }
  // second order: gradient-penalty derivative w.r.t. critic weights on a tiny
  // two-layer critic over 4x4 inputs
  {
    Rng r2(21, 0);
    Tensor x0 = randt({4, 4, 1});
    Tensor k0 = randt({3, 3, 1, 2});
    Tensor w0 = randt({1, 32});
    auto critic2 = [&](const NodePtr& img, const NodePtr& k,
                       const NodePtr& w) {
      NodePtr h = leaky_relu(conv2d(img, k, 1, 1), 0.2);
      return dense(h, w, constant(Tensor::zeros({1, 1, 1})));
    };
    auto build_k = [&](const NodePtr& k) {
      NodePtr img = leaf(x0);
      NodePtr d = critic2(img, k, constant(w0));
      NodePtr grad = input_gradient_graph(d, img);
      NodePtr norm = sqrt_node(add_scalar(sum_all(square(grad)), 1e-24));
      return square(add_scalar(norm, -1.0));
    };
    record("gp.second_order.kernel",
           check_input_gradient(k0, build_k, 1e-3, 18), tol2);
    auto build_w = [&](const NodePtr& w) {
      NodePtr img = leaf(x0);
      NodePtr d = critic2(img, constant(k0), w);
      NodePtr grad = input_gradient_graph(d, img);
      NodePtr norm = sqrt_node(add_scalar(sum_all(square(grad)), 1e-24));
      return square(add_scalar(norm, -1.0));
    };
    record("gp.second_order.dense",
           check_input_gradient(w0, build_w, 1e-3, 18), tol2);
  }
  return results;
}

}  // namespace smartpaste

#endif  // SMARTPASTE_GRADCHECK_HPP
