#include <doctest.h>

#include <cmath>

#include "smartpaste/models.hpp"

using namespace smartpaste;

namespace {

GeneratorConfig tiny_gen(NoiseMode mode = NoiseMode::kOff) {
  GeneratorConfig cfg;
  cfg.enc_channels = {4, 6, 8};
  cfg.dilation = {1, 1, 2, 2, 4, 4, 4};
  cfg.noise_mode = mode;
  return cfg;
}

CriticConfig tiny_critic(int res = 32) {
  CriticConfig cfg;
  cfg.base_resolution = res;
  cfg.global_channels = {4, 6, 8, 8};
  cfg.local_channels = {4, 6, 8};
  return cfg;
}

Tensor rand_image(Rng& rng, int h, int w, int c) {
  Tensor t({h, w, c});
  for (double& v : t.data) v = rng.next_double();
  return t;
}

Tensor center_mask(int h, int w) {
  Tensor m = Tensor::zeros({h, w, 1});
  for (int y = h / 4; y < 3 * h / 4; ++y)
    for (int x = w / 4; x < 3 * w / 4; ++x) m.at(y, x, 0) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("generator output shape matches input for square and wide inputs") {
  GeneratorConfig cfg = tiny_gen();
  ParamStore store;
  Rng init(1, 0);
  init_generator_params(store, cfg, init);
  for (auto [h, w] : {std::pair{32, 32}, std::pair{32, 64}}) {
    Rng noise(2, 0), data(3, 0);
    NodePtr x = constant(rand_image(data, h, w, 4));
    NodePtr out = generator_forward(x, store, cfg, noise);
    CHECK(out->value.h() == h);
    CHECK(out->value.w() == w);
    CHECK(out->value.c() == 3);
  }
  Rng noise(2, 0), data(3, 0);
  CHECK_THROWS(generator_forward(constant(rand_image(data, 30, 30, 4)), store,
                                 cfg, noise));
}

TEST_CASE("zero parameters give a zero residual") {
  GeneratorConfig cfg = tiny_gen();
  ParamStore store;
  Rng init(1, 0);
  init_generator_params(store, cfg, init);
  for (auto& [name, p] : store.params) p.value.fill(0.0);
  Rng noise(2, 0), data(3, 0);
  NodePtr x = constant(rand_image(data, 16, 16, 4));
  NodePtr out = generator_forward(x, store, cfg, noise);
  for (double v : out->value.data) CHECK(v == 0.0);
}

TEST_CASE("composite_output respects the mask bit-exactly") {
  Rng rng(5, 0);
  Tensor residual = rand_image(rng, 8, 8, 3);
  Tensor source = rand_image(rng, 8, 8, 3);
  Tensor context = rand_image(rng, 8, 8, 3);

  Tensor ones = Tensor::full({8, 8, 1}, 1.0);
  NodePtr all_gen =
      composite_output(constant(residual), source, context, ones);
  for (int64_t i = 0; i < residual.size(); ++i)
    CHECK(all_gen->value.data[i] ==
          doctest::Approx(residual.data[i] + source.data[i]));

  Tensor zeros = Tensor::zeros({8, 8, 1});
  NodePtr all_ctx =
      composite_output(constant(residual), source, context, zeros);
  CHECK(all_ctx->value.data == context.data);

  Tensor m = center_mask(8, 8);
  NodePtr mixed = composite_output(constant(residual), source, context, m);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) {
        double want = m.at(y, x, 0) != 0.0
                          ? residual.at(y, x, c) + source.at(y, x, c)
                          : context.at(y, x, c);
        CHECK(mixed->value.at(y, x, c) == want);
      }
}

TEST_CASE("mask_bbox pads and clamps; empty mask covers the image") {
  Tensor m = Tensor::zeros({32, 32, 1});
  m.at(10, 12, 0) = 1.0;
  m.at(15, 20, 0) = 1.0;
  BBox b = mask_bbox(m, 2);
  CHECK(b.y0 == 8);
  CHECK(b.x0 == 10);
  CHECK(b.h == 10);
  CHECK(b.w == 13);

  BBox clamped = mask_bbox(m, 100);
  CHECK(clamped.y0 == 0);
  CHECK(clamped.h == 32);

  Tensor empty = Tensor::zeros({32, 32, 1});
  BBox full = mask_bbox(empty, 4);
  CHECK(full.y0 == 0);
  CHECK(full.h == 32);
  CHECK(full.w == 32);
}

TEST_CASE("critic produces a finite scalar and rejects wrong sizes") {
  CriticConfig cfg = tiny_critic(32);
  ParamStore store;
  Rng init(7, 0);
  init_critic_params(store, cfg, init);
  Rng data(8, 0);
  NodePtr y = constant(rand_image(data, 32, 32, 3));
  NodePtr cond = constant(rand_image(data, 32, 32, 4));
  Tensor mask = center_mask(32, 32);
  NodePtr d = critic_forward(y, cond, mask, store, cfg);
  CHECK(d->value.size() == 1);
  CHECK(std::isfinite(d->value.data[0]));

  NodePtr small = constant(rand_image(data, 16, 16, 3));
  NodePtr cond_small = constant(rand_image(data, 16, 16, 4));
  CHECK_THROWS(critic_forward(small, cond_small, center_mask(16, 16), store,
                              cfg));
}

TEST_CASE("critic depends on the local mask neighborhood") {
  CriticConfig cfg = tiny_critic(32);
  ParamStore store;
  Rng init(9, 0);
  init_critic_params(store, cfg, init);
  Rng data(10, 0);
  NodePtr y = constant(rand_image(data, 32, 32, 3));
  NodePtr cond = constant(rand_image(data, 32, 32, 4));
  Tensor m1 = Tensor::zeros({32, 32, 1});
  m1.at(4, 4, 0) = 1.0;
  Tensor m2 = Tensor::zeros({32, 32, 1});
  m2.at(28, 28, 0) = 1.0;
  double d1 = critic_forward(y, cond, m1, store, cfg)->value.data[0];
  double d2 = critic_forward(y, cond, m2, store, cfg)->value.data[0];
  CHECK(d1 != d2);
}

TEST_CASE("noise modes: off is deterministic, layers varies with the stream") {
  ParamStore store;
  Rng init(11, 0);
  GeneratorConfig off = tiny_gen(NoiseMode::kOff);
  init_generator_params(store, off, init);
  Rng data(12, 0);
  Tensor x = rand_image(data, 16, 16, 4);
  Rng n1(1, 1), n2(2, 2);
  NodePtr a = generator_forward(constant(x), store, off, n1);
  NodePtr b = generator_forward(constant(x), store, off, n2);
  CHECK(a->value.data == b->value.data);

  // with layer noise enabled, give the noise scales nonzero values
  GeneratorConfig layers = tiny_gen(NoiseMode::kLayers);
  for (auto& [name, p] : store.params)
    if (name.find(".noise") != std::string::npos) p.value.fill(0.1);
  Rng n3(1, 1), n4(2, 2), n5(1, 1);
  NodePtr c = generator_forward(constant(x), store, layers, n3);
  NodePtr d = generator_forward(constant(x), store, layers, n4);
  NodePtr e = generator_forward(constant(x), store, layers, n5);
  CHECK(c->value.data != d->value.data);
  CHECK(c->value.data == e->value.data);
}

TEST_CASE("input-channel noise mode consumes a 5-channel first conv") {
  GeneratorConfig cfg = tiny_gen(NoiseMode::kInputChannel);
  ParamStore store;
  Rng init(13, 0);
  init_generator_params(store, cfg, init);
  CHECK(store.params.at("g.enc0.down.k").value.shape[2] == 5);
  Rng data(14, 0), noise(15, 0);
  NodePtr out =
      generator_forward(constant(rand_image(data, 16, 16, 4)), store, cfg,
                        noise);
  CHECK(out->value.c() == 3);
}
