#include <doctest.h>

#include <cmath>

#include "smartpaste/color.hpp"
#include "smartpaste/rng.hpp"
#include "smartpaste/tensor.hpp"

using namespace smartpaste;

TEST_CASE("rgb_to_hsv definitional values") {
  Tensor img({1, 3, 3});
  // pure red, mid gray, pure green
  img.at(0, 0, 0) = 1;
  img.at(0, 1, 0) = img.at(0, 1, 1) = img.at(0, 1, 2) = 0.5;
  img.at(0, 2, 1) = 1;
  Tensor hsv = rgb_to_hsv(img);
  CHECK(hsv.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(hsv.at(0, 0, 1) == doctest::Approx(1.0));
  CHECK(hsv.at(0, 0, 2) == doctest::Approx(1.0));
  CHECK(hsv.at(0, 1, 1) == doctest::Approx(0.0));
  CHECK(hsv.at(0, 1, 2) == doctest::Approx(0.5));
  CHECK(hsv.at(0, 2, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(hsv.at(0, 2, 1) == doctest::Approx(1.0));
  CHECK(hsv.at(0, 2, 2) == doctest::Approx(1.0));
}

TEST_CASE("hsv_to_rgb inverts and zero saturation is gray") {
  Tensor hsv({1, 2, 3});
  hsv.at(0, 0, 0) = 0;
  hsv.at(0, 0, 1) = 1;
  hsv.at(0, 0, 2) = 1;
  hsv.at(0, 1, 0) = 0.77;
  hsv.at(0, 1, 1) = 0;
  hsv.at(0, 1, 2) = 0.4;
  Tensor rgb = hsv_to_rgb(hsv);
  CHECK(rgb.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(rgb.at(0, 0, 1) == doctest::Approx(0.0));
  CHECK(rgb.at(0, 1, 0) == doctest::Approx(0.4));
  CHECK(rgb.at(0, 1, 1) == doctest::Approx(0.4));
  CHECK(rgb.at(0, 1, 2) == doctest::Approx(0.4));
}

TEST_CASE("hsv round trip on random pixels stays within 1e-6") {
  Rng rng(123, 0);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    Tensor px({1, 1, 3});
    for (double& v : px.data) v = rng.next_double();
    Tensor back = hsv_to_rgb(rgb_to_hsv(px));
    for (int c = 0; c < 3; ++c)
      worst = std::max(worst, std::abs(back.at(0, 0, c) - px.at(0, 0, c)));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("draw_uniform degenerate interval and moments") {
  Rng rng(7, 1);
  CHECK(rng.uniform(0.7, 0.7) == doctest::Approx(0.7));
  double sum = 0;
  for (int i = 0; i < 100000; ++i) sum += rng.uniform(0.5, 1.5);
  CHECK(sum / 100000 == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("rng determinism and stream independence") {
  Rng a(42, 3), b(42, 3), c(42, 4);
  bool same = true, differs = false;
  for (int i = 0; i < 100; ++i) {
    uint64_t va = a.next_u64();
    same = same && va == b.next_u64();
    differs = differs || va != c.next_u64();
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("gaussian image moments, shape, determinism") {
  Rng rng(9, 2);
  Tensor img = draw_gaussian_image(rng, 512, 512);
  CHECK(img.shape == std::vector<int>{512, 512, 1});
  double mean = img.mean();
  double var = 0;
  for (double v : img.data) var += (v - mean) * (v - mean);
  var /= double(img.size());
  CHECK(std::abs(mean) <= 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));

  Rng rng2(9, 2);
  Tensor img2 = draw_gaussian_image(rng2, 512, 512);
  CHECK(img.data == img2.data);
}

TEST_CASE("bilinear_resize halves dimensions as configured") {
  Rng rng(1, 1);
  Tensor img({8, 16, 3});
  for (double& v : img.data) v = rng.next_double();
  Tensor half = bilinear_resize(img, 4, 8);
  CHECK(half.h() == 4);
  CHECK(half.w() == 8);
  // corner values align exactly under align-corners mapping
  CHECK(half.at(0, 0, 0) == doctest::Approx(img.at(0, 0, 0)));
  CHECK(half.at(3, 7, 2) == doctest::Approx(img.at(7, 15, 2)));
}
