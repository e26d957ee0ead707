#include <doctest.h>

#include <cmath>

#include "smartpaste/geometry.hpp"

using namespace smartpaste;

TEST_CASE("solve_homography identity and translation") {
  auto src = image_corners(512, 512);
  Homography id = solve_homography(src, src);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(id.m[i][j] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));

  std::array<Point, 4> dst;
  for (int i = 0; i < 4; ++i) dst[i] = {src[i].x + 5, src[i].y};
  Homography t = solve_homography(src, dst);
  CHECK(t.m[0][2] == doctest::Approx(5.0));
  CHECK(t.m[0][0] == doctest::Approx(1.0));
  CHECK(t.m[2][0] == doctest::Approx(0.0));
  Point p = project(t, {0, 0});
  CHECK(p.x == doctest::Approx(5.0));
  CHECK(p.y == doctest::Approx(0.0));
}

TEST_CASE("random jitter reprojection is exact") {
  Rng rng(77, 0);
  auto src = image_corners(512, 512);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::array<Point, 4> dst;
    for (int i = 0; i < 4; ++i)
      dst[i] = {src[i].x + rng.uniform(-15, 15),
                src[i].y + rng.uniform(-15, 15)};
    Homography h = solve_homography(src, dst);
    for (int i = 0; i < 4; ++i) {
      Point p = project(h, src[i]);
      worst = std::max(worst, std::hypot(p.x - dst[i].x, p.y - dst[i].y));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("project inverse round trip") {
  Rng rng(78, 0);
  auto src = image_corners(256, 256);
  std::array<Point, 4> dst;
  for (int i = 0; i < 4; ++i)
    dst[i] = {src[i].x + rng.uniform(-10, 10), src[i].y + rng.uniform(-10, 10)};
  Homography h = solve_homography(src, dst);
  Homography hinv = h.inverse();
  for (int trial = 0; trial < 50; ++trial) {
    Point p{rng.uniform(0, 255), rng.uniform(0, 255)};
    Point back = project(hinv, project(h, p));
    CHECK(std::abs(back.x - p.x) <= 1e-9);
    CHECK(std::abs(back.y - p.y) <= 1e-9);
  }
}

TEST_CASE("warp identity is bit exact") {
  Rng rng(79, 0);
  Tensor img({16, 16, 3});
  for (double& v : img.data) v = rng.next_double();
  Tensor out = warp_image(img, Homography::identity());
  CHECK(out.data == img.data);
}

TEST_CASE("integer translation shifts columns with edge clamp") {
  Rng rng(80, 0);
  Tensor img({8, 8, 1});
  for (double& v : img.data) v = rng.next_double();
  auto src = image_corners(8, 8);
  std::array<Point, 4> dst;
  for (int i = 0; i < 4; ++i) dst[i] = {src[i].x + 1, src[i].y};
  Homography h = solve_homography(src, dst);
  Tensor out = warp_image(img, h);
  for (int y = 0; y < 8; ++y) {
    CHECK(out.at(y, 0, 0) == doctest::Approx(img.at(y, 0, 0)));  // clamped
    for (int x = 1; x < 8; ++x)
      CHECK(out.at(y, x, 0) == doctest::Approx(img.at(y, x - 1, 0)));
  }
}

TEST_CASE("warp then inverse warp recovers a smooth gradient interior") {
  Tensor img({64, 64, 1});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      img.at(y, x, 0) = (x + y) / 126.0;
  Rng rng(81, 0);
  auto src = image_corners(64, 64);
  std::array<Point, 4> dst;
  for (int i = 0; i < 4; ++i)
    dst[i] = {src[i].x + rng.uniform(-4, 4), src[i].y + rng.uniform(-4, 4)};
  Homography h = solve_homography(src, dst);
  Tensor warped = warp_image(img, h);
  Tensor back = warp_image(warped, h.inverse());
  double worst = 0;
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 56; ++x)
      worst = std::max(worst, std::abs(back.at(y, x, 0) - img.at(y, x, 0)));
  CHECK(worst <= 2.0 / 255.0);
}

TEST_CASE("warp preserves value range") {
  Rng rng(82, 0);
  Tensor img({32, 32, 3});
  for (double& v : img.data) v = rng.next_double();
  auto [out, h] = geometric_transform(img, 12.0, rng);
  CHECK(out.min() >= img.min());
  CHECK(out.max() <= img.max());
}

TEST_CASE("geometric_transform sigma zero is identity") {
  Rng rng(83, 0);
  Tensor img({16, 16, 3});
  for (double& v : img.data) v = rng.next_double();
  auto [out, h] = geometric_transform(img, 0.0, rng);
  CHECK(out.data == img.data);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(h.m[i][j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("geometric_transform displacement bound and determinism") {
  // interior displacement stays within ~2*sigma over many trials
  Rng rng(84, 0);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto src = image_corners(512, 512);
    std::array<Point, 4> dst;
    for (int i = 0; i < 4; ++i)
      dst[i] = {src[i].x + rng.uniform(-15, 15),
                src[i].y + rng.uniform(-15, 15)};
    Homography h = solve_homography(src, dst);
    for (double fy : {0.25, 0.5, 0.75})
      for (double fx : {0.25, 0.5, 0.75}) {
        Point p{511 * fx, 511 * fy};
        Point q = project(h, p);
        worst = std::max(worst, std::hypot(q.x - p.x, q.y - p.y));
      }
  }
  CHECK(worst <= 30.0);

  Rng r1(99, 5), r2(99, 5);
  Tensor img({16, 16, 3});
  for (double& v : img.data) v = r1.next_double();
  Rng s1(50, 1), s2(50, 1);
  auto [o1, h1] = geometric_transform(img, 5.0, s1);
  auto [o2, h2] = geometric_transform(img, 5.0, s2);
  CHECK(o1.data == o2.data);
}

TEST_CASE("sigma monotonicity of expected displacement") {
  auto mean_disp = [](double sigma) {
    Rng rng(uint64_t(1000 + sigma), 0);
    double total = 0;
    int count = 0;
    auto src = image_corners(512, 512);
    for (int trial = 0; trial < 1000; ++trial) {
      std::array<Point, 4> dst;
      for (int i = 0; i < 4; ++i)
        dst[i] = {src[i].x + rng.uniform(-sigma, sigma),
                  src[i].y + rng.uniform(-sigma, sigma)};
      if (sigma == 0) {
        count += 1;
        continue;
      }
      Homography h = solve_homography(src, dst);
      Point p{255.5, 255.5};
      Point q = project(h, p);
      total += std::hypot(q.x - p.x, q.y - p.y);
      count += 1;
    }
    return total / count;
  };
  double d0 = mean_disp(0), d5 = mean_disp(5), d10 = mean_disp(10),
         d15 = mean_disp(15);
  CHECK(d0 <= d5);
  CHECK(d5 <= d10);
  CHECK(d10 <= d15);
}

TEST_CASE("degenerate correspondences raise") {
  std::array<Point, 4> collinear = {{{0, 0}, {1, 1}, {2, 2}, {3, 3}}};
  CHECK_THROWS_AS(solve_homography(collinear, collinear),
                  DegenerateGeometryError);
}
