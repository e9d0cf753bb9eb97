#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hsialign/descriptor.hpp"
#include "hsialign/error.hpp"
#include "hsialign/retrieval.hpp"

using namespace hsialign;

namespace {

RgbImage constant_rgb(int h, int w, double r, double g, double b) {
  std::vector<double> v;
  for (double c : {r, g, b}) v.insert(v.end(), static_cast<std::size_t>(h) * w, c);
  return {h, w, v};
}

}  // namespace

TEST_CASE("chroma") {
  const double eps = 1e-6;
  const Field grey = chroma(constant_rgb(1, 1, 0.2, 0.2, 0.2), eps);
  for (int c = 0; c < 3; ++c) CHECK(grey.at(c, 0, 0) == doctest::Approx(0.2 / (0.6 + eps)).epsilon(1e-15));
  const Field black = chroma(constant_rgb(1, 1, 0, 0, 0), eps);
  for (int c = 0; c < 3; ++c) CHECK(black.at(c, 0, 0) == 0.0);
  const Field red = chroma(constant_rgb(1, 1, 1, 0, 0), eps);
  CHECK(std::abs(red.at(0, 0, 0) - 1.0) <= eps);
  CHECK(red.at(1, 0, 0) == 0.0);
  const Field any = chroma(fixtures::random_rgb(5, 5, 3), eps);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) CHECK(any.at(0, y, x) + any.at(1, y, x) + any.at(2, y, x) < 1.0);
}

TEST_CASE("gradients") {
  const Field flat = gradients(constant_rgb(4, 5, 0.3, 0.6, 0.9));
  for (double v : flat.data()) CHECK(v == 0.0);
  const Field single = gradients(constant_rgb(1, 1, 0.1, 0.2, 0.3));
  CHECK(single.channels() == 6);
  for (double v : single.data()) CHECK(v == 0.0);

  // Horizontal ramp I = x / (W - 1), W = 4.
  std::vector<double> v;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) v.push_back(x / 3.0);
  const Field g = gradients(RgbImage(3, 4, v));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) {
        CHECK(g.at(c, y, x) == 0.0);  // y differences
        const double expect = x == 3 ? 0.0 : 1.0 / 3.0;
        CHECK(g.at(3 + c, y, x) == doctest::Approx(expect).epsilon(1e-15));
      }
}

TEST_CASE("descriptor layout") {
  const RgbImage img = fixtures::random_rgb(6, 7, 11);
  DescriptorConfig one;
  one.patch_side = 1;
  const DescriptorField d1 = build_descriptors(img, one);
  CHECK(d1.dim() == kDescriptorChannels);
  const Field ch = chroma(img, one.eps);
  const Field gr = gradients(img);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x) {
      const auto d = d1.at(static_cast<std::size_t>(y) * 7 + x);
      for (int c = 0; c < 3; ++c) {
        CHECK(d[c] == img.at(c, y, x));
        CHECK(d[3 + c] == doctest::Approx(one.chroma_weight * ch.at(c, y, x)).epsilon(1e-15));
      }
      for (int c = 0; c < 6; ++c)
        CHECK(d[6 + c] == doctest::Approx(one.gradient_weight * gr.at(c, y, x)).epsilon(1e-15));
    }

  const DescriptorConfig def;
  const DescriptorField d5 = build_descriptors(img, def);
  CHECK(d5.dim() == 300);
  // Replicate padding: the top-left patch entry of pixel (0,0) is pixel (0,0).
  const auto corner = d5.at(0);
  CHECK(corner[0] == img.at(0, 0, 0));
  // Channel-major, then patch row, then column: (c=1, py=2, px=4) of pixel
  // (3,3) is G at (3, 5).
  CHECK(d5.at(3 * 7 + 3)[(1 * 5 + 2) * 5 + 4] == img.at(1, 3, 5));

  const DescriptorField dc = build_descriptors(constant_rgb(5, 5, 0.4, 0.4, 0.4), def);
  for (std::size_t p = 0; p < dc.pixels(); ++p) {
    const auto d = dc.at(p);
    for (int i = 0; i < 75; ++i) CHECK(d[i] == 0.4);
    for (int i = 150; i < 300; ++i) CHECK(d[i] == 0.0);
  }
  DescriptorConfig bad;
  bad.patch_side = 4;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}
