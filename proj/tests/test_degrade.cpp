#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "fixtures.hpp"
#include "hsialign/degrade.hpp"
#include "hsialign/error.hpp"

using namespace hsialign;

namespace {

HyperCube constant_cube(int h, int w, int b, float v) {
  return {h, w, uniform_wavelengths(b, 400, 700), std::vector<float>(static_cast<std::size_t>(h) * w * b, v)};
}

bool plane_zero(const HyperCube& c, int b) {
  for (float v : c.plane(b))
    if (v != 0.0f) return false;
  return true;
}

bool same_bits(const HyperCube& a, const HyperCube& b) {
  return a.same_shape(b) && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

double mean(const HyperCube& c) {
  double s = 0;
  for (float v : c.data()) s += v;
  return s / static_cast<double>(c.size());
}

}  // namespace

TEST_CASE("robust ceil") {
  CHECK(robust_ceil(0.3 * 31) == 10);
  CHECK(robust_ceil(0.9 * 100) == 90);
  CHECK(robust_ceil(0.9 * 64 * 64) == 3687);
  CHECK(robust_ceil(2.0000000001) == 2);
  CHECK(robust_ceil(2.01) == 3);
}

TEST_CASE("band miss and inpaint mask counts") {
  const HyperCube c = fixtures::random_cube(16, 16, 31, 1);
  DegradationSpec s;
  s.kind = DegradationKind::kBandMiss;
  s.band_miss_ratio = 0.3;
  s.seed = 5;
  const HyperCube d = apply_degradation(c, s);
  int zero = 0;
  for (int b = 0; b < 31; ++b) {
    if (plane_zero(d, b)) {
      ++zero;
    } else {
      CHECK(std::equal(d.plane(b).begin(), d.plane(b).end(), c.plane(b).begin()));
    }
  }
  CHECK(zero == 10);

  s.kind = DegradationKind::kInpaintMask;
  s.mask_ratio = 0.9;
  for (int side : {10, 16, 33}) {
    const HyperCube m = apply_degradation(fixtures::random_cube(side, side, 5, 2), s);
    std::size_t sites = 0;
    for (std::size_t p = 0; p < m.pixels(); ++p) {
      bool all = true;
      for (int b = 0; b < 5; ++b) all = all && m.plane(b)[p] == 0.0f;
      sites += all;
    }
    CHECK(static_cast<long long>(sites) == static_cast<long long>(std::ceil(0.9 * side * side - 1e-9)));
  }
}

TEST_CASE("gaussian noise") {
  const HyperCube c = fixtures::random_cube(8, 8, 6, 3);
  DegradationSpec s;
  s.sigma_min = s.sigma_max = 0.0;
  CHECK(same_bits(apply_degradation(c, s), c));
  s.sigma_min = 10;
  s.sigma_max = 70;
  s.seed = 9;
  const HyperCube a = apply_degradation(c, s), b = apply_degradation(c, s);
  CHECK(same_bits(a, b));
  CHECK_FALSE(same_bits(a, c));
  s.seed = 10;
  CHECK_FALSE(same_bits(apply_degradation(c, s), a));

  // Per-band sigma stays inside [10, 70] / 255 on a mid-grey cube.
  const HyperCube grey = constant_cube(64, 64, 8, 0.5f);
  const HyperCube n = apply_degradation(grey, s);
  for (int band = 0; band < 8; ++band) {
    double ss = 0;
    for (float v : n.plane(band)) ss += (v - 0.5) * (v - 0.5);
    const double sigma = std::sqrt(ss / 4096.0) * 255.0;
    CHECK(sigma > 8.5);
    CHECK(sigma < 72.0);
  }
}

TEST_CASE("complex noise band families are disjoint thirds") {
  const HyperCube c = constant_cube(20, 40, 31, 0.5f);
  DegradationSpec s;
  s.kind = DegradationKind::kComplex;
  s.sigma_min = s.sigma_max = 0.0;
  s.seed = 4;
  const HyperCube d = apply_degradation(c, s);
  int impulse = 0, stripe = 0, deadline = 0, clean = 0;
  for (int b = 0; b < 31; ++b) {
    std::set<float> values(d.plane(b).begin(), d.plane(b).end());
    const bool has_one = values.count(1.0f) > 0;
    const bool off_grid = std::any_of(values.begin(), values.end(),
                                      [](float v) { return v != 0.0f && v != 0.5f && v != 1.0f; });
    int zero_cols = 0;
    for (int x = 0; x < 40; ++x) {
      bool col = true;
      for (int y = 0; y < 20; ++y) col = col && d.at(b, y, x) == 0.0f;
      zero_cols += col;
    }
    if (off_grid) {
      ++stripe;
      CHECK_FALSE(has_one);
    } else if (has_one) {
      ++impulse;
    } else if (zero_cols > 0) {
      ++deadline;
      CHECK(zero_cols >= 2);  // 5-15% of 40 columns
      CHECK(zero_cols <= 6);
    } else {
      ++clean;
      CHECK(values.size() == 1);
    }
  }
  CHECK(impulse == 10);
  CHECK(stripe == 10);
  CHECK(deadline == 10);
  CHECK(clean == 1);
}

TEST_CASE("bicubic and blur") {
  const HyperCube flat = constant_cube(17, 13, 3, 0.625f);
  const HyperCube down = bicubic_downsample(flat, 4);
  CHECK(down.height() == 5);
  CHECK(down.width() == 4);
  for (float v : down.data()) CHECK(v == doctest::Approx(0.625f).epsilon(1e-6));
  DegradationSpec s;
  s.kind = DegradationKind::kSrBicubic;
  CHECK(apply_degradation(flat, s).height() == 5);

  const HyperCube c = fixtures::random_cube(40, 36, 3, 5);
  const HyperCube disk = disk_blur(c, 15);
  CHECK(std::abs(mean(disk) - mean(c)) <= 1e-6);
  const HyperCube gauss = gaussian_blur(c, 5.0, 15);
  CHECK(std::abs(mean(gauss) - mean(c)) <= 1e-6);
  const HyperCube flat_blur = disk_blur(flat, 3);
  for (float v : flat_blur.data()) CHECK(v == doctest::Approx(0.625f).epsilon(1e-6));
  // Blur smooths: variance drops.
  auto var = [](const HyperCube& x) {
    const double m = mean(x);
    double s2 = 0;
    for (float v : x.data()) s2 += (v - m) * (v - m);
    return s2 / x.size();
  };
  CHECK(var(disk) < 0.1 * var(c));
}

TEST_CASE("degradation spec json") {
  DegradationSpec s;
  s.kind = DegradationKind::kBlur;
  s.blur_radius = 7;
  s.seed = 99;
  CHECK(degradation_from_json(to_json(s)) == s);
  for (auto k : {DegradationKind::kGaussianNonIid, DegradationKind::kComplex, DegradationKind::kSrBicubic,
                 DegradationKind::kBlur, DegradationKind::kBandMiss, DegradationKind::kInpaintMask})
    CHECK(degradation_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(degradation_from_json({{"nope", 1}}), InvalidInput);
  CHECK_THROWS_AS(degradation_kind_from_string("jpeg"), InvalidInput);
  DegradationSpec bad;
  bad.sigma_min = 50;
  bad.sigma_max = 10;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("pair set arithmetic") {
  std::vector<HyperCube> proxies{fixtures::random_cube(8, 8, 4, 1), fixtures::random_cube(8, 8, 4, 2)};
  std::vector<std::vector<HyperCube>> synth(2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) synth[i].push_back(fixtures::random_cube(8, 8, 4, 10 + 3 * i + j));
  DegradationSpec spec;
  spec.seed = 7;
  const PairSet set = build_pairs(proxies, synth, spec, 3.0);
  CHECK(set.pairs.size() == 8);
  CHECK(set.count(Provenance::kProxy) == 2);
  CHECK(set.count(Provenance::kGenerated) == 6);
  CHECK(set.manifest()["pairs"].size() == 8);
  // Round robin: guide j of every proxy before guide j + 1.
  CHECK(set.pairs[2].proxy_index == 0);
  CHECK(set.pairs[3].proxy_index == 1);
  CHECK(set.pairs[4].guide_index == 1);
  for (const auto& p : set.pairs) CHECK(same_bits(apply_degradation(p.clean, p.spec), p.degraded));
  CHECK(same_bits(set.pairs[5].clean, synth[1][1]));

  const PairSet none = build_pairs(proxies, synth, spec, 0.0);
  CHECK(none.pairs.size() == 2);
  CHECK(none.count(Provenance::kGenerated) == 0);
  CHECK_THROWS_AS(build_pairs(proxies, synth, spec, 4.0), InvalidInput);
}

TEST_CASE("synthetic guides") {
  const HyperCube c = make_random_texture_cube(32, 32, 31, 6);
  const RgbImage rgb = project_rgb(c);
  const SyntheticGuide id = make_synthetic_guide(rgb, Affine::identity(), {}, 1);
  CHECK(std::equal(id.image.data().begin(), id.image.data().end(), rgb.data().begin()));
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const auto& s = id.source[y * 32 + x];
      CHECK(s[0] == y);
      CHECK(s[1] == x);
    }

  const SyntheticGuide sh = make_synthetic_guide(rgb, Affine::translation(0, 2), {}, 1);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const std::size_t u = y * 32 + x;
      CHECK(sh.source[u][1] == x - 2);
      CHECK(static_cast<bool>(sh.in_bounds[u]) == (x >= 2));
      if (x >= 2) CHECK(sh.image.at(1, y, x) == rgb.at(1, y, x - 2));
    }

  const double deg = 10.0, cy = 15.5, cx = 15.5;
  const SyntheticGuide rot = make_synthetic_guide(rgb, Affine::rotation(deg, cy, cx), {}, 1);
  const double r = deg * std::numbers::pi / 180.0;
  double worst = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const std::size_t u = y * 32 + x;
      if (!rot.in_bounds[u]) continue;
      // Inverse rotation about the center.
      const double sy = cy + std::cos(r) * (y - cy) + std::sin(r) * (x - cx);
      const double sx = cx - std::sin(r) * (y - cy) + std::cos(r) * (x - cx);
      worst = std::max(worst, std::hypot(rot.source[u][0] - sy, rot.source[u][1] - sx));
    }
  CHECK(worst <= 0.5);
  CHECK(worst <= 1e-9);

  Affine singular;
  singular.m = {1, 2, 2, 4};
  CHECK_THROWS_AS(make_synthetic_guide(rgb, singular, {}, 1), InvalidInput);

  const SyntheticGuide j1 = make_synthetic_guide(rgb, Affine::identity(), {0.1, 0.05}, 3);
  const SyntheticGuide j2 = make_synthetic_guide(rgb, Affine::identity(), {0.1, 0.05}, 3);
  CHECK(std::equal(j1.image.data().begin(), j1.image.data().end(), j2.image.data().begin()));
  CHECK_FALSE(std::equal(j1.image.data().begin(), j1.image.data().end(), rgb.data().begin()));
}

TEST_CASE("random texture") {
  const HyperCube a = make_random_texture_cube(24, 20, 31, 8);
  const HyperCube b = make_random_texture_cube(24, 20, 31, 8);
  CHECK(same_bits(a, b));
  CHECK_FALSE(same_bits(a, make_random_texture_cube(24, 20, 31, 9)));
  for (float v : a.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK(a.clamped_count() == 0);
}
