#pragma once

// Small deterministic scenes shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "hsialign/cube.hpp"
#include "hsialign/retrieval.hpp"
#include "hsialign/rng.hpp"

namespace fixtures {

inline hsialign::RgbImage random_rgb(int h, int w, std::uint64_t seed) {
  hsialign::Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(3) * h * w);
  for (double& x : v) x = rng.uniform();
  return {h, w, std::move(v)};
}

/// Smoothly varying image with some structure; values strictly inside (0,1).
inline hsialign::RgbImage smooth_rgb(int h, int w, std::uint64_t seed) {
  hsialign::Rng rng(seed);
  double fy[3], fx[3], ph[3];
  for (int c = 0; c < 3; ++c) {
    fy[c] = rng.uniform(0.2, 0.9);
    fx[c] = rng.uniform(0.2, 0.9);
    ph[c] = rng.uniform(0.0, 6.0);
  }
  std::vector<double> v(static_cast<std::size_t>(3) * h * w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        v[(static_cast<std::size_t>(c) * h + y) * w + x] =
            0.5 + 0.3 * std::sin(fy[c] * y + ph[c]) * std::cos(fx[c] * x) +
            0.1 * rng.uniform(-1.0, 1.0);
      }
    }
  }
  return {h, w, std::move(v)};
}

inline hsialign::HyperCube random_cube(int h, int w, int b, std::uint64_t seed) {
  hsialign::Rng rng(seed);
  std::vector<float> v(static_cast<std::size_t>(h) * w * b);
  for (float& x : v) x = static_cast<float>(rng.uniform());
  return {h, w, hsialign::uniform_wavelengths(b, 400.0, 700.0), std::move(v)};
}

/// K random candidates per pixel, the first one being the pixel itself when
/// `include_self` is set; distances random and sorted.
inline hsialign::CandidateSet random_candidates(int h, int w, int k,
                                                std::uint64_t seed,
                                                bool include_self = true) {
  hsialign::Rng rng(seed);
  hsialign::CandidateSet cs{h, w, k, {}, {}};
  const std::size_t n = static_cast<std::size_t>(h) * w;
  cs.coord.resize(n * k);
  cs.distance.resize(n * k);
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<double> d(k);
    for (double& x : d) x = rng.uniform(0.0, 0.3);
    std::sort(d.begin(), d.end());
    for (int j = 0; j < k; ++j) {
      hsialign::PixelCoord v{static_cast<int>(rng.below(h)), static_cast<int>(rng.below(w))};
      if (j == 0 && include_self) {
        v = {static_cast<int>(u / w), static_cast<int>(u % w)};
        d[0] = 0.0;
      }
      cs.coord[u * k + j] = v;
      cs.distance[u * k + j] = d[j];
    }
  }
  return cs;
}

}  // namespace fixtures
