#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "hsialign/descriptor.hpp"
#include "hsialign/error.hpp"
#include "hsialign/retrieval.hpp"

using namespace hsialign;

namespace {

double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double l1_mean(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("exact kNN against brute force") {
  const DescriptorConfig cfg;
  const auto q = build_descriptors(fixtures::random_rgb(8, 8, 1), cfg);
  const auto b = build_descriptors(fixtures::random_rgb(8, 8, 2), cfg);
  const SeedList s = knn_exact(q, b, 4);
  for (std::size_t u = 0; u < q.pixels(); ++u) {
    std::vector<std::pair<double, int>> all;
    for (std::size_t v = 0; v < b.pixels(); ++v) all.push_back({l2(q.at(u), b.at(v)), static_cast<int>(v)});
    std::sort(all.begin(), all.end());
    for (int k = 0; k < 4; ++k) {
      CHECK(s.seeds_of(u)[k] == all[k].second);
      CHECK(s.distance[u * 4 + k] == doctest::Approx(all[k].first).epsilon(1e-12));
    }
  }
  const SeedList self = knn_exact(q, q, 1);
  for (std::size_t u = 0; u < q.pixels(); ++u) {
    CHECK(self.seeds_of(u)[0] == static_cast<int>(u));
    CHECK(self.distance[u] == 0.0);
  }
  CHECK_THROWS_AS(knn_exact(q, b, 65), InvalidInput);
}

TEST_CASE("kNN ties go to the smaller index") {
  std::vector<double> v(3 * 2 * 2, 0.5);
  const auto base = build_descriptors(RgbImage(2, 2, v), DescriptorConfig{});
  const SeedList s = knn_exact(base, base, 4);
  for (std::size_t u = 0; u < 4; ++u)
    for (int k = 0; k < 4; ++k) CHECK(s.seeds_of(u)[k] == k);
}

TEST_CASE("pool expansion and refinement against exhaustive enumeration") {
  const DescriptorConfig dcfg;
  const RgbImage gi = fixtures::random_rgb(6, 6, 3), pi = fixtures::random_rgb(6, 6, 4);
  const auto g = build_descriptors(gi, dcfg);
  const auto p = build_descriptors(pi, dcfg);
  RetrievalConfig rc;
  rc.seeds = 3;
  rc.radius = 1;
  rc.candidates = 4;
  const SeedList seeds = knn_exact(g, p, rc.seeds);
  const CandidateSet cs = expand_and_refine(seeds, g, p, rc);
  REQUIRE(cs.per_pixel == 4);
  for (std::size_t u = 0; u < g.pixels(); ++u) {
    std::vector<std::pair<double, int>> pool;
    for (int sd : seeds.seeds_of(u)) {
      const int sy = sd / 6, sx = sd % 6;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const PixelCoord c = clamp_to_lattice(sy + dy, sx + dx, 6, 6);
          const int v = c.y * 6 + c.x;
          pool.push_back({l1_mean(g.at(u), p.at(v)), v});
        }
    }
    std::sort(pool.begin(), pool.end());
    for (int k = 0; k < 4; ++k) {
      const PixelCoord c = cs.at(u, k);
      CHECK(c.y * 6 + c.x == pool[k].second);
      CHECK(cs.dist(u, k) == doctest::Approx(pool[k].first).epsilon(1e-12));
    }
  }

  // rho = 0: the pool is the seed set, re-ranked under mean L1.
  RetrievalConfig r0 = rc;
  r0.radius = 0;
  r0.candidates = 3;
  const CandidateSet c0 = expand_and_refine(seeds, g, p, r0);
  for (std::size_t u = 0; u < g.pixels(); ++u) {
    std::vector<int> a(seeds.seeds_of(u).begin(), seeds.seeds_of(u).end()), b;
    for (int k = 0; k < 3; ++k) b.push_back(c0.at(u, k).y * 6 + c0.at(u, k).x);
    for (int k = 0; k + 1 < 3; ++k) CHECK(c0.dist(u, k) <= c0.dist(u, k + 1));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("self retrieval") {
  const auto d = build_descriptors(fixtures::random_rgb(7, 5, 9), DescriptorConfig{});
  RetrievalConfig rc;
  rc.candidates = 1;
  const CandidateSet cs = retrieve_candidates(d, d, rc);
  for (std::size_t u = 0; u < d.pixels(); ++u) {
    CHECK(cs.at(u, 0).y * 5 + cs.at(u, 0).x == static_cast<int>(u));
    CHECK(cs.dist(u, 0) == 0.0);
  }
  RetrievalConfig bad;
  bad.candidates = 16 * 9 + 1;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}
