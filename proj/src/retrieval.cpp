#include "hsialign/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "hsialign/error.hpp"

namespace hsialign {

void RetrievalConfig::validate() const {
  if (seeds < 1) throw InvalidInput("retrieval seeds must be >= 1");
  if (radius < 0) throw InvalidInput("retrieval radius must be >= 0");
  const long long side = 2LL * radius + 1;
  if (candidates < 1 || candidates > seeds * side * side) {
    throw InvalidInput("retrieval candidates must lie in [1, K_s*(2*rho+1)^2]");
  }
}

namespace {

// Fixed eight-way accumulation order; results are identical run to run.
double squared_l2(const double* a, const double* b, int dim) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= dim; i += 8) {
    for (int j = 0; j < 8; ++j) {
      const double d = a[i + j] - b[i + j];
      acc[j] += d * d;
    }
  }
  double tail = 0.0;
  for (; i < dim; ++i) {
    const double d = a[i] - b[i];
    tail += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

double sum_abs(const double* a, const double* b, int dim) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= dim; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += std::abs(a[i + j] - b[i + j]);
  }
  double tail = 0.0;
  for (; i < dim; ++i) tail += std::abs(a[i] - b[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

using Scored = std::pair<double, int>;  // (distance, linear index)

}  // namespace

double mean_l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw DimensionMismatch("descriptor dimension mismatch");
  }
  return sum_abs(a.data(), b.data(), static_cast<int>(a.size())) /
         static_cast<double>(a.size());
}

SeedList knn_exact(const DescriptorField& queries, const DescriptorField& base,
                   int k) {
  if (queries.dim() != base.dim()) {
    throw DimensionMismatch("query and base descriptor dimensions differ");
  }
  if (k < 1 || static_cast<std::size_t>(k) > base.pixels()) {
    throw InvalidInput("K_s=" + std::to_string(k) + " exceeds the " +
                       std::to_string(base.pixels()) + " base pixels");
  }
  const std::size_t nq = queries.pixels(), nb = base.pixels();
  const int dim = base.dim();
  SeedList out{queries.height(), queries.width(), k, {}, {}};
  out.index.resize(nq * k);
  out.distance.resize(nq * k);

  std::vector<Scored> scored(nb);
  for (std::size_t q = 0; q < nq; ++q) {
    const double* qd = queries.data().data() + q * dim;
    for (std::size_t b = 0; b < nb; ++b) {
      scored[b] = {squared_l2(qd, base.data().data() + b * dim, dim),
                   static_cast<int>(b)};
    }
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end());
    for (int j = 0; j < k; ++j) {
      out.index[q * k + j] = scored[j].second;
      out.distance[q * k + j] = std::sqrt(scored[j].first);
    }
  }
  return out;
}

CandidateSet expand_and_refine(const SeedList& seeds,
                               const DescriptorField& guide,
                               const DescriptorField& proxy,
                               const RetrievalConfig& cfg) {
  cfg.validate();
  if (guide.dim() != proxy.dim()) {
    throw DimensionMismatch("guide and proxy descriptor dimensions differ");
  }
  if (seeds.height != guide.height() || seeds.width != guide.width()) {
    throw DimensionMismatch("seed list does not match the guide lattice");
  }
  const int h = proxy.height(), w = proxy.width();
  const int dim = proxy.dim();
  const int rho = cfg.radius, kkeep = cfg.candidates;
  const std::size_t n = guide.pixels();
  const int side = 2 * rho + 1;
  const std::size_t pool_size =
      static_cast<std::size_t>(seeds.per_pixel) * side * side;
  if (static_cast<std::size_t>(kkeep) > pool_size) {
    throw InvalidInput("candidate count exceeds the pool size");
  }

  CandidateSet out{guide.height(), guide.width(), kkeep, {}, {}};
  out.coord.resize(n * kkeep);
  out.distance.resize(n * kkeep);

  std::vector<Scored> pool;
  pool.reserve(pool_size);
  for (std::size_t u = 0; u < n; ++u) {
    const double* gd = guide.data().data() + u * dim;
    pool.clear();
    for (int seed : seeds.seeds_of(u)) {
      if (seed < 0 || static_cast<std::size_t>(seed) >= proxy.pixels()) {
        throw InvalidInput("seed outside the proxy lattice");
      }
      const int sy = seed / w, sx = seed % w;
      for (int dy = -rho; dy <= rho; ++dy) {
        for (int dx = -rho; dx <= rho; ++dx) {
          const PixelCoord v = clamp_to_lattice(sy + dy, sx + dx, h, w);
          const int lin = v.y * w + v.x;
          pool.emplace_back(
              sum_abs(gd, proxy.data().data() + static_cast<std::size_t>(lin) * dim, dim) / dim,
              lin);
        }
      }
    }
    std::partial_sort(pool.begin(), pool.begin() + kkeep, pool.end());
    for (int k = 0; k < kkeep; ++k) {
      out.coord[u * kkeep + k] = {pool[k].second / w, pool[k].second % w};
      out.distance[u * kkeep + k] = pool[k].first;
    }
  }
  return out;
}

CandidateSet retrieve_candidates(const DescriptorField& guide,
                                 const DescriptorField& proxy,
                                 const RetrievalConfig& cfg) {
  cfg.validate();
  return expand_and_refine(knn_exact(guide, proxy, cfg.seeds), guide, proxy,
                           cfg);
}

}  // namespace hsialign
