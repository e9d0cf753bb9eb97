#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hsialign/cube.hpp"
#include "hsialign/descriptor.hpp"

namespace hsialign {

struct RetrievalConfig {
  int seeds = 16;       // K_s
  int radius = 1;       // rho; neighborhoods are (2*rho+1)^2
  int candidates = 16;  // K

  void validate() const;
};

/// K_s nearest base pixels (by linear index) for every query pixel, ordered
/// by ascending Euclidean distance; ties go to the smaller linear index.
struct SeedList {
  int height = 0;
  int width = 0;
  int per_pixel = 0;
  std::vector<int> index;        // pixels * per_pixel linear indices
  std::vector<double> distance;  // Euclidean descriptor distances

  std::span<const int> seeds_of(std::size_t pixel) const {
    return {index.data() + pixel * per_pixel, static_cast<std::size_t>(per_pixel)};
  }
};

/// Per guide pixel u, K proxy coordinates v_{u,k} and their mean-L1
/// descriptor distances d_{u,k}, sorted ascending. Coordinates may repeat.
struct CandidateSet {
  int height = 0;
  int width = 0;
  int per_pixel = 0;
  std::vector<PixelCoord> coord;
  std::vector<double> distance;

  std::size_t pixels() const noexcept {
    return static_cast<std::size_t>(height) * width;
  }
  const PixelCoord& at(std::size_t pixel, int k) const {
    return coord[pixel * per_pixel + k];
  }
  double dist(std::size_t pixel, int k) const {
    return distance[pixel * per_pixel + k];
  }
};

/// Exhaustive search; K_s larger than the base pixel count throws
/// InvalidInput.
SeedList knn_exact(const DescriptorField& queries, const DescriptorField& base,
                   int k);

/// Builds the multiset pool of clamped (2*rho+1)^2 neighborhoods around every
/// seed, scores each member by ||psi_g(u) - psi_r(v)||_1 / D and keeps the K
/// smallest (ties to the smaller linear index).
CandidateSet expand_and_refine(const SeedList& seeds,
                               const DescriptorField& guide,
                               const DescriptorField& proxy,
                               const RetrievalConfig& cfg);

/// knn_exact followed by expand_and_refine.
CandidateSet retrieve_candidates(const DescriptorField& guide,
                                 const DescriptorField& proxy,
                                 const RetrievalConfig& cfg);

/// Mean absolute descriptor discrepancy.
double mean_l1_distance(std::span<const double> a, std::span<const double> b);

}  // namespace hsialign
