#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "hsialign/error.hpp"
#include "hsialign/warp.hpp"

using namespace hsialign;

namespace {

WarpParams perturbed(const WarpObjective& obj, std::uint64_t seed, double amp) {
  WarpParams p = obj.initial_params();
  Rng rng(seed);
  for (double& x : p.aggregation) x += amp * rng.normal();
  for (double& x : p.interpolation) x += amp * rng.normal();
  return p;
}

double worst_fd_error(const WarpObjective& obj, WarpParams p, int trials,
                      std::uint64_t seed) {
  std::vector<double> ga, gi;
  obj.objective_and_gradient(p, ga, gi);
  Rng pick(seed);
  double worst_err = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const bool agg = pick.below(2) == 0;
    auto& vec = agg ? p.aggregation : p.interpolation;
    const std::size_t i = pick.below(vec.size());
    const double h0 = 1e-4, orig = vec[i];
    vec[i] = orig + h0;
    const double fp = obj.objective(p);
    vec[i] = orig - h0;
    const double fm = obj.objective(p);
    vec[i] = orig;
    const double fd = (fp - fm) / (2 * h0);
    const double an = agg ? ga[i] : gi[i];
    worst_err = std::max(worst_err, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}));
  }
  return worst_err;
}

}  // namespace

TEST_CASE("each loss term has a matching gradient") {
  const int h = 7, w = 9;
  for (int term = 0; term < kLossTerms; ++term) {
    std::array<double, kLossTerms> lam{};
    lam[term] = 1.0;
    WarpLossWeights wts{lam[0], lam[1], lam[2], lam[3], lam[4], lam[5], lam[6]};
    WarpObjective obj(fixtures::random_candidates(h, w, 5, 21 + term),
                      fixtures::smooth_rgb(h, w, 7), fixtures::smooth_rgb(h, w, 8),
                      wts, 3, 0.8);
    const double err = worst_fd_error(obj, perturbed(obj, 40 + term, 0.5), 60, 7 + term);
    INFO("term " << kLossTermNames[term] << " error " << err);
    CHECK(err <= 1e-3);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  const int h = 9, w = 8;
  WarpObjective obj(fixtures::random_candidates(h, w, 4, 11),
                    fixtures::smooth_rgb(h, w, 3), fixtures::smooth_rgb(h, w, 4),
                    WarpLossWeights{}, 3, 1.0);
  WarpParams p = perturbed(obj, 5, 0.7);
  std::vector<double> ga, gi;
  obj.objective_and_gradient(p, ga, gi);

  Rng pick(99);
  int worst = 0;
  double worst_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const bool agg = pick.below(2) == 0;
    auto& vec = agg ? p.aggregation : p.interpolation;
    const std::size_t i = pick.below(vec.size());
    const double h0 = 1e-4, orig = vec[i];
    vec[i] = orig + h0;
    const double fp = obj.objective(p);
    vec[i] = orig - h0;
    const double fm = obj.objective(p);
    vec[i] = orig;
    const double fd = (fp - fm) / (2 * h0);
    const double an = agg ? ga[i] : gi[i];
    const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
    if (err > worst_err) {
      worst_err = err;
      worst = trial;
    }
  }
  INFO("worst trial " << worst);
  CHECK(worst_err <= 1e-3);
}
