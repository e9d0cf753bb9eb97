#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "hsialign/error.hpp"
#include "hsialign/rng.hpp"
#include "hsialign/theory.hpp"

using namespace hsialign;

namespace {

Eigen::MatrixXd rand_mat(Rng& rng, int r, int c) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

PairAtom rand_atom(Rng& rng, int r = 2, int c = 3) { return {rand_mat(rng, r, c), rand_mat(rng, r, c)}; }

std::vector<PairAtom> rand_atoms(Rng& rng, int n) {
  std::vector<PairAtom> a;
  for (int i = 0; i < n; ++i) a.push_back(rand_atom(rng));
  return a;
}

// Min-cost perfect assignment, O(n^3) shortest augmenting path.
double hungarian(const Eigen::MatrixXd& c) {
  const int n = static_cast<int>(c.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += c(p[j] - 1, j - 1);
  return total;
}

// W1 between integer-count distributions: expand each atom into its count
// of unit atoms and solve the equal-weight assignment.
double assignment_w1(const std::vector<PairAtom>& a, const std::vector<int>& ca,
                     const std::vector<PairAtom>& b, const std::vector<int>& cb) {
  std::vector<int> ia, ib;
  for (std::size_t i = 0; i < a.size(); ++i) ia.insert(ia.end(), ca[i], static_cast<int>(i));
  for (std::size_t j = 0; j < b.size(); ++j) ib.insert(ib.end(), cb[j], static_cast<int>(j));
  REQUIRE(ia.size() == ib.size());
  Eigen::MatrixXd c(ia.size(), ib.size());
  for (std::size_t i = 0; i < ia.size(); ++i)
    for (std::size_t j = 0; j < ib.size(); ++j) c(i, j) = pair_distance(a[ia[i]], b[ib[j]]);
  return hungarian(c) / static_cast<double>(ia.size());
}

DiscreteDist from_counts(std::vector<PairAtom> atoms, const std::vector<int>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> w;
  for (int k : counts) w.push_back(k / total);
  return DiscreteDist(std::move(atoms), std::move(w));
}

std::vector<int> rand_counts(Rng& rng, int n, int total) {
  std::vector<int> c(n, 1);
  for (int t = n; t < total; ++t) ++c[rng.below(n)];
  return c;
}

}  // namespace

TEST_CASE("pair distance") {
  Rng rng(1);
  const PairAtom a = rand_atom(rng);
  CHECK(pair_distance(a, a) == 0.0);
  PairAtom x{Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)};
  PairAtom y{Eigen::MatrixXd::Ones(2, 2), Eigen::MatrixXd::Zero(2, 2)};
  CHECK(pair_distance(x, y) == doctest::Approx(2.0).epsilon(1e-15));
  for (int t = 0; t < 100; ++t) {
    const PairAtom p = rand_atom(rng), q = rand_atom(rng), r = rand_atom(rng);
    CHECK(pair_distance(p, r) <= pair_distance(p, q) + pair_distance(q, r) + 1e-12);
  }
  PairAtom bad{Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(2, 2)};
  CHECK_THROWS_AS(pair_distance(x, bad), DimensionMismatch);
}

TEST_CASE("discrete distribution validation") {
  Rng rng(2);
  CHECK_THROWS_AS(DiscreteDist({}, {}), InvalidInput);
  CHECK_THROWS_AS(DiscreteDist(rand_atoms(rng, 2), {0.5, 0.6}), InvalidInput);
  CHECK_THROWS_AS(DiscreteDist(rand_atoms(rng, 2), {1.5, -0.5}), InvalidInput);
  CHECK_NOTHROW(DiscreteDist(rand_atoms(rng, 2), {0.25, 0.75}));
  const auto m = mixture(DiscreteDist::uniform(rand_atoms(rng, 3)),
                         DiscreteDist::uniform(rand_atoms(rng, 2)), 0.25);
  CHECK(m.size() == 5);
  CHECK(m.weights()[0] == doctest::Approx(0.25));
  CHECK(m.weights()[4] == doctest::Approx(0.125));
}

TEST_CASE("wasserstein trivial cases") {
  Rng rng(3);
  const auto p = DiscreteDist::uniform(rand_atoms(rng, 5));
  CHECK(wasserstein1(p, p) == doctest::Approx(0.0).epsilon(1e-12));
  const PairAtom a = rand_atom(rng), b = rand_atom(rng);
  CHECK(wasserstein1(DiscreteDist({a}, {1.0}), DiscreteDist({b}, {1.0})) ==
        doctest::Approx(pair_distance(a, b)).epsilon(1e-14));
  CHECK_THROWS_AS(wasserstein1(DiscreteDist::uniform(rand_atoms(rng, 65)), p), InvalidInput);
}

TEST_CASE("wasserstein matches the assignment oracle") {
  Rng rng(4);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = t == 99 ? 64 : t < 50 ? 4 : 2 + static_cast<int>(rng.below(9));
    const auto a = rand_atoms(rng, n), b = rand_atoms(rng, n);
    const std::vector<int> ones(n, 1);
    const double exact = wasserstein1(DiscreteDist::uniform(a), DiscreteDist::uniform(b));
    worst = std::max(worst, std::abs(exact - assignment_w1(a, ones, b, ones)));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("wasserstein with unequal weights and supports matches expanded assignment") {
  Rng rng(5);
  double worst = 0.0;
  for (int t = 0; t < 60; ++t) {
    const int na = 1 + static_cast<int>(rng.below(7));
    const int nb = 1 + static_cast<int>(rng.below(7));
    const int total = 12;
    const auto a = rand_atoms(rng, na), b = rand_atoms(rng, nb);
    const auto ca = rand_counts(rng, na, total), cb = rand_counts(rng, nb, total);
    const double exact = wasserstein1(from_counts(a, ca), from_counts(b, cb));
    worst = std::max(worst, std::abs(exact - assignment_w1(a, ca, b, cb)));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("wasserstein degenerate ties") {
  // Coincident atoms and equal marginals force zero-flow basic cells.
  Rng rng(6);
  const PairAtom a = rand_atom(rng), b = rand_atom(rng);
  const auto p = DiscreteDist({a, a, b, b}, {0.25, 0.25, 0.25, 0.25});
  const auto q = DiscreteDist({b, a}, {0.5, 0.5});
  CHECK(wasserstein1(p, q) == doctest::Approx(0.0).epsilon(1e-12));
  const auto r = DiscreteDist({a}, {1.0});
  CHECK(wasserstein1(p, r) == doctest::Approx(0.5 * pair_distance(a, b)).epsilon(1e-12));
}

TEST_CASE("wasserstein metric properties") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    const auto p = from_counts(rand_atoms(rng, 4), rand_counts(rng, 4, 10));
    const auto q = from_counts(rand_atoms(rng, 5), rand_counts(rng, 5, 10));
    const auto r = from_counts(rand_atoms(rng, 3), rand_counts(rng, 3, 10));
    const double pq = wasserstein1(p, q), qp = wasserstein1(q, p);
    CHECK(std::abs(pq - qp) <= 1e-9);
    CHECK(pq >= 0.0);
    CHECK(wasserstein1(p, r) <= pq + wasserstein1(q, r) + 1e-9);
    // Permuting atoms leaves the distribution unchanged.
    std::vector<PairAtom> atoms(p.atoms().rbegin(), p.atoms().rend());
    std::vector<double> w(p.weights().rbegin(), p.weights().rend());
    CHECK(wasserstein1(p, DiscreteDist(atoms, w)) <= 1e-12);
    // Convexity in the mixture argument.
    const double alpha = rng.uniform();
    CHECK(wasserstein1(p, mixture(q, r, alpha)) <=
          (1 - alpha) * pq + alpha * wasserstein1(p, r) + 1e-9);
  }
}

TEST_CASE("mixture coverage endpoints and random instances") {
  Rng rng(8);
  const auto pt = DiscreteDist::uniform(rand_atoms(rng, 5));
  const auto pp = DiscreteDist::uniform(rand_atoms(rng, 5));
  const auto pg = DiscreteDist::uniform(rand_atoms(rng, 5));
  const auto pv = DiscreteDist::uniform(rand_atoms(rng, 5));
  const std::vector<double> ends{0.0, 1.0};
  const auto rep = check_mixture_coverage(pt, pp, pg, pv, ends);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].slack == 0.0);
  CHECK(rep.rows[0].lhs == rep.delta_p);
  CHECK(rep.rows[1].lhs == doctest::Approx(wasserstein1(pt, pg)).epsilon(1e-12));
  CHECK(rep.rows[1].rhs == doctest::Approx(rep.delta_w + rep.e_w));
  CHECK(rep.rows[1].slack >= -1e-9);

  TheorySuiteConfig cfg;
  cfg.trials = 200;
  cfg.alphas = {0.25, 0.5, 0.75};
  const auto res = run_theory_suite(cfg, 11);
  CHECK(res.coverage_trials == 200);
  CHECK(res.coverage_min_slack >= -1e-9);
  CHECK(res.perturbation_min_slack >= -1e-9);
}

TEST_CASE("pair perturbation") {
  Rng rng(9);
  const int n = 9, b = 2;
  std::vector<Eigen::MatrixXd> y, zero, e;
  for (int i = 0; i < 5; ++i) {
    y.push_back(rand_mat(rng, n, b));
    zero.push_back(Eigen::MatrixXd::Zero(n, b));
  }
  const auto id = SparseRows::identity(n);
  const auto rep0 = check_pair_perturbation(y, zero, LinearOperator::identity(), id);
  for (const auto& r : rep0.rows) {
    CHECK(r.lhs == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.rhs == 0.0);
  }

  for (int t = 0; t < 100; ++t) {
    std::vector<Eigen::MatrixXd> err;
    for (int i = 0; i < 5; ++i) err.push_back(rng.uniform(0.01, 1.0) * rand_mat(rng, n, b));
    const auto rep = check_pair_perturbation(y, err, LinearOperator::identity(), id);
    CHECK(rep.rows[0].rhs == doctest::Approx(2.0 * rep.mean_error_norm));
    CHECK(rep.min_slack() >= -1e-9);
  }

  // T a cyclic permutation: kappa = 1 and ||T E|| = ||E||.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
  for (int u = 0; u < n; ++u) rows[u].push_back({static_cast<std::uint32_t>((u + 4) % n), 1.0});
  const auto perm = SparseRows::from_triplets(n, rows);
  std::vector<Eigen::MatrixXd> err;
  for (int i = 0; i < 5; ++i) err.push_back(rand_mat(rng, n, b));
  Eigen::MatrixXd blur = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    blur(i, i) = 0.5;
    blur(i, (i + 1) % n) = 0.5;
  }
  const auto deg = LinearOperator::matrix(blur);
  CHECK(deg.lipschitz == doctest::Approx(1.0).epsilon(1e-12));
  const auto rep = check_pair_perturbation(y, err, deg, perm);
  CHECK(rep.kappa == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rep.mean_warped_error == doctest::Approx(rep.mean_error_norm).epsilon(1e-12));
  CHECK(rep.rows[2].rhs ==
        doctest::Approx(2.0 * std::sqrt(rep.mean_sq_error_norm)).epsilon(1e-9));
  CHECK(rep.min_slack() >= -1e-9);
  const auto j = to_json(rep);
  CHECK(j["rows"].size() == 3);
  CHECK(j["holds"].get<bool>());
}

TEST_CASE("improvement condition arithmetic") {
  ImprovementInputs in;
  in.delta_s = 0.7;
  in.delta_alpha = 0.7;
  in.c_s = in.c_v = 2.0;
  in.m_s = in.m_eff = 10.0;
  CHECK(improvement_condition(in) == 0.0);
  ImprovementInputs unit;
  unit.delta_s = 1.0;
  CHECK(improvement_condition(unit) == doctest::Approx(1.0));

  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    ImprovementInputs r;
    r.lipschitz = rng.uniform(0.1, 3);
    r.delta_s = rng.uniform();
    r.delta_alpha = rng.uniform();
    r.c_s = rng.uniform(0, 5);
    r.m_s = rng.uniform(1, 100);
    r.c_v = rng.uniform(0, 5);
    r.m_eff = rng.uniform(1, 400);
    r.bias_gap = rng.uniform(-0.1, 0.1);
    r.alpha = rng.uniform();
    r.b_warp_sq = rng.uniform(0, 0.2);
    r.eps_alpha = rng.uniform(0, 0.2);
    const double lhs_terms[] = {r.lipschitz * r.delta_s, -r.lipschitz * r.delta_alpha,
                                r.c_s / r.m_s, -r.c_v / r.m_eff, r.bias_gap};
    const double rhs_terms[] = {r.alpha * r.b_warp_sq, 2 * r.lipschitz * r.eps_alpha};
    double expect = 0;
    for (double v : lhs_terms) expect += v;
    for (double v : rhs_terms) expect -= v;
    CHECK(std::abs(improvement_condition(r) - expect) <= 1e-12);
  }

  BoundReport rep;
  rep.delta_p = 0.4;
  rep.delta_w = 0.2;
  rep.e_w = 0.1;
  rep.eps_p = 0.05;
  rep.eps_g = 0.07;
  ImprovementInputs from;
  from.alpha = 0.5;
  from.delta_s = 1.0;
  // delta_alpha = 0.2 + 0.1 + 0.05 = 0.35, eps = 0.06
  CHECK(improvement_condition(rep, from) == doctest::Approx(1.0 - 0.35 - 0.12));
}
