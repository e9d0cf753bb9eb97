#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "hsialign/error.hpp"
#include "hsialign/io.hpp"
#include "hsialign/rng.hpp"
#include "hsialign/transport.hpp"
#include "hsialign/warp.hpp"

using namespace hsialign;

namespace {

WarpParams random_params(int n, int k, int s, std::uint64_t seed, double tau = 1.0) {
  Rng rng(seed);
  WarpParams p{n, k, s, tau, {}, {}};
  p.aggregation.resize(static_cast<std::size_t>(n) * k);
  p.interpolation.resize(static_cast<std::size_t>(n) * s * s);
  for (double& v : p.aggregation) v = 2.0 * rng.normal();
  for (double& v : p.interpolation) v = 2.0 * rng.normal();
  return p;
}

std::vector<double> softmax_rows(const std::vector<double>& logits, int group, double tau) {
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r < logits.size(); r += group) {
    double mx = -1e300, sum = 0.0;
    for (int i = 0; i < group; ++i) mx = std::max(mx, logits[r + i] / tau);
    for (int i = 0; i < group; ++i) sum += out[r + i] = std::exp(logits[r + i] / tau - mx);
    for (int i = 0; i < group; ++i) out[r + i] /= sum;
  }
  return out;
}

// Explicit per-pixel loops: bar(u) = sum_k a_uk p(v_uk), then
// tilde(u) = sum_eta b_ueta bar(clamp(u + eta)).
std::vector<double> two_step(const WarpParams& p, const CandidateSet& cs, const HyperCube& cube) {
  const int h = cube.height(), w = cube.width(), k = cs.per_pixel, s = p.stencil;
  const auto a = softmax_rows(p.aggregation, k, p.temperature);
  const auto b = softmax_rows(p.interpolation, s * s, 1.0);
  const std::size_t n = cube.pixels();
  std::vector<double> out(cube.size());
  std::vector<double> bar(n);
  for (int band = 0; band < cube.bands(); ++band) {
    for (std::size_t u = 0; u < n; ++u) {
      double acc = 0;
      for (int j = 0; j < k; ++j) {
        const PixelCoord c = cs.at(u, j);
        acc += a[u * k + j] * cube.at(band, c.y, c.x);
      }
      bar[u] = acc;
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t u = static_cast<std::size_t>(y) * w + x;
        double acc = 0;
        for (int oy = 0; oy < s; ++oy)
          for (int ox = 0; ox < s; ++ox) {
            const PixelCoord c = clamp_to_lattice(y + oy - s / 2, x + ox - s / 2, h, w);
            acc += b[u * s * s + oy * s + ox] * bar[static_cast<std::size_t>(c.y) * w + c.x];
          }
        out[band * n + u] = acc;
      }
  }
  return out;
}

Eigen::MatrixXd dense(const SparseRows& t) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(t.size(), t.size());
  for (std::size_t r = 0; r < t.size(); ++r)
    for (std::size_t i = 0; i < t.support(r); ++i) m(r, t.columns(r)[i]) = t.weights(r)[i];
  return m;
}

SparseRows permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  Rng rng(seed);
  rng.shuffle(perm.begin(), perm.end());
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i].push_back({perm[i], 1.0});
  return SparseRows::from_triplets(n, rows);
}

double max_abs_diff(std::span<const float> a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("sparse rows validation and merge") {
  CHECK_THROWS_AS(SparseRows(2, {0, 2, 2}, {1, 0}, {0.5, 0.5}), InvalidInput);
  CHECK_THROWS_AS(SparseRows(2, {0, 1, 2}, {0, 2}, {1.0, 1.0}), InvalidInput);
  const auto m = SparseRows::from_triplets(2, {{{1, 0.3}, {1, 0.2}, {0, 0.5}}, {{0, 0.0}, {1, 1.0}}});
  CHECK(m.support(0) == 2);
  CHECK(m.weights(0)[1] == doctest::Approx(0.5));
  CHECK(m.support(1) == 1);  // exact zero dropped
}

TEST_CASE("freeze") {
  // Self candidate first with an overwhelming logit and center-only kernel.
  const int h = 4, w = 4, k = 3, s = 3;
  const auto cs = fixtures::random_candidates(h, w, k, 1);
  WarpParams p{h * w, k, s, 1.0, std::vector<double>(h * w * k, 0.0),
               std::vector<double>(h * w * s * s, 0.0)};
  for (int u = 0; u < h * w; ++u) {
    p.aggregation[u * k] = 1000.0;
    p.interpolation[u * s * s + s * s / 2] = 1000.0;
  }
  const SparseWarp sw = freeze(p, cs);
  CHECK(sw.aggregation == SparseRows::identity(h * w));
  CHECK(sw.interpolation == SparseRows::identity(h * w));
  CHECK(sw.composite == SparseRows::identity(h * w));

  // Duplicate candidates merge.
  CandidateSet dup{1, 2, 3, {{0, 1}, {0, 1}, {0, 0}, {0, 0}, {0, 0}, {0, 0}}, std::vector<double>(6, 0.0)};
  const std::vector<double> wts{0.3, 0.2, 0.5, 1.0, 0.0, 0.0};
  const SparseRows a = freeze_aggregation(wts, dup);
  REQUIRE(a.support(0) == 2);
  CHECK(a.columns(0)[0] == 0);
  CHECK(a.weights(0)[0] == 0.5);
  CHECK(a.columns(0)[1] == 1);
  CHECK(a.weights(0)[1] == 0.5);
  CHECK(a.support(1) == 1);

  const auto rp = random_params(16, k, s, 2);
  const SparseWarp rw = freeze(rp, cs);
  for (const SparseRows* op : {&rw.aggregation, &rw.interpolation, &rw.composite})
    for (std::size_t r = 0; r < op->size(); ++r) {
      double sum = 0;
      for (double v : op->weights(r)) sum += v;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("transfer") {
  const HyperCube c = fixtures::random_cube(6, 6, 4, 3);
  const auto id = SparseRows::identity(36);
  const TransferResult same = transfer(id, id, c);
  CHECK(std::equal(same.cube.data().begin(), same.cube.data().end(), c.data().begin()));
  CHECK(same.clamped == 0);

  const auto cs = fixtures::random_candidates(6, 6, 5, 4, false);
  const auto p = random_params(36, 5, 3, 5);
  const SparseWarp sw = freeze(p, cs);
  HyperCube flat(6, 6, c.wavelengths(), std::vector<float>(c.size(), 0.375f));
  const TransferResult fr = transfer(sw.composite, flat);
  for (float v : fr.cube.data()) CHECK(v == doctest::Approx(0.375f).epsilon(1e-6));

  const auto oracle = two_step(p, cs, c);
  CHECK(max_abs_diff(transfer(sw.aggregation, sw.interpolation, c).cube.data(), oracle) <= 1e-6);
  CHECK(max_abs_diff(transfer(sw.composite, c).cube.data(), oracle) <= 1e-6);
  CHECK_THROWS_AS(transfer(SparseRows::identity(35), c), DimensionMismatch);
}

TEST_CASE("compose") {
  const auto pa = permutation(20, 1), pb = permutation(20, 2);
  const SparseRows t = compose(pb, pa);
  for (std::size_t r = 0; r < 20; ++r) {
    REQUIRE(t.support(r) == 1);
    CHECK(t.columns(r)[0] == pa.columns(pb.columns(r)[0])[0]);
  }
  CHECK(overlap_kappa(t).kappa == doctest::Approx(1.0).epsilon(1e-12));

  const int k = 4, s = 3;
  const auto cs = fixtures::random_candidates(4, 4, k, 6);
  const SparseWarp sw = freeze(random_params(16, k, s, 7), cs);
  CHECK(sw.composite.max_support() <= static_cast<std::size_t>(k * s * s));
  Rng rng(8);
  std::vector<double> x(16), ax(16), bax(16), tx(16);
  for (int trial = 0; trial < 20; ++trial) {
    for (double& v : x) v = rng.normal();
    sw.aggregation.apply(x, ax);
    sw.interpolation.apply(ax, bax);
    sw.composite.apply(x, tx);
    for (int i = 0; i < 16; ++i) CHECK(std::abs(tx[i] - bax[i]) <= 1e-6);
  }
  const Eigen::MatrixXd diff =
      dense(sw.composite) - dense(sw.interpolation) * dense(sw.aggregation);
  CHECK(diff.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("verify operator") {
  const OperatorReport id = verify_operator(SparseRows::identity(16), 4, 4, 1);
  CHECK(id.ok());
  CHECK(id.max_support == 1);

  const auto cs = fixtures::random_candidates(5, 5, 4, 9);
  SparseWarp sw = freeze(random_params(25, 4, 3, 10), cs);
  const OperatorReport good = verify_operator(sw.composite, 5, 5, sw.support_bound());
  CHECK(good.ok());
  CHECK(good.containment.checked == 25 * 8);

  SparseRows bad = sw.composite;
  for (double& v : bad.mutable_weights(7)) v *= 1.01;
  const OperatorReport rep = verify_operator(bad, 5, 5, sw.support_bound());
  CHECK_FALSE(rep.stochastic);
  CHECK(rep.row_sum_rows == std::vector<std::size_t>{7});
  CHECK_FALSE(rep.ok());

  SparseRows neg = sw.composite;
  neg.mutable_weights(3)[0] = -0.1;
  CHECK(verify_operator(neg, 5, 5, sw.support_bound()).negative_rows ==
        std::vector<std::size_t>{3});
  const OperatorReport tight = verify_operator(sw.composite, 5, 5, 1);
  CHECK_FALSE(tight.support_ok);
}

TEST_CASE("overlap kappa") {
  CHECK(overlap_kappa(permutation(30, 3)).kappa == doctest::Approx(1.0).epsilon(1e-12));
  const auto first = SparseRows::from_triplets(4, {{{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}});
  CHECK(overlap_kappa(first).kappa == doctest::Approx(4.0).epsilon(1e-9));

  const auto cs = fixtures::random_candidates(8, 8, 4, 11, false);
  const SparseWarp sw = freeze(random_params(64, 4, 3, 12), cs);
  const KappaResult kr = overlap_kappa(sw.composite);
  const Eigen::MatrixXd t = dense(sw.composite);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t.transpose() * t);
  const double top = es.eigenvalues().maxCoeff();
  CHECK(std::abs(kr.kappa - top) / top <= 1e-6);
  CHECK(kr.kappa >= 1.0 - 1e-12);

  // Tight along the top singular direction.
  std::vector<double> tv(64);
  sw.composite.apply(kr.vector, tv);
  double n2 = 0;
  for (double v : tv) n2 += v * v;
  CHECK(std::abs(n2 - kr.kappa) <= 1e-6 * kr.kappa);

  // Noise inheritance over random error fields.
  Rng rng(13);
  std::vector<double> e(64), te(64);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    double en = 0, ten = 0;
    for (double& v : e) en += (v = rng.normal()) * v;
    sw.composite.apply(e, te);
    for (double v : te) ten += v * v;
    violations += ten > kr.kappa * en * (1 + 1e-9);
  }
  CHECK(violations == 0);

  try {
    overlap_kappa(sw.composite, 1e-14, 2);
    FAIL("expected non-convergence");
  } catch (const ConvergenceError& err) {
    CHECK(err.residual() > 0.0);
  }
}

TEST_CASE("SWRP round trip") {
  const auto cs = fixtures::random_candidates(4, 5, 3, 14);
  const SparseWarp sw = freeze(random_params(20, 3, 3, 15), cs);
  const auto path = std::filesystem::temp_directory_path() / "hsialign_test_warp.swrp";
  save_warp(sw, path);
  const StoredWarp back = load_warp(path);
  CHECK(back.candidates == 3);
  CHECK(back.stencil == 3);
  CHECK(back.op == sw.composite);
  auto bytes = encode_warp(sw);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_warp(bytes), ParseError);
  bytes = encode_warp(sw);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_warp(bytes), ParseError);
  bytes = encode_warp(sw);
  bytes.push_back(0);
  CHECK_THROWS_AS(decode_warp(bytes), ParseError);
}
