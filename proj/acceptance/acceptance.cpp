// Property-based acceptance run. One PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion passes, except those named with
// --known-failure, which must fail (an unexpected pass is also an error, so
// the list cannot go stale).

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "hsialign/degrade.hpp"
#include "hsialign/io.hpp"
#include "hsialign/metrics.hpp"
#include "hsialign/pipeline.hpp"
#include "hsialign/rng.hpp"
#include "hsialign/theory.hpp"
#include "hsialign/transport.hpp"
#include "hsialign/warp.hpp"

using namespace hsialign;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Outcome> g_outcomes;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  g_outcomes.push_back({id, pass, detail});
}

void info(const std::string& line) {
  std::printf("              info  %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Silences stdout and stderr of library subcommands for a scope.
class Quiet {
 public:
  Quiet() {
    std::fflush(stdout);
    std::fflush(stderr);
    out_ = dup(1);
    err_ = dup(2);
    const int null = open("/dev/null", O_WRONLY);
    dup2(null, 1);
    dup2(null, 2);
    close(null);
  }
  ~Quiet() {
    std::fflush(stdout);
    std::fflush(stderr);
    dup2(out_, 1);
    dup2(err_, 2);
    close(out_);
    close(err_);
  }

 private:
  int out_, err_;
};

Eigen::MatrixXd dense(const SparseRows& t) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(t.size(), t.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto c = t.columns(r);
    const auto w = t.weights(r);
    for (std::size_t i = 0; i < c.size(); ++i) m(r, c[i]) += w[i];
  }
  return m;
}

CandidateSet random_candidates(int h, int w, int k, Rng& rng) {
  CandidateSet cs{h, w, k, {}, {}};
  const std::size_t n = static_cast<std::size_t>(h) * w;
  cs.coord.resize(n * k);
  cs.distance.resize(n * k);
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<double> d(k);
    for (double& x : d) x = rng.uniform(0.0, 0.3);
    std::sort(d.begin(), d.end());
    for (int j = 0; j < k; ++j) {
      cs.coord[u * k + j] = {static_cast<int>(rng.below(h)), static_cast<int>(rng.below(w))};
      cs.distance[u * k + j] = d[j];
    }
  }
  return cs;
}

WarpParams random_params(std::size_t n, int k, int s, double amp, Rng& rng) {
  WarpParams p;
  p.pixels = static_cast<int>(n);
  p.candidates = k;
  p.stencil = s;
  p.aggregation.resize(n * k);
  p.interpolation.resize(n * s * s);
  for (double& x : p.aggregation) x = amp * rng.normal();
  for (double& x : p.interpolation) x = amp * rng.normal();
  return p;
}

Affine random_affine(Rng& rng, int h, int w) {
  GuideSpec g;
  g.dy = rng.uniform(-3.0, 3.0);
  g.dx = rng.uniform(-3.0, 3.0);
  g.rotation_deg = rng.uniform(-10.0, 10.0);
  return g.affine(h, w);
}

// ---------------------------------------------------------------------------

void criteria_1_2(int runs, int iterations) {
  const auto t0 = Clock::now();
  PipelineConfig cfg;
  cfg.warp.optim.iterations = iterations;
  std::size_t negative = 0, row_sum_bad = 0, support_bad = 0, violations = 0, failed = 0, checked = 0;
  double worst_row = 0, worst_two_step = 0;
  std::size_t worst_support = 0;
  const std::size_t bound = static_cast<std::size_t>(cfg.retrieval.candidates) * cfg.warp.stencil *
                            cfg.warp.stencil;
  for (int r = 0; r < runs; ++r) {
    const int side = r % 2 ? 32 : 16;
    Rng rng(derive_seed(101, "acceptance/operator", r));
    TextureConfig tc;
    tc.endmembers = 3 + static_cast<int>(rng.below(4));
    tc.correlation = rng.uniform(1.0, 3.0);
    const HyperCube proxy = make_random_texture_cube(side, side, 31, rng.next_u64(), tc);
    const SyntheticGuide guide = make_synthetic_guide(project_rgb(proxy), random_affine(rng, side, side),
                                                      {0.05, 0.02}, rng.next_u64());
    SynthesisResult s;
    try {
      s = synthesize(proxy, guide.image, cfg, rng.next_u64());
    } catch (const std::exception&) {
      ++failed;
      continue;
    }
    const SparseRows& t = s.warp.composite;
    for (std::size_t row = 0; row < t.size(); ++row) {
      double sum = 0;
      bool neg = false;
      for (double v : t.weights(row)) {
        neg = neg || v < 0.0 || !std::isfinite(v);
        sum += v;
      }
      negative += neg;
      worst_row = std::max(worst_row, std::abs(sum - 1.0));
      row_sum_bad += std::abs(sum - 1.0) > 1e-9;
      worst_support = std::max(worst_support, t.support(row));
      support_bad += t.support(row) > bound;
    }
    const HyperCube two = transfer(s.warp.aggregation, s.warp.interpolation, proxy).cube;
    for (std::size_t i = 0; i < two.size(); ++i)
      worst_two_step = std::max(worst_two_step, std::abs(double(two.data()[i]) - s.cube.data()[i]));
    const ContainmentReport c = check_containment(t, proxy, s.cube);
    violations += c.violations;
    checked += c.checked;
  }
  const double elapsed = seconds_since(t0);
  const bool ok1 = failed == 0 && negative == 0 && row_sum_bad == 0 && support_bad == 0 &&
                   worst_two_step <= 1e-6 && elapsed < 120.0;
  report(1, ok1,
         fmt("%d runs (16x16/32x32, %d iters), failed %zu, negative rows %zu, max |row sum - 1| %.2e, "
             "max support %zu <= %zu, max |Tp - B(Ap)| %.2e, %.1fs",
             runs, iterations, failed, negative, worst_row, worst_support, bound, worst_two_step, elapsed));
  report(2, failed == 0 && violations == 0 && checked > 0,
         fmt("containment violations %zu of %zu (row, band) checks", violations, checked));
}

void criterion_3(int trials) {
  Rng rng(derive_seed(103, "acceptance/kappa"));
  int inherit_bad = 0, below_one = 0, perm_bad = 0, dense_bad = 0, perms = 0;
  double worst_dense = 0, worst_perm = 0, worst_ratio = 0;
  for (int t = 0; t < trials; ++t) {
    const int h = 2 + static_cast<int>(rng.below(15)), w = 2 + static_cast<int>(rng.below(15));
    const std::size_t n = static_cast<std::size_t>(h) * w;
    SparseRows op;
    const bool perm = t % 10 == 0;
    if (perm) {
      std::vector<std::uint32_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
      rng.shuffle(idx.begin(), idx.end());
      std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
      for (std::size_t i = 0; i < n; ++i) rows[i] = {{idx[i], 1.0}};
      op = SparseRows::from_triplets(n, rows);
    } else {
      const int k = 1 + static_cast<int>(rng.below(6));
      const int s = 1 + 2 * static_cast<int>(rng.below(4));
      op = freeze(random_params(n, k, s, rng.uniform(0.1, 3.0), rng), random_candidates(h, w, k, rng)).composite;
    }
    const KappaResult kr = overlap_kappa(op, 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(op).transpose() * dense(op), Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    const double rel = std::abs(kr.kappa - top) / top;
    worst_dense = std::max(worst_dense, rel);
    dense_bad += rel > 1e-6;
    below_one += kr.kappa < 1.0 - 1e-12;
    if (perm) {
      ++perms;
      worst_perm = std::max(worst_perm, std::abs(kr.kappa - 1.0));
      perm_bad += std::abs(kr.kappa - 1.0) > 1e-9;
    }
    const int bands = 1 + static_cast<int>(rng.below(8));
    std::vector<double> e(n), te(n);
    double num = 0, den = 0;
    for (int b = 0; b < bands; ++b) {
      for (double& v : e) v = rng.normal();
      op.apply(e, te);
      for (std::size_t i = 0; i < n; ++i) {
        num += te[i] * te[i];
        den += e[i] * e[i];
      }
    }
    worst_ratio = std::max(worst_ratio, num / (kr.kappa * den));
    inherit_bad += num > kr.kappa * den * (1.0 + 1e-12);
  }
  report(3, inherit_bad == 0 && below_one == 0 && perm_bad == 0 && dense_bad == 0,
         fmt("%d trials (%d permutations), ||TE||^2 > kappa||E||^2: %d (max ratio %.4f), kappa < 1: %d, "
             "power vs dense max rel %.2e, permutation max |kappa - 1| %.2e",
             trials, perms, inherit_bad, worst_ratio, below_one, worst_dense, worst_perm));
}

void criterion_4(int scenes, int coords_per_scene) {
  Rng rng(derive_seed(104, "acceptance/gradient"));
  int checked = 0, bad = 0;
  double worst = 0;
  for (int sc = 0; sc < scenes; ++sc) {
    const int h = 6 + static_cast<int>(rng.below(5)), w = 6 + static_cast<int>(rng.below(5));
    const HyperCube proxy = make_random_texture_cube(h, w, 31, rng.next_u64());
    const RgbImage prgb = project_rgb(proxy);
    GuideSpec gs{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-8.0, 8.0), 0.03, 0.02};
    const SyntheticGuide guide =
        make_synthetic_guide(prgb, gs.affine(h, w), {gs.gain, gs.offset}, rng.next_u64());
    DescriptorConfig dc;
    dc.patch_side = 3;
    RetrievalConfig rc;
    rc.candidates = 3 + static_cast<int>(rng.below(4));
    rc.seeds = rc.candidates;
    const CandidateSet cands =
        retrieve_candidates(build_descriptors(guide.image, dc), build_descriptors(prgb, dc), rc);
    WarpLossWeights lw;
    for (double* v : {&lw.fidelity, &lw.patch, &lw.mutual_info, &lw.ssim, &lw.gradient, &lw.smooth, &lw.distance})
      *v = rng.uniform(0.05, 1.0);
    const int stencil = rng.below(2) ? 5 : 3;
    const WarpObjective obj(cands, prgb, guide.image, lw, stencil, rng.uniform(0.6, 1.4));
    WarpParams p = obj.initial_params();
    for (double& x : p.aggregation) x += 0.7 * rng.normal();
    for (double& x : p.interpolation) x += 0.7 * rng.normal();
    std::vector<double> ga, gi;
    obj.objective_and_gradient(p, ga, gi);
    for (int c = 0; c < coords_per_scene; ++c) {
      const bool agg = rng.below(2) == 0;
      std::vector<double>& vec = agg ? p.aggregation : p.interpolation;
      const std::size_t i = rng.below(vec.size());
      const double step = 1e-4, orig = vec[i];
      vec[i] = orig + step;
      const double fp = obj.objective(p);
      vec[i] = orig - step;
      const double fm = obj.objective(p);
      vec[i] = orig;
      const double fd = (fp - fm) / (2 * step);
      const double an = agg ? ga[i] : gi[i];
      const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      worst = std::max(worst, err);
      bad += err > 1e-3;
      ++checked;
    }
  }
  report(4, bad == 0 && checked >= 100,
         fmt("%d coordinates over %d scenes, max relative error %.2e, above 1e-3: %d", checked, scenes,
             worst, bad));
}

struct IdentityRun {
  double psnr_db, sam_deg, seconds;
};

IdentityRun identity_run(const TextureConfig& tc, int side, std::uint64_t seed) {
  const auto t0 = Clock::now();
  const HyperCube proxy = make_random_texture_cube(side, side, 31, seed, tc);
  const SyntheticGuide guide = make_synthetic_guide(project_rgb(proxy), Affine::identity(), {}, 1);
  const SynthesisResult s = synthesize(proxy, guide.image, PipelineConfig{});
  return {psnr(proxy, s.cube), sam(proxy, s.cube), seconds_since(t0)};
}

void criterion_5(bool extra) {
  const IdentityRun r = identity_run(TextureConfig{}, 64, derive_seed(105, "acceptance/identity"));
  report(5, r.psnr_db >= 60.0 && r.sam_deg <= 0.1 && r.seconds < 300.0,
         fmt("64x64x31 default texture, defaults: PSNR %.2f dB (>= 60), SAM %.4f deg (<= 0.1), %.1fs", r.psnr_db,
             r.sam_deg, r.seconds));
  if (!extra) return;
  TextureConfig smooth;
  smooth.correlation = 3.0;
  smooth.sharpness = 2.0;
  const IdentityRun s = identity_run(smooth, 64, derive_seed(105, "acceptance/identity"));
  info(fmt("smoother texture (correlation 3, sharpness 2): PSNR %.2f dB, SAM %.4f deg", s.psnr_db, s.sam_deg));
}

void criterion_6() {
  const int side = 64;
  const HyperCube proxy = make_random_texture_cube(side, side, 31, derive_seed(106, "acceptance/translation"));
  const SyntheticGuide guide = make_synthetic_guide(project_rgb(proxy), Affine::translation(0, 2), {}, 1);
  const SynthesisResult s = synthesize(proxy, guide.image, PipelineConfig{});
  const CoordinateField cf =
      coordinate_field(soft_weights(s.optim.params.aggregation, s.candidates.per_pixel, s.optim.params.temperature),
                       s.candidates);
  double err = 0;
  std::size_t count = 0;
  for (std::size_t u = 0; u < guide.in_bounds.size(); ++u) {
    if (!guide.in_bounds[u]) continue;
    const double ty = guide.source[u][0] - static_cast<double>(u / side);
    const double tx = guide.source[u][1] - static_cast<double>(u % side);
    err += std::hypot(cf.displacement[u][0] - ty, cf.displacement[u][1] - tx);
    ++count;
  }
  err /= static_cast<double>(count);
  report(6, err <= 0.5, fmt("2 px translation, 64x64: mean displacement error %.3f px over %zu pixels (<= 0.5)",
                            err, count));
}

// Min-cost perfect assignment by shortest augmenting paths.
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
  double total = 0;
  for (int j = 1; j <= n; ++j) total += c(p[j] - 1, j - 1);
  return total;
}

void criterion_7(int trials, int oracle_instances) {
  TheorySuiteConfig tc;
  tc.trials = trials;
  const TheorySuiteResult res = run_theory_suite(tc, derive_seed(107, "acceptance/theory"));

  Rng rng(derive_seed(107, "acceptance/assignment"));
  double worst = 0;
  for (int t = 0; t < oracle_instances; ++t) {
    const int n = 2 + static_cast<int>(rng.below(t == 0 ? 1 : 40));
    const int rows = 1 + static_cast<int>(rng.below(4)), cols = 1 + static_cast<int>(rng.below(4));
    auto atoms = [&] {
      std::vector<PairAtom> a;
      for (int i = 0; i < n; ++i) {
        PairAtom x{Eigen::MatrixXd(rows, cols), Eigen::MatrixXd(rows, cols)};
        for (int j = 0; j < x.x.size(); ++j) {
          x.x.data()[j] = rng.normal();
          x.y.data()[j] = rng.normal();
        }
        a.push_back(std::move(x));
      }
      return a;
    };
    const std::vector<PairAtom> a = atoms(), b = atoms();
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = pair_distance(a[i], b[j]);
    const double w = wasserstein1(DiscreteDist::uniform(a), DiscreteDist::uniform(b));
    worst = std::max(worst, std::abs(w - hungarian(c) / n));
  }
  const std::set<double> alphas(tc.alphas.begin(), tc.alphas.end());
  report(7, res.holds(1e-9) && worst <= 1e-9 && alphas == std::set<double>{0, 0.25, 0.5, 0.75, 1},
         fmt("%d coverage trials x 5 alphas min slack %.2e, %d perturbation trials min slack %.2e, "
             "W1 vs assignment oracle on %d instances max error %.2e",
             res.coverage_trials, res.coverage_min_slack, res.perturbation_trials, res.perturbation_min_slack,
             oracle_instances, worst));
}

HyperCube filled(int h, int w, int b, float v) {
  return {h, w, uniform_wavelengths(b, 400, 700), std::vector<float>(static_cast<std::size_t>(h) * w * b, v)};
}

HyperCube random_cube(int h, int w, int b, Rng& rng, double scale = 1.0) {
  std::vector<float> v(static_cast<std::size_t>(h) * w * b);
  for (float& x : v) x = static_cast<float>(scale * rng.uniform());
  return {h, w, uniform_wavelengths(b, 400, 700), std::move(v)};
}

double sam_bruteforce(const HyperCube& a, const HyperCube& b) {
  long double total = 0;
  int count = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      long double dot = 0, na = 0, nb = 0;
      for (int band = 0; band < a.bands(); ++band) {
        const long double p = a.at(band, y, x), q = b.at(band, y, x);
        dot += p * q;
        na += p * p;
        nb += q * q;
      }
      if (std::sqrt(na) <= kSamNormFloor || std::sqrt(nb) <= kSamNormFloor) continue;
      const long double c = std::clamp<long double>(dot / (std::sqrt(na) * std::sqrt(nb)), -1, 1);
      total += std::acos(c);
      ++count;
    }
  return count ? static_cast<double>(total / count * 180.0L / std::numbers::pi_v<long double>) : 0.0;
}

void criterion_8() {
  Rng rng(derive_seed(108, "acceptance/metrics"));
  const double p20 = psnr(filled(16, 16, 31, 0.4f), filled(16, 16, 31, 0.5f));
  const HyperCube x = random_cube(24, 24, 31, rng, 0.5);
  const double s_xx = ssim(x, x);
  std::vector<float> doubled(x.data().begin(), x.data().end());
  for (float& v : doubled) v *= 2.0f;
  const double s_scale = sam(x, HyperCube(24, 24, x.wavelengths(), doubled));
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const HyperCube a = random_cube(12, 10, 31, rng), b = random_cube(12, 10, 31, rng);
    worst = std::max(worst, std::abs(sam(a, b) - sam_bruteforce(a, b)));
  }
  report(8, std::abs(p20 - 20.0) <= 1e-6 && s_xx == 1.0 && s_scale <= 1e-9 && worst <= 1e-6,
         fmt("PSNR(0.1 offset) %.9f dB, SSIM(x,x) %.17g, SAM(x,2x) %.2e deg, SAM vs brute force %.2e deg", p20,
             s_xx, s_scale, worst));
}

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> m;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return m;
}

void criterion_9(const fs::path& work) {
  const fs::path root = work / "determinism";
  fs::remove_all(root);
  PipelineConfig c;
  c.texture.count = 2;
  c.texture.height = c.texture.width = 16;
  c.guides_per_proxy = 3;
  c.ratio = 3.0;
  c.warp.optim.iterations = 20;
  c.theory_trials = 50;
  c.seed = 9;

  std::size_t pairs = 0, proxy_pairs = 0;
  int identical = 0, total = 0, rc_bad = 0;
  std::vector<std::string> differing;
  const char* names[] = {"synth", "pairs", "degrade", "guide", "theory", "metrics"};
  for (const char* name : names) {
    std::vector<std::map<std::string, std::vector<std::uint8_t>>> runs;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = root / name;
      c.out = out.string();
      c.jobs = rep + 1;
      int rc;
      {
        Quiet q;
        const std::string n = name;
        if (n == "synth") rc = cmd_synth(c);
        else if (n == "pairs") rc = cmd_pairs(c);
        else if (n == "degrade") rc = cmd_degrade(c);
        else if (n == "guide") rc = cmd_guide(c);
        else if (n == "theory") rc = cmd_theory(c);
        else {
          const HyperCube a = make_random_texture_cube(16, 16, 31, 1), b = make_random_texture_cube(16, 16, 31, 2);
          fs::create_directories(out);
          save_cube(a, out / "a.hsic");
          save_cube(b, out / "b.hsic");
          rc = cmd_metrics(c, {(out / "a.hsic").string()}, {(out / "b.hsic").string()});
        }
      }
      rc_bad += rc != 0;
      runs.push_back(snapshot(out));
    }
    ++total;
    if (runs[0] == runs[1] && !runs[0].empty()) ++identical;
    else differing.push_back(name);
    if (std::string(name) == "pairs") {
      std::ifstream in(root / "pairs" / "pairs" / "manifest.json");
      const nlohmann::json m = nlohmann::json::parse(in);
      pairs = m.at("pairs").size();
      proxy_pairs = m.at("proxy_pairs").get<std::size_t>();
    }
  }
  std::string diff;
  for (const auto& d : differing) diff += " " + d;
  report(9, pairs == 8 && proxy_pairs == 2 && identical == total && rc_bad == 0,
         fmt("N=2, M=3, r=3: %zu pairs (%zu proxy); %d/%d subcommands byte-identical on rerun (jobs 1 vs 2)%s%s",
             pairs, proxy_pairs, identical, total, differing.empty() ? "" : ", differing:", diff.c_str()));
}

void criterion_10() {
  Rng rng(derive_seed(110, "acceptance/degradation"));
  const HyperCube cube = make_random_texture_cube(64, 64, 31, rng.next_u64());

  DegradationSpec bm;
  bm.kind = DegradationKind::kBandMiss;
  bm.band_miss_ratio = 0.3;
  bm.seed = rng.next_u64();
  const HyperCube missed = apply_degradation(cube, bm);
  int zero_bands = 0;
  for (int b = 0; b < 31; ++b)
    zero_bands += std::all_of(missed.plane(b).begin(), missed.plane(b).end(), [](float v) { return v == 0.0f; });

  DegradationSpec mk;
  mk.kind = DegradationKind::kInpaintMask;
  mk.mask_ratio = 0.9;
  mk.seed = rng.next_u64();
  const HyperCube masked = apply_degradation(cube, mk);
  std::size_t sites = 0;
  for (std::size_t p = 0; p < masked.pixels(); ++p) {
    bool all = true;
    for (int b = 0; b < 31; ++b) all = all && masked.plane(b)[p] == 0.0f;
    sites += all;
  }
  const std::size_t want_sites = static_cast<std::size_t>(std::ceil(0.9 * 64 * 64 - 1e-9));

  auto mean = [](const HyperCube& c) {
    double s = 0;
    for (float v : c.data()) s += v;
    return s / static_cast<double>(c.size());
  };
  DegradationSpec bl;
  bl.kind = DegradationKind::kBlur;
  bl.blur_radius = 15;
  const double blur_shift = std::abs(mean(apply_degradation(cube, bl)) - mean(cube));

  const HyperCube flat = filled(64, 64, 31, 0.37f);
  DegradationSpec sr;
  sr.kind = DegradationKind::kSrBicubic;
  sr.scale = 4;
  const HyperCube down = apply_degradation(flat, sr);
  double spread = 0;
  for (float v : down.data()) spread = std::max(spread, std::abs(double(v) - 0.37f));

  report(10, zero_bands == 10 && sites == want_sites && blur_shift <= 1e-6 && spread <= 1e-6 &&
                 down.height() == 16 && down.width() == 16,
         fmt("band_miss 0.3 on 31 bands zeroes %d (10); mask 0.9 on 64x64 zeroes %zu (%zu); blur r=15 mean shift "
             "%.2e; bicubic x4 constant cube max deviation %.2e",
             zero_bands, sites, want_sites, blur_shift, spread));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hsialign acceptance criteria"};
  std::vector<int> known_failures;
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "hsialign_acceptance").string();
  int c1_iters = 10;
  bool extra = false;
  app.add_option("--known-failure", known_failures, "criteria expected to fail");
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--c1-iterations", c1_iters, "optimizer iterations per criterion 1 run");
  app.add_flag("--extra", extra, "print informational runs");
  CLI11_PARSE(app, argc, argv);

  auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  const auto t0 = Clock::now();
  try {
    if (want(1) || want(2)) criteria_1_2(500, c1_iters);
    if (want(3)) criterion_3(1000);
    if (want(4)) criterion_4(20, 6);
    if (want(5)) criterion_5(extra);
    if (want(6)) criterion_6();
    if (want(7)) criterion_7(200, 100);
    if (want(8)) criterion_8();
    if (want(9)) criterion_9(work);
    if (want(10)) criterion_10();
  } catch (const std::exception& e) {
    std::printf("aborted: %s\n", e.what());
    return 2;
  }

  int passed = 0, unexpected = 0;
  for (const Outcome& o : g_outcomes) {
    passed += o.pass;
    const bool known = std::find(known_failures.begin(), known_failures.end(), o.id) != known_failures.end();
    if (o.pass == known) {
      ++unexpected;
      std::printf("unexpected %s for criterion %d\n", o.pass ? "pass" : "failure", o.id);
    }
  }
  std::printf("%d/%zu criteria pass, %.1fs total\n", passed, g_outcomes.size(), seconds_since(t0));
  return unexpected == 0 ? 0 : 1;
}
