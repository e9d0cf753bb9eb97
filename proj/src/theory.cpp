#include "hsialign/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hsialign/error.hpp"
#include "hsialign/rng.hpp"

namespace hsialign {

double pair_distance(const PairAtom& a, const PairAtom& b) {
  if (a.x.rows() != b.x.rows() || a.x.cols() != b.x.cols() || a.y.rows() != b.y.rows() ||
      a.y.cols() != b.y.cols())
    throw DimensionMismatch("pair_distance: atom shapes differ");
  return (a.x - b.x).norm() + (a.y - b.y).norm();
}

DiscreteDist::DiscreteDist(std::vector<PairAtom> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (atoms_.empty()) throw InvalidInput("DiscreteDist: no atoms");
  if (atoms_.size() != weights_.size())
    throw DimensionMismatch("DiscreteDist: atom and weight counts differ");
  double sum = 0.0;
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0) throw InvalidInput("DiscreteDist: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InvalidInput("DiscreteDist: weights do not sum to 1");
  const auto& first = atoms_.front();
  for (const auto& a : atoms_) {
    if (a.x.rows() != first.x.rows() || a.x.cols() != first.x.cols() ||
        a.y.rows() != first.y.rows() || a.y.cols() != first.y.cols())
      throw DimensionMismatch("DiscreteDist: atom shapes differ");
    if (!a.x.allFinite() || !a.y.allFinite())
      throw InvalidInput("DiscreteDist: non-finite atom entry");
  }
}

DiscreteDist DiscreteDist::uniform(std::vector<PairAtom> atoms) {
  if (atoms.empty()) throw InvalidInput("DiscreteDist: no atoms");
  std::vector<double> w(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
  // Push the rounding residue into the last weight so the sum is as close to
  // 1 as double allows.
  const double sum = std::accumulate(w.begin(), w.end() - 1, 0.0);
  w.back() = 1.0 - sum;
  return DiscreteDist(std::move(atoms), std::move(w));
}

DiscreteDist mixture(const DiscreteDist& p, const DiscreteDist& q, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("mixture: alpha outside [0,1]");
  std::vector<PairAtom> atoms;
  std::vector<double> weights;
  auto add = [&](const DiscreteDist& d, double scale) {
    if (scale == 0.0) return;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double w = scale * d.weights()[i];
      if (w == 0.0) continue;
      atoms.push_back(d.atoms()[i]);
      weights.push_back(w);
    }
  };
  add(p, 1.0 - alpha);
  add(q, alpha);
  return DiscreteDist(std::move(atoms), std::move(weights));
}

namespace {

// Transportation simplex on an m x n problem. The basis is kept as a
// spanning tree of m + n - 1 cells over row nodes [0, m) and column nodes
// [m, m + n); degenerate (zero-flow) basic cells are allowed.
class TransportSimplex {
 public:
  TransportSimplex(std::span<const double> supply, std::span<const double> demand,
                   const Eigen::MatrixXd& cost)
      : m_(supply.size()), n_(demand.size()), cost_(cost), flow_(m_ * n_, 0.0),
        basic_(m_ * n_, 0) {
    north_west(supply, demand);
  }

  double solve() {
    double scale = 1.0;
    for (Eigen::Index i = 0; i < cost_.size(); ++i)
      scale = std::max(scale, std::abs(cost_.data()[i]));
    const double tol = 1e-12 * scale;
    std::vector<double> u(m_), v(n_);
    const std::size_t limit = 50 * (m_ + n_) * m_ * n_ + 1000;
    for (std::size_t iter = 0;; ++iter) {
      if (iter > limit) throw ConvergenceError("transport simplex: iteration limit", 0.0);
      potentials(u, v);
      // Bland's rule: first improving cell in row-major order.
      std::size_t enter = kNone;
      for (std::size_t i = 0; i < m_ && enter == kNone; ++i)
        for (std::size_t j = 0; j < n_; ++j) {
          const std::size_t c = i * n_ + j;
          if (!basic_[c] && cost_(i, j) - u[i] - v[j] < -tol) {
            enter = c;
            break;
          }
        }
      if (enter == kNone) break;
      pivot(enter);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j) total += flow_[i * n_ + j] * cost_(i, j);
    return total;
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  void north_west(std::span<const double> supply, std::span<const double> demand) {
    std::size_t i = 0, j = 0;
    double ra = supply[0], rb = demand[0];
    while (true) {
      const std::size_t c = i * n_ + j;
      const double x = std::min(ra, rb);
      basic_[c] = 1;
      flow_[c] = std::max(x, 0.0);
      ra -= x;
      rb -= x;
      if (i == m_ - 1 && j == n_ - 1) break;
      if ((ra <= rb && i < m_ - 1) || j == n_ - 1) {
        ++i;
        ra = supply[i];
      } else {
        ++j;
        rb = demand[j];
      }
    }
  }

  void adjacency(std::vector<std::vector<std::size_t>>& adj) const {
    adj.assign(m_ + n_, {});
    for (std::size_t c = 0; c < m_ * n_; ++c) {
      if (!basic_[c]) continue;
      const std::size_t i = c / n_, j = c % n_;
      adj[i].push_back(m_ + j);
      adj[m_ + j].push_back(i);
    }
  }

  // u_i + v_j = c_ij on every basic cell, u_0 = 0.
  void potentials(std::vector<double>& u, std::vector<double>& v) {
    adjacency(adj_);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    u[0] = 0.0;
    while (!stack.empty()) {
      const std::size_t a = stack.back();
      stack.pop_back();
      for (std::size_t b : adj_[a]) {
        if (seen[b]) continue;
        seen[b] = 1;
        if (a < m_)
          v[b - m_] = cost_(a, b - m_) - u[a];
        else
          u[b] = cost_(b, a - m_) - v[a - m_];
        stack.push_back(b);
      }
    }
  }

  void pivot(std::size_t enter) {
    const std::size_t ei = enter / n_, ej = enter % n_;
    // Tree path from row node ei to column node m + ej.
    std::vector<std::size_t> parent(m_ + n_, kNone);
    std::vector<std::size_t> queue{ei};
    parent[ei] = ei;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const std::size_t a = queue[h];
      if (a == m_ + ej) break;
      for (std::size_t b : adj_[a])
        if (parent[b] == kNone) {
          parent[b] = a;
          queue.push_back(b);
        }
    }
    // Walk back from the column end; cells alternate -, +, -, ...
    std::vector<std::size_t> minus, plus;
    std::size_t node = m_ + ej;
    bool negative = true;
    while (node != ei) {
      const std::size_t prev = parent[node];
      const std::size_t i = node < m_ ? node : prev;
      const std::size_t j = (node < m_ ? prev : node) - m_;
      (negative ? minus : plus).push_back(i * n_ + j);
      negative = !negative;
      node = prev;
    }
    std::size_t leave = kNone;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t c : minus)
      if (flow_[c] < theta || (flow_[c] == theta && c < leave)) {
        theta = flow_[c];
        leave = c;
      }
    flow_[enter] += theta;
    for (std::size_t c : plus) flow_[c] += theta;
    for (std::size_t c : minus) flow_[c] = std::max(0.0, flow_[c] - theta);
    flow_[leave] = 0.0;
    basic_[leave] = 0;
    basic_[enter] = 1;
  }

  std::size_t m_, n_;
  const Eigen::MatrixXd& cost_;
  std::vector<double> flow_;
  std::vector<char> basic_;
  std::vector<std::vector<std::size_t>> adj_;
};

}  // namespace

double transport_cost(std::span<const double> supply, std::span<const double> demand,
                      const Eigen::MatrixXd& cost) {
  if (supply.empty() || demand.empty()) throw InvalidInput("transport_cost: empty marginal");
  if (cost.rows() != static_cast<Eigen::Index>(supply.size()) ||
      cost.cols() != static_cast<Eigen::Index>(demand.size()))
    throw DimensionMismatch("transport_cost: cost matrix shape");
  const double sa = std::accumulate(supply.begin(), supply.end(), 0.0);
  const double sb = std::accumulate(demand.begin(), demand.end(), 0.0);
  if (std::abs(sa - sb) > 1e-9 * std::max(1.0, sa))
    throw InvalidInput("transport_cost: unbalanced marginals");
  TransportSimplex simplex(supply, demand, cost);
  return std::max(0.0, simplex.solve());
}

double wasserstein1(const DiscreteDist& p, const DiscreteDist& q) {
  if (p.size() > kMaxTransportAtoms || q.size() > kMaxTransportAtoms)
    throw InvalidInput("wasserstein1: support exceeds 64 atoms");
  Eigen::MatrixXd cost(p.size(), q.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j)
      cost(i, j) = pair_distance(p.atoms()[i], q.atoms()[j]);
  return transport_cost(p.weights(), q.weights(), cost);
}

double BoundReport::min_slack() const {
  double s = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) s = std::min(s, r.slack);
  return s;
}

nlohmann::json to_json(const BoundReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"lemma", r.lemma},
                    {"alpha", r.alpha},
                    {"lhs", r.lhs},
                    {"rhs", r.rhs},
                    {"slack", r.slack},
                    {"holds", r.slack >= -1e-9}});
  return {{"delta_p", report.delta_p},
          {"delta_w", report.delta_w},
          {"e_w", report.e_w},
          {"eps_p", report.eps_p},
          {"eps_g", report.eps_g},
          {"kappa", report.kappa},
          {"lipschitz_d", report.lipschitz_d},
          {"mean_error_norm", report.mean_error_norm},
          {"mean_sq_error_norm", report.mean_sq_error_norm},
          {"mean_warped_error", report.mean_warped_error},
          {"rows", rows},
          {"holds", report.holds()}};
}

BoundReport check_mixture_coverage(const DiscreteDist& target, const DiscreteDist& proxy_clean,
                                   const DiscreteDist& generated_clean,
                                   const DiscreteDist& vicinal, std::span<const double> alphas) {
  BoundReport r;
  r.delta_p = wasserstein1(target, proxy_clean);
  r.delta_w = wasserstein1(target, vicinal);
  r.e_w = wasserstein1(generated_clean, vicinal);
  for (double alpha : alphas) {
    LemmaRow row;
    row.lemma = "mixture_coverage";
    row.alpha = alpha;
    row.lhs = wasserstein1(target, mixture(proxy_clean, generated_clean, alpha));
    row.rhs = r.delta_alpha(alpha);
    row.slack = row.rhs - row.lhs;
    r.rows.push_back(row);
  }
  return r;
}

LinearOperator LinearOperator::identity() {
  return {[](const Eigen::MatrixXd& x) { return x; }, 1.0, "identity"};
}

LinearOperator LinearOperator::scaled(double factor) {
  return {[factor](const Eigen::MatrixXd& x) -> Eigen::MatrixXd { return factor * x; },
          std::abs(factor), "scaled"};
}

LinearOperator LinearOperator::matrix(const Eigen::MatrixXd& m, std::string name) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const double norm = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  return {[m](const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
            if (x.rows() != m.cols()) throw DimensionMismatch("LinearOperator: shape");
            return m * x;
          },
          norm, std::move(name)};
}

namespace {

Eigen::MatrixXd apply_rows(const SparseRows& op, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.rows()) != op.size())
    throw DimensionMismatch("check_pair_perturbation: sample rows differ from warp size");
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    op.apply(std::span<const double>(x.col(c).data(), x.rows()),
             std::span<double>(y.col(c).data(), y.rows()));
  return y;
}

}  // namespace

BoundReport check_pair_perturbation(const std::vector<Eigen::MatrixXd>& clean,
                                    const std::vector<Eigen::MatrixXd>& errors,
                                    const LinearOperator& degradation, const SparseRows& warp) {
  if (clean.empty()) throw InvalidInput("check_pair_perturbation: no samples");
  if (clean.size() != errors.size())
    throw DimensionMismatch("check_pair_perturbation: sample and error counts differ");
  const std::size_t count = clean.size();
  std::vector<PairAtom> proxy_clean, proxy_actual, gen_clean, gen_actual;
  BoundReport r;
  r.lipschitz_d = degradation.lipschitz;
  for (std::size_t i = 0; i < count; ++i) {
    if (clean[i].rows() != errors[i].rows() || clean[i].cols() != errors[i].cols())
      throw DimensionMismatch("check_pair_perturbation: error shape");
    const Eigen::MatrixXd actual = clean[i] + errors[i];
    proxy_clean.push_back({degradation.apply(clean[i]), clean[i]});
    proxy_actual.push_back({degradation.apply(actual), actual});
    const Eigen::MatrixXd tc = apply_rows(warp, clean[i]);
    const Eigen::MatrixXd ta = apply_rows(warp, actual);
    gen_clean.push_back({degradation.apply(tc), tc});
    gen_actual.push_back({degradation.apply(ta), ta});
    const double e = errors[i].norm();
    r.mean_error_norm += e;
    r.mean_sq_error_norm += e * e;
    r.mean_warped_error += apply_rows(warp, errors[i]).norm();
  }
  const double inv = 1.0 / static_cast<double>(count);
  r.mean_error_norm *= inv;
  r.mean_sq_error_norm *= inv;
  r.mean_warped_error *= inv;
  r.kappa = overlap_kappa(warp).kappa;

  r.eps_p = wasserstein1(DiscreteDist::uniform(std::move(proxy_actual)),
                         DiscreteDist::uniform(std::move(proxy_clean)));
  r.eps_g = wasserstein1(DiscreteDist::uniform(std::move(gen_actual)),
                         DiscreteDist::uniform(std::move(gen_clean)));
  const double lift = 1.0 + r.lipschitz_d;
  auto add = [&](const char* name, double lhs, double rhs) {
    r.rows.push_back({name, 0.0, lhs, rhs, rhs - lhs});
  };
  add("proxy_perturbation", r.eps_p, lift * r.mean_error_norm);
  add("generated_perturbation_linear", r.eps_g, lift * r.mean_warped_error);
  add("generated_perturbation", r.eps_g, lift * std::sqrt(r.kappa * r.mean_sq_error_norm));
  return r;
}

double improvement_condition(const ImprovementInputs& in) {
  if (in.m_s <= 0.0 || in.m_eff <= 0.0)
    throw InvalidInput("improvement_condition: sample sizes must be positive");
  const double lhs = in.lipschitz * (in.delta_s - in.delta_alpha) +
                     (in.c_s / in.m_s - in.c_v / in.m_eff) + in.bias_gap;
  const double rhs = in.alpha * in.b_warp_sq + 2.0 * in.lipschitz * in.eps_alpha;
  return lhs - rhs;
}

double improvement_condition(const BoundReport& report, ImprovementInputs in) {
  in.delta_alpha = report.delta_alpha(in.alpha);
  in.eps_alpha = report.eps_alpha(in.alpha);
  return improvement_condition(in);
}

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

DiscreteDist random_dist(Rng& rng, const TheorySuiteConfig& cfg, double shift) {
  std::vector<PairAtom> atoms;
  std::vector<double> w;
  double sum = 0.0;
  for (int a = 0; a < cfg.atoms; ++a) {
    PairAtom atom{random_matrix(rng, cfg.rows, cfg.cols, 1.0),
                  random_matrix(rng, cfg.rows, cfg.cols, 1.0)};
    atom.x.array() += shift;
    atom.y.array() += shift;
    atoms.push_back(std::move(atom));
    w.push_back(0.1 + rng.uniform());
    sum += w.back();
  }
  for (double& x : w) x /= sum;
  double rest = std::accumulate(w.begin(), w.end() - 1, 0.0);
  w.back() = 1.0 - rest;
  return DiscreteDist(std::move(atoms), std::move(w));
}

// Random row-stochastic operator with support <= 4 drawn near the diagonal.
SparseRows random_stochastic(Rng& rng, int n) {
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
  for (int u = 0; u < n; ++u) {
    const int k = 1 + static_cast<int>(rng.below(4));
    double sum = 0.0;
    for (int t = 0; t < k; ++t) {
      const std::uint32_t v = static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(n)));
      const double w = 0.05 + rng.uniform();
      rows[u].push_back({v, w});
      sum += w;
    }
    for (auto& e : rows[u]) e.second /= sum;
  }
  return SparseRows::from_triplets(static_cast<std::size_t>(n), rows);
}

LinearOperator random_degradation(Rng& rng, int n, int trial) {
  switch (trial % 3) {
    case 0:
      return LinearOperator::identity();
    case 1:
      return LinearOperator::scaled(rng.uniform(0.2, 2.0));
    default: {
      // Periodic 1-D box blur over the pixel index: doubly stochastic
      // circulant, spectral norm 1.
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i)
        for (int d = -1; d <= 1; ++d) m(i, (i + d + n) % n) = 1.0 / 3.0;
      return LinearOperator::matrix(m, "box_blur");
    }
  }
}

}  // namespace

TheorySuiteResult run_theory_suite(const TheorySuiteConfig& cfg, std::uint64_t seed) {
  if (cfg.trials < 1 || cfg.atoms < 1 || cfg.rows < 1 || cfg.cols < 1 || cfg.lattice < 1 ||
      cfg.samples < 1)
    throw InvalidInput("run_theory_suite: sizes must be positive");
  TheorySuiteResult res;
  res.coverage_min_slack = std::numeric_limits<double>::infinity();
  res.perturbation_min_slack = std::numeric_limits<double>::infinity();
  const int n = cfg.lattice * cfg.lattice;
  for (int t = 0; t < cfg.trials; ++t) {
    Rng rng(derive_seed(seed, "theory/coverage", static_cast<std::uint64_t>(t)));
    const DiscreteDist target = random_dist(rng, cfg, 0.0);
    const DiscreteDist proxy = random_dist(rng, cfg, rng.uniform(-1.0, 1.0));
    const DiscreteDist gen = random_dist(rng, cfg, rng.uniform(-1.0, 1.0));
    const DiscreteDist vic = random_dist(rng, cfg, rng.uniform(-1.0, 1.0));
    BoundReport cov = check_mixture_coverage(target, proxy, gen, vic, cfg.alphas);
    res.coverage_min_slack = std::min(res.coverage_min_slack, cov.min_slack());
    ++res.coverage_trials;
    if (t == 0) res.reports.push_back(std::move(cov));

    Rng prng(derive_seed(seed, "theory/perturbation", static_cast<std::uint64_t>(t)));
    const SparseRows warp = random_stochastic(prng, n);
    const LinearOperator deg = random_degradation(prng, n, t);
    std::vector<Eigen::MatrixXd> clean, err;
    const double noise = prng.uniform(0.01, 0.5);
    for (int s = 0; s < cfg.samples; ++s) {
      clean.push_back(random_matrix(prng, n, cfg.cols, 1.0));
      err.push_back(random_matrix(prng, n, cfg.cols, noise));
    }
    BoundReport pert = check_pair_perturbation(clean, err, deg, warp);
    res.perturbation_min_slack = std::min(res.perturbation_min_slack, pert.min_slack());
    ++res.perturbation_trials;
    if (t == 0) res.reports.push_back(std::move(pert));
  }
  return res;
}

}  // namespace hsialign
