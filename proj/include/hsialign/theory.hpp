#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hsialign/transport.hpp"
#include "json.hpp"

namespace hsialign {

/// One (input, label) sample; x and y are matrices (pixels x bands when the
/// atom comes from a cube).
struct PairAtom {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
};

/// ||x - x'||_F + ||y - y'||_F.
double pair_distance(const PairAtom& a, const PairAtom& b);

/// Finite-support distribution over pair atoms.
class DiscreteDist {
 public:
  DiscreteDist() = default;
  /// Weights must be nonnegative and sum to 1 within 1e-12.
  DiscreteDist(std::vector<PairAtom> atoms, std::vector<double> weights);
  static DiscreteDist uniform(std::vector<PairAtom> atoms);

  std::size_t size() const noexcept { return atoms_.size(); }
  const std::vector<PairAtom>& atoms() const noexcept { return atoms_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

 private:
  std::vector<PairAtom> atoms_;
  std::vector<double> weights_;
};

/// (1 - alpha) P + alpha Q, atoms of P first; zero-weight atoms dropped.
DiscreteDist mixture(const DiscreteDist& p, const DiscreteDist& q, double alpha);

inline constexpr std::size_t kMaxTransportAtoms = 64;

/// Exact optimal transport cost of a balanced transportation problem with
/// the given cost matrix (rows: supply, columns: demand).
double transport_cost(std::span<const double> supply, std::span<const double> demand,
                      const Eigen::MatrixXd& cost);

/// Exact 1-Wasserstein distance under the pair metric. Either support
/// larger than 64 atoms throws InvalidInput.
double wasserstein1(const DiscreteDist& p, const DiscreteDist& q);

/// One checked inequality lhs <= rhs; slack = rhs - lhs.
struct LemmaRow {
  std::string lemma;
  double alpha = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
};

struct BoundReport {
  double delta_p = 0.0;
  double delta_w = 0.0;
  double e_w = 0.0;
  double eps_p = 0.0;
  double eps_g = 0.0;
  double kappa = 0.0;
  double lipschitz_d = 0.0;
  double mean_error_norm = 0.0;     // mean ||E||_F
  double mean_sq_error_norm = 0.0;  // mean ||E||_F^2
  double mean_warped_error = 0.0;   // mean ||T E||_F
  std::vector<LemmaRow> rows;

  double delta_alpha(double alpha) const {
    return (1.0 - alpha) * delta_p + alpha * delta_w + alpha * e_w;
  }
  double eps_alpha(double alpha) const { return (1.0 - alpha) * eps_p + alpha * eps_g; }
  double min_slack() const;
  bool holds(double tolerance = 1e-9) const { return rows.empty() || min_slack() >= -tolerance; }
};

nlohmann::json to_json(const BoundReport& report);

/// For each alpha: W1(P_t, (1-a) P_p* + a P_g*) <= (1-a) Delta_p + a Delta_w + a e_w.
BoundReport check_mixture_coverage(const DiscreteDist& target, const DiscreteDist& proxy_clean,
                                   const DiscreteDist& generated_clean,
                                   const DiscreteDist& vicinal, std::span<const double> alphas);

/// Linear degradation with a known operator norm.
struct LinearOperator {
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> apply;
  double lipschitz = 1.0;
  std::string name;

  static LinearOperator identity();
  static LinearOperator scaled(double factor);
  /// Left multiplication by a matrix; Lipschitz constant is its largest
  /// singular value.
  static LinearOperator matrix(const Eigen::MatrixXd& m, std::string name = "matrix");
};

/// Builds P_p, P_p*, P_g, P_g* as uniform empirical distributions over the
/// samples (P_o = Y_o + E) and checks
///   W1(P_p, P_p*) <= (1 + L_D) mean ||E||_F
///   W1(P_g, P_g*) <= (1 + L_D) mean ||T E||_F <= (1 + L_D) sqrt(kappa mean ||E||_F^2).
/// T acts on the rows (pixels) of each sample matrix.
BoundReport check_pair_perturbation(const std::vector<Eigen::MatrixXd>& clean,
                                    const std::vector<Eigen::MatrixXd>& errors,
                                    const LinearOperator& degradation, const SparseRows& warp);

/// Left-hand side minus right-hand side of the improvement condition
///   L (Delta_s - Delta_alpha) + (C_s/m_s - C_v/m_eff) + bias_gap
///     > alpha B_warp^2 + 2 L eps(alpha).
/// Positive means the mixed-training bound is the tighter one. The ERM
/// constants are user supplied.
struct ImprovementInputs {
  double lipschitz = 1.0;  // L
  double delta_s = 0.0;
  double delta_alpha = 0.0;
  double c_s = 0.0;
  double m_s = 1.0;
  double c_v = 0.0;
  double m_eff = 1.0;
  double bias_gap = 0.0;  // B_src^2 - B_0^2
  double alpha = 0.0;
  double b_warp_sq = 0.0;
  double eps_alpha = 0.0;
};

double improvement_condition(const ImprovementInputs& in);
/// Takes Delta_alpha and eps(alpha) from a report at `in.alpha`.
double improvement_condition(const BoundReport& report, ImprovementInputs in);

struct TheorySuiteConfig {
  int trials = 200;
  int atoms = 6;      // per distribution
  int rows = 4;       // atom matrix shape
  int cols = 3;
  int lattice = 4;    // pair-perturbation samples are lattice^2 x cols
  int samples = 6;
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
};

struct TheorySuiteResult {
  int coverage_trials = 0;
  int perturbation_trials = 0;
  double coverage_min_slack = 0.0;
  double perturbation_min_slack = 0.0;
  std::vector<BoundReport> reports;  // first of each kind, for display

  bool holds(double tolerance = 1e-9) const {
    return coverage_min_slack >= -tolerance && perturbation_min_slack >= -tolerance;
  }
};

/// Randomized instances of both lemma checks, reproducible from the seed.
TheorySuiteResult run_theory_suite(const TheorySuiteConfig& cfg, std::uint64_t seed);

}  // namespace hsialign
