#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hsialign/cube.hpp"
#include "hsialign/retrieval.hpp"
#include "hsialign/warp.hpp"
#include "json.hpp"

namespace hsialign {

/// Square compressed-row matrix over an n-pixel lattice. Columns within a
/// row are strictly increasing (duplicates merged, exact zeros dropped).
class SparseRows {
 public:
  SparseRows() = default;
  /// Takes ownership of CSR arrays; validates ordering and bounds.
  SparseRows(std::size_t n, std::vector<std::size_t> offsets,
             std::vector<std::uint32_t> columns, std::vector<double> weights);

  /// Builds a row from unsorted (column, weight) entries, merging duplicates.
  static SparseRows from_triplets(
      std::size_t n, const std::vector<std::vector<std::pair<std::uint32_t, double>>>& rows);
  static SparseRows identity(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  std::size_t nonzeros() const noexcept { return columns_.size(); }
  std::size_t support(std::size_t row) const { return offsets_[row + 1] - offsets_[row]; }
  std::size_t max_support() const;
  std::span<const std::uint32_t> columns(std::size_t row) const {
    return {columns_.data() + offsets_[row], support(row)};
  }
  std::span<const double> weights(std::size_t row) const {
    return {weights_.data() + offsets_[row], support(row)};
  }
  std::span<double> mutable_weights(std::size_t row) {
    return {weights_.data() + offsets_[row], support(row)};
  }
  const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }

  /// y = M x.
  void apply(std::span<const double> x, std::span<double> y) const;
  /// y = M^T x.
  void apply_transpose(std::span<const double> x, std::span<double> y) const;
  /// Each channel plane multiplied independently.
  Field apply(const Field& field) const;

  friend bool operator==(const SparseRows&, const SparseRows&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> columns_;
  std::vector<double> weights_;
};

/// Frozen warp: aggregation A (support <= K), interpolation B (support
/// <= s^2) and the composite T = B A (support <= K s^2).
struct SparseWarp {
  int height = 0;
  int width = 0;
  int candidates = 0;  // K
  int stencil = 0;     // s
  SparseRows aggregation;
  SparseRows interpolation;
  SparseRows composite;

  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t support_bound() const noexcept {
    return static_cast<std::size_t>(candidates) * stencil * stencil;
  }
};

SparseRows freeze_aggregation(std::span<const double> weights, const CandidateSet& cands);
SparseRows freeze_interpolation(std::span<const double> weights, int stencil, int height,
                                int width);

/// Softmax of the optimized logits, merged into A and B, then T = B A.
SparseWarp freeze(const WarpParams& params, const CandidateSet& cands);

/// Sparse product left * right (apply `right` first).
SparseRows compose(const SparseRows& left, const SparseRows& right);

struct TransferResult {
  HyperCube cube;
  std::size_t clamped = 0;
};

/// y_bar = A p, y_tilde = B y_bar, band by band, accumulated in double.
TransferResult transfer(const SparseRows& aggregation, const SparseRows& interpolation,
                        const HyperCube& cube);
/// Single-operator transfer T p.
TransferResult transfer(const SparseRows& op, const HyperCube& cube);

struct ContainmentReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst_excess = 0.0;
  std::vector<std::size_t> rows;  // offending rows, ascending, at most 32
};

/// For every (row u, band b), output(u,b) must lie within [min, max] of
/// source(v,b) over the support of row u, up to `tolerance`.
ContainmentReport check_containment(const SparseRows& op, const HyperCube& source,
                                    const HyperCube& output, double tolerance = 0.0);

struct OperatorReport {
  bool nonnegative = true;
  bool stochastic = true;
  bool support_ok = true;
  bool contained = true;
  std::size_t max_support = 0;
  double max_row_sum_error = 0.0;
  std::vector<std::size_t> negative_rows;
  std::vector<std::size_t> row_sum_rows;
  std::vector<std::size_t> support_rows;
  ContainmentReport containment;

  bool ok() const noexcept { return nonnegative && stochastic && support_ok && contained; }
  std::string summary() const;
};

nlohmann::json to_json(const OperatorReport& report);

inline constexpr double kRowSumTolerance = 1e-9;

/// Nonnegativity, row sums within 1e-9, support <= bound, and convex
/// containment on a random probe cube of `probe_bands` bands.
OperatorReport verify_operator(const SparseRows& op, int height, int width,
                               std::size_t support_bound, std::uint64_t probe_seed = 1,
                               int probe_bands = 8);

struct KappaResult {
  double kappa = 0.0;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> vector;  // unit top eigenvector of T^T T
};

/// Largest eigenvalue of T^T T by power iteration from the all-ones vector
/// (slightly perturbed). Stops when ||T^T T v - kappa v|| <= tol * kappa;
/// throws ConvergenceError after max_iterations.
KappaResult overlap_kappa(const SparseRows& op, double tolerance = 1e-8,
                          int max_iterations = 10000);

/// Contents of an "SWRP" container: the composite operator and the K, s it
/// was built with.
struct StoredWarp {
  std::uint32_t candidates = 0;
  std::uint32_t stencil = 0;
  SparseRows op;
};

std::vector<std::uint8_t> encode_warp(const SparseWarp& warp);
StoredWarp decode_warp(const std::vector<std::uint8_t>& bytes);
void save_warp(const SparseWarp& warp, const std::filesystem::path& path);
StoredWarp load_warp(const std::filesystem::path& path);

}  // namespace hsialign
