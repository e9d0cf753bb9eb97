#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hsialign/cube.hpp"
#include "hsialign/retrieval.hpp"

namespace hsialign {

/// Coefficients of the seven alignment-loss terms.
struct WarpLossWeights {
  double fidelity = 1.0;   // mean |r~ - g|
  double patch = 1.0;      // 5x5 unfolded patch L1
  double mutual_info = 0.1;
  double ssim = 0.5;       // 1 - SSIM
  double gradient = 0.5;   // mean |grad r~ - grad g|
  double smooth = 0.1;     // coordinate-field smoothness
  double distance = 0.1;   // descriptor-distance prior

  std::array<double, 7> as_array() const {
    return {fidelity, patch, mutual_info, ssim, gradient, smooth, distance};
  }
  void validate() const;
};

/// Adaptive-moment descent settings.
struct OptimConfig {
  int iterations = 200;
  double step = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double stabilizer = 1e-8;

  void validate() const;
};

struct WarpConfig {
  int stencil = 7;            // s; interpolation kernel is s x s
  double temperature = 1.0;   // tau
  double center_logit = 2.0;  // initial interpolation logit at offset (0,0)
  WarpLossWeights weights;
  OptimConfig optim;

  void validate() const;
};

/// Aggregation logits (pixels x candidates) and interpolation logits
/// (pixels x stencil^2, offsets row-major from (-s/2,-s/2)).
struct WarpParams {
  int pixels = 0;
  int candidates = 0;
  int stencil = 0;
  double temperature = 1.0;
  std::vector<double> aggregation;
  std::vector<double> interpolation;
};

enum LossTerm : int {
  kFidelityTerm = 0,
  kPatchTerm,
  kMutualInfoTerm,
  kSsimTerm,
  kGradientTerm,
  kSmoothTerm,
  kDistanceTerm,
};
inline constexpr int kLossTerms = 7;
extern const std::array<const char*, kLossTerms> kLossTermNames;

/// Unweighted term values and the weighted total.
struct LossBreakdown {
  std::array<double, kLossTerms> terms{};
  double total = 0.0;
};

/// Row-wise softmax of logits / tau over groups of `group` entries, computed
/// with max subtraction.
std::vector<double> soft_weights(std::span<const double> logits, int group,
                                 double tau);

/// Per pixel, sum_k w_{u,k} * source(v_{u,k}), for any channel count.
Field pre_interp(std::span<const double> weights, const CandidateSet& cands,
                 const Field& source);

/// Per pixel, sum_eta b_{u,eta} field(clamp(u + eta)) with b the softmax of
/// the interpolation logits over the stencil.
Field interp_apply(std::span<const double> interp_logits, int stencil,
                   const Field& field);

/// Same as interp_apply, with already-normalized kernel weights.
Field interp_apply_weights(std::span<const double> interp_weights, int stencil,
                           const Field& field);

struct CoordinateField {
  int height = 0;
  int width = 0;
  std::vector<std::array<double, 2>> expected;      // c(u), (y, x)
  std::vector<std::array<double, 2>> displacement;  // c(u) - u
  std::vector<std::array<double, 2>> normalized;    // (c_y / H, c_x / W)
};

CoordinateField coordinate_field(std::span<const double> weights,
                                 const CandidateSet& cands);

/// Soft-histogram mutual information (32 bins on [0,1], Gaussian Parzen
/// kernel one bin wide) between two equally sized signals.
double soft_mutual_information(std::span<const double> a,
                               std::span<const double> b);

/// Composite RGB alignment loss over a fixed candidate set, with a
/// hand-derived reverse pass.
///
/// Two evaluations are exposed: `loss` reports the true L1 terms, while
/// `objective`/`objective_and_gradient` use sqrt(x^2 + 1e-16) in place of
/// |x| so the objective is differentiable everywhere. The mutual-information
/// term is reported as H(guide) - MI, which is >= 0 and has the same
/// gradient as -MI.
class WarpObjective {
 public:
  WarpObjective(CandidateSet cands, RgbImage proxy_rgb, RgbImage guide_rgb,
                WarpLossWeights weights, int stencil, double temperature);

  const CandidateSet& candidates() const noexcept { return cands_; }
  const RgbImage& proxy_rgb() const noexcept { return proxy_; }
  const RgbImage& guide_rgb() const noexcept { return guide_; }
  const WarpLossWeights& weights() const noexcept { return weights_; }
  int stencil() const noexcept { return stencil_; }
  double temperature() const noexcept { return tau_; }
  /// d_{u,k} / (mean d + eps).
  std::span<const double> normalized_distances() const noexcept {
    return dist_hat_;
  }

  /// l_{u,k} = -dhat_{u,k}; interpolation logits `center_logit` at the
  /// center offset and 0 elsewhere.
  WarpParams initial_params(double center_logit = 2.0) const;

  LossBreakdown loss(const WarpParams& params) const;
  double objective(const WarpParams& params) const;

  /// Smooth objective; fills gradients w.r.t. both logit arrays. When
  /// `reported` is non-null it also receives the true-L1 breakdown of the
  /// same parameters.
  double objective_and_gradient(const WarpParams& params,
                                std::vector<double>& grad_aggregation,
                                std::vector<double>& grad_interpolation,
                                LossBreakdown* reported = nullptr) const;

  /// r~ for the given parameters.
  Field render(const WarpParams& params) const;

 private:
  struct Forward;
  void check(const WarpParams& params) const;
  Forward forward(const WarpParams& params) const;
  LossBreakdown terms(const Forward& fw, bool smooth) const;

  CandidateSet cands_;
  RgbImage proxy_;
  RgbImage guide_;
  WarpLossWeights weights_;
  int stencil_;
  double tau_;
  int height_;
  int width_;
  std::size_t n_;
  std::vector<int> cand_index_;     // n * K linear indices
  std::vector<int> stencil_index_;  // n * s^2 clamped linear indices
  std::vector<double> patch_count_; // replicate-padded patch multiplicity
  std::vector<double> dist_hat_;
  Field guide_grad_;
  std::vector<double> guide_lum_;
  std::vector<double> guide_bins_;  // n * bins normalized Parzen weights
  std::vector<double> guide_marginal_;
  double guide_entropy_ = 0.0;
};

struct OptimResult {
  WarpParams params;
  std::vector<LossBreakdown> trace;  // iterations + 1 entries
};

/// Adaptive-moment descent on both logit arrays. trace[i] is the reported
/// loss before step i; the last entry is the loss of the returned params.
/// Throws Error naming the iteration on a non-finite loss.
OptimResult optimize(const WarpObjective& objective, WarpParams initial,
                     const OptimConfig& cfg);

/// CSV with columns iteration,total,<seven term names>.
std::string trace_csv(const std::vector<LossBreakdown>& trace);

}  // namespace hsialign
