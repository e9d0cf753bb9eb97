#include "hsialign/warp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

#include "hsialign/error.hpp"
#include "ssim_window.hpp"

namespace hsialign {

const std::array<const char*, kLossTerms> kLossTermNames = {
    "fidelity", "patch", "mutual_info", "ssim", "gradient", "smooth", "distance"};

namespace {

constexpr double kSmoothDelta2 = 1e-16;  // delta = 1e-8
constexpr double kDistEps = 1e-6;
constexpr int kPatchSide = 5;
constexpr int kMiBins = 32;
constexpr double kMiSigma = 1.0 / kMiBins;
constexpr double kMiEps = 1e-10;

double absf(double x, bool smooth) {
  return smooth ? std::sqrt(x * x + kSmoothDelta2) : std::abs(x);
}
double dabsf(double x) { return x / std::sqrt(x * x + kSmoothDelta2); }

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + " must be finite");
  }
}

void softmax_group(const double* in, double* out, int group, double tau) {
  double mx = in[0] / tau;
  for (int k = 1; k < group; ++k) mx = std::max(mx, in[k] / tau);
  double z = 0.0;
  for (int k = 0; k < group; ++k) {
    out[k] = std::exp(in[k] / tau - mx);
    z += out[k];
  }
  for (int k = 0; k < group; ++k) out[k] /= z;
}

// Normalized Parzen weights of one value over the bin centers, plus the
// kernel derivative factors z_i = -(x - c_i) / sigma^2.
void parzen(double x, double* w, double* z) {
  double mx = -1e300;
  for (int i = 0; i < kMiBins; ++i) {
    const double d = x - (i + 0.5) / kMiBins;
    w[i] = -d * d / (2.0 * kMiSigma * kMiSigma);
    if (z) z[i] = -d / (kMiSigma * kMiSigma);
    mx = std::max(mx, w[i]);
  }
  double s = 0.0;
  for (int i = 0; i < kMiBins; ++i) {
    w[i] = std::exp(w[i] - mx);
    s += w[i];
  }
  for (int i = 0; i < kMiBins; ++i) w[i] /= s;
}

struct JointHistogram {
  std::vector<double> joint;  // bins x bins, (i: first signal, j: second)
  std::vector<double> pa, pb;
};

JointHistogram histogram(std::span<const double> wa, std::span<const double> wb,
                         std::size_t n) {
  JointHistogram h{std::vector<double>(kMiBins * kMiBins, 0.0),
                   std::vector<double>(kMiBins, 0.0),
                   std::vector<double>(kMiBins, 0.0)};
  for (std::size_t u = 0; u < n; ++u) {
    const double* a = wa.data() + u * kMiBins;
    const double* b = wb.data() + u * kMiBins;
    for (int i = 0; i < kMiBins; ++i) {
      h.pa[i] += a[i];
      h.pb[i] += b[i];
      double* row = h.joint.data() + i * kMiBins;
      for (int j = 0; j < kMiBins; ++j) row[j] += a[i] * b[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : h.joint) v *= inv;
  for (double& v : h.pa) v *= inv;
  for (double& v : h.pb) v *= inv;
  return h;
}

double mutual_information(const JointHistogram& h) {
  double mi = 0.0;
  for (int i = 0; i < kMiBins; ++i) {
    for (int j = 0; j < kMiBins; ++j) {
      const double p = h.joint[i * kMiBins + j];
      mi += p * (std::log(p + kMiEps) - std::log(h.pa[i] + kMiEps) -
                 std::log(h.pb[j] + kMiEps));
    }
  }
  return mi;
}

}  // namespace

void WarpLossWeights::validate() const {
  for (double v : as_array()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidInput("loss coefficients must be finite and nonnegative");
    }
  }
}

void OptimConfig::validate() const {
  if (iterations < 0) throw InvalidInput("iterations must be >= 0");
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidInput("step must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidInput("moment decays must lie in [0,1)");
  }
  if (!(stabilizer > 0.0)) throw InvalidInput("moment stabilizer must be > 0");
}

void WarpConfig::validate() const {
  if (stencil < 1 || stencil % 2 == 0) {
    throw InvalidInput("interpolation stencil side must be odd and >= 1");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidInput("temperature must be > 0");
  }
  if (!std::isfinite(center_logit)) throw InvalidInput("center logit must be finite");
  weights.validate();
  optim.validate();
}

std::vector<double> soft_weights(std::span<const double> logits, int group,
                                 double tau) {
  if (group < 1 || logits.size() % group != 0) {
    throw DimensionMismatch("logit count is not a multiple of the group size");
  }
  if (!(tau > 0.0)) throw InvalidInput("temperature must be > 0");
  require_finite(logits, "logits");
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r < logits.size(); r += group) {
    softmax_group(logits.data() + r, out.data() + r, group, tau);
  }
  return out;
}

Field pre_interp(std::span<const double> weights, const CandidateSet& cands,
                 const Field& source) {
  const std::size_t n = cands.pixels();
  const int k = cands.per_pixel;
  if (weights.size() != n * k) throw DimensionMismatch("weights do not match candidates");
  if (source.height() != cands.height || source.width() != cands.width) {
    throw DimensionMismatch("source field does not match the candidate lattice");
  }
  Field out(source.height(), source.width(), source.channels());
  const int w = source.width();
  for (int c = 0; c < source.channels(); ++c) {
    auto src = source.plane(c);
    auto dst = out.plane(c);
    for (std::size_t u = 0; u < n; ++u) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) {
        const PixelCoord& v = cands.at(u, j);
        acc += weights[u * k + j] * src[static_cast<std::size_t>(v.y) * w + v.x];
      }
      dst[u] = acc;
    }
  }
  return out;
}

Field interp_apply_weights(std::span<const double> interp_weights, int stencil,
                           const Field& field) {
  if (stencil < 1 || stencil % 2 == 0) throw InvalidInput("stencil side must be odd");
  const int s2 = stencil * stencil, half = stencil / 2;
  const int h = field.height(), w = field.width();
  const std::size_t n = field.pixels();
  if (interp_weights.size() != n * s2) {
    throw DimensionMismatch("interpolation weights do not match the field");
  }
  Field out(h, w, field.channels());
  for (int c = 0; c < field.channels(); ++c) {
    auto src = field.plane(c);
    auto dst = out.plane(c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t u = static_cast<std::size_t>(y) * w + x;
        const double* b = interp_weights.data() + u * s2;
        double acc = 0.0;
        for (int e = 0; e < s2; ++e) {
          const PixelCoord q =
              clamp_to_lattice(y + e / stencil - half, x + e % stencil - half, h, w);
          acc += b[e] * src[static_cast<std::size_t>(q.y) * w + q.x];
        }
        dst[u] = acc;
      }
    }
  }
  return out;
}

Field interp_apply(std::span<const double> interp_logits, int stencil,
                   const Field& field) {
  return interp_apply_weights(soft_weights(interp_logits, stencil * stencil, 1.0),
                              stencil, field);
}

CoordinateField coordinate_field(std::span<const double> weights,
                                 const CandidateSet& cands) {
  const std::size_t n = cands.pixels();
  const int k = cands.per_pixel;
  if (weights.size() != n * k) throw DimensionMismatch("weights do not match candidates");
  CoordinateField f{cands.height, cands.width, {}, {}, {}};
  f.expected.resize(n);
  f.displacement.resize(n);
  f.normalized.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    double cy = 0.0, cx = 0.0;
    for (int j = 0; j < k; ++j) {
      cy += weights[u * k + j] * cands.at(u, j).y;
      cx += weights[u * k + j] * cands.at(u, j).x;
    }
    f.expected[u] = {cy, cx};
    f.displacement[u] = {cy - static_cast<double>(u / cands.width),
                         cx - static_cast<double>(u % cands.width)};
    f.normalized[u] = {cy / cands.height, cx / cands.width};
  }
  return f;
}

double soft_mutual_information(std::span<const double> a,
                               std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionMismatch("MI operands differ");
  const std::size_t n = a.size();
  std::vector<double> wa(n * kMiBins), wb(n * kMiBins);
  for (std::size_t u = 0; u < n; ++u) {
    parzen(a[u], wa.data() + u * kMiBins, nullptr);
    parzen(b[u], wb.data() + u * kMiBins, nullptr);
  }
  return mutual_information(histogram(wa, wb, n));
}

// ---------------------------------------------------------------------------

struct WarpObjective::Forward {
  std::vector<double> a;  // n * K
  Field rbar;
  std::vector<double> b;  // n * s^2
  Field rtil;
  std::vector<double> chat;  // n * 2, (y/H, x/W)
};

WarpObjective::WarpObjective(CandidateSet cands, RgbImage proxy_rgb,
                             RgbImage guide_rgb, WarpLossWeights weights,
                             int stencil, double temperature)
    : cands_(std::move(cands)), proxy_(std::move(proxy_rgb)),
      guide_(std::move(guide_rgb)), weights_(weights), stencil_(stencil),
      tau_(temperature) {
  weights_.validate();
  if (stencil_ < 1 || stencil_ % 2 == 0) throw InvalidInput("stencil side must be odd");
  if (!(tau_ > 0.0) || !std::isfinite(tau_)) throw InvalidInput("temperature must be > 0");
  height_ = guide_.height();
  width_ = guide_.width();
  if (proxy_.height() != height_ || proxy_.width() != width_) {
    throw DimensionMismatch("proxy and guide RGB lattices differ");
  }
  if (cands_.height != height_ || cands_.width != width_ || cands_.per_pixel < 1) {
    throw DimensionMismatch("candidate set does not match the guide lattice");
  }
  n_ = guide_.pixels();
  const int k = cands_.per_pixel;
  if (cands_.coord.size() != n_ * k || cands_.distance.size() != n_ * k) {
    throw DimensionMismatch("candidate set storage is inconsistent");
  }

  cand_index_.resize(n_ * k);
  double dsum = 0.0;
  for (std::size_t i = 0; i < n_ * k; ++i) {
    const PixelCoord& v = cands_.coord[i];
    if (v.y < 0 || v.y >= height_ || v.x < 0 || v.x >= width_) {
      throw InvalidInput("candidate coordinate outside the proxy lattice");
    }
    cand_index_[i] = v.y * width_ + v.x;
    dsum += cands_.distance[i];
  }
  const double dmean = dsum / static_cast<double>(n_ * k);
  dist_hat_.resize(n_ * k);
  for (std::size_t i = 0; i < n_ * k; ++i) {
    dist_hat_[i] = cands_.distance[i] / (dmean + kDistEps);
  }

  const int s2 = stencil_ * stencil_, half = stencil_ / 2;
  stencil_index_.resize(n_ * s2);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const std::size_t u = static_cast<std::size_t>(y) * width_ + x;
      for (int e = 0; e < s2; ++e) {
        const PixelCoord q = clamp_to_lattice(y + e / stencil_ - half,
                                              x + e % stencil_ - half, height_, width_);
        stencil_index_[u * s2 + e] = q.y * width_ + q.x;
      }
    }
  }

  // Each replicate-padded 5x5 patch visits some pixels more than once; the
  // patch L1 sum equals a per-pixel weighted L1 with these multiplicities.
  patch_count_.assign(n_, 0.0);
  const int ph = kPatchSide / 2;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      for (int oy = -ph; oy <= ph; ++oy) {
        for (int ox = -ph; ox <= ph; ++ox) {
          const PixelCoord q = clamp_to_lattice(y + oy, x + ox, height_, width_);
          patch_count_[static_cast<std::size_t>(q.y) * width_ + q.x] += 1.0;
        }
      }
    }
  }

  guide_grad_ = Field(height_, width_, 6);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const double g0 = guide_.at(c, y, x);
        guide_grad_.at(c, y, x) = y + 1 < height_ ? guide_.at(c, y + 1, x) - g0 : 0.0;
        guide_grad_.at(3 + c, y, x) = x + 1 < width_ ? guide_.at(c, y, x + 1) - g0 : 0.0;
      }
    }
  }

  guide_lum_.resize(n_);
  guide_bins_.resize(n_ * kMiBins);
  guide_marginal_.assign(kMiBins, 0.0);
  for (std::size_t u = 0; u < n_; ++u) {
    guide_lum_[u] = (guide_.plane(0)[u] + guide_.plane(1)[u] + guide_.plane(2)[u]) / 3.0;
    parzen(guide_lum_[u], guide_bins_.data() + u * kMiBins, nullptr);
    for (int j = 0; j < kMiBins; ++j) guide_marginal_[j] += guide_bins_[u * kMiBins + j];
  }
  guide_entropy_ = 0.0;
  for (double& q : guide_marginal_) {
    q /= static_cast<double>(n_);
    guide_entropy_ -= q * std::log(q + kMiEps);
  }
}

WarpParams WarpObjective::initial_params(double center_logit) const {
  const int k = cands_.per_pixel, s2 = stencil_ * stencil_;
  WarpParams p;
  p.pixels = static_cast<int>(n_);
  p.candidates = k;
  p.stencil = stencil_;
  p.temperature = tau_;
  p.aggregation.resize(n_ * k);
  for (std::size_t i = 0; i < n_ * k; ++i) p.aggregation[i] = -dist_hat_[i];
  p.interpolation.assign(n_ * s2, 0.0);
  for (std::size_t u = 0; u < n_; ++u) p.interpolation[u * s2 + s2 / 2] = center_logit;
  return p;
}

void WarpObjective::check(const WarpParams& p) const {
  const int k = cands_.per_pixel, s2 = stencil_ * stencil_;
  if (p.pixels != static_cast<int>(n_) || p.candidates != k || p.stencil != stencil_ ||
      p.aggregation.size() != n_ * k || p.interpolation.size() != n_ * s2) {
    throw DimensionMismatch("warp parameters do not match the objective");
  }
  if (std::abs(p.temperature - tau_) > 0.0) {
    throw InvalidInput("warp parameter temperature differs from the objective");
  }
  require_finite(p.aggregation, "aggregation logits");
  require_finite(p.interpolation, "interpolation logits");
}

WarpObjective::Forward WarpObjective::forward(const WarpParams& p) const {
  check(p);
  const int k = cands_.per_pixel, s2 = stencil_ * stencil_;
  Forward fw;
  fw.a = soft_weights(p.aggregation, k, tau_);
  fw.b = soft_weights(p.interpolation, s2, 1.0);
  fw.rbar = Field(height_, width_, 3);
  fw.rtil = Field(height_, width_, 3);
  for (int c = 0; c < 3; ++c) {
    auto src = proxy_.plane(c);
    auto bar = fw.rbar.plane(c);
    for (std::size_t u = 0; u < n_; ++u) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += fw.a[u * k + j] * src[cand_index_[u * k + j]];
      bar[u] = acc;
    }
    auto til = fw.rtil.plane(c);
    for (std::size_t u = 0; u < n_; ++u) {
      double acc = 0.0;
      for (int e = 0; e < s2; ++e) acc += fw.b[u * s2 + e] * bar[stencil_index_[u * s2 + e]];
      til[u] = acc;
    }
  }
  fw.chat.resize(n_ * 2);
  for (std::size_t u = 0; u < n_; ++u) {
    double cy = 0.0, cx = 0.0;
    for (int j = 0; j < k; ++j) {
      cy += fw.a[u * k + j] * cands_.coord[u * k + j].y;
      cx += fw.a[u * k + j] * cands_.coord[u * k + j].x;
    }
    fw.chat[2 * u] = cy / height_;
    fw.chat[2 * u + 1] = cx / width_;
  }
  return fw;
}

LossBreakdown WarpObjective::terms(const Forward& fw, bool smooth) const {
  const int k = cands_.per_pixel;
  const double n = static_cast<double>(n_);
  LossBreakdown out;
  auto& t = out.terms;

  double fid = 0.0, patch = 0.0;
  for (int c = 0; c < 3; ++c) {
    auto r = fw.rtil.plane(c);
    auto g = guide_.plane(c);
    for (std::size_t u = 0; u < n_; ++u) {
      const double e = absf(r[u] - g[u], smooth);
      fid += e;
      patch += patch_count_[u] * e;
    }
  }
  t[kFidelityTerm] = fid / (3.0 * n);
  t[kPatchTerm] = patch / (3.0 * n * kPatchSide * kPatchSide);

  {
    std::vector<double> wx(n_ * kMiBins);
    for (std::size_t u = 0; u < n_; ++u) {
      const double lum =
          (fw.rtil.plane(0)[u] + fw.rtil.plane(1)[u] + fw.rtil.plane(2)[u]) / 3.0;
      parzen(lum, wx.data() + u * kMiBins, nullptr);
    }
    const JointHistogram h = histogram(wx, guide_bins_, n_);
    t[kMutualInfoTerm] = std::max(0.0, guide_entropy_ - mutual_information(h));
  }

  {
    const detail::SsimWindow win(height_, width_);
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) acc += detail::ssim_plane(win, fw.rtil.plane(c), guide_.plane(c));
    t[kSsimTerm] = 1.0 - acc / 3.0;
  }

  {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      auto r = fw.rtil.plane(c);
      for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
          const std::size_t u = static_cast<std::size_t>(y) * width_ + x;
          const double gy = y + 1 < height_ ? r[u + width_] - r[u] : 0.0;
          const double gx = x + 1 < width_ ? r[u + 1] - r[u] : 0.0;
          acc += absf(gy - guide_grad_.plane(c)[u], smooth);
          acc += absf(gx - guide_grad_.plane(3 + c)[u], smooth);
        }
      }
    }
    t[kGradientTerm] = acc / (6.0 * n);
  }

  {
    double acc = 0.0;
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const std::size_t u = static_cast<std::size_t>(y) * width_ + x;
        for (int comp = 0; comp < 2; ++comp) {
          const double v = fw.chat[2 * u + comp];
          acc += absf(y + 1 < height_ ? fw.chat[2 * (u + width_) + comp] - v : 0.0, smooth);
          acc += absf(x + 1 < width_ ? fw.chat[2 * (u + 1) + comp] - v : 0.0, smooth);
        }
      }
    }
    t[kSmoothTerm] = acc / (4.0 * n);
  }

  {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_ * k; ++i) acc += fw.a[i] * dist_hat_[i];
    t[kDistanceTerm] = acc / n;
  }

  const auto lam = weights_.as_array();
  out.total = 0.0;
  for (int i = 0; i < kLossTerms; ++i) out.total += lam[i] * t[i];
  return out;
}

LossBreakdown WarpObjective::loss(const WarpParams& params) const {
  return terms(forward(params), false);
}

double WarpObjective::objective(const WarpParams& params) const {
  return terms(forward(params), true).total;
}

Field WarpObjective::render(const WarpParams& params) const {
  return forward(params).rtil;
}

double WarpObjective::objective_and_gradient(const WarpParams& params,
                                             std::vector<double>& grad_aggregation,
                                             std::vector<double>& grad_interpolation,
                                             LossBreakdown* reported) const {
  const Forward fw = forward(params);
  const LossBreakdown smooth = terms(fw, true);
  if (reported) *reported = terms(fw, false);

  const int k = cands_.per_pixel, s2 = stencil_ * stencil_;
  const double n = static_cast<double>(n_);
  const auto lam = weights_.as_array();

  // dL / d r~, channel-major.
  Field gr(height_, width_, 3);
  const double c_fid = lam[kFidelityTerm] / (3.0 * n);
  const double c_patch = lam[kPatchTerm] / (3.0 * n * kPatchSide * kPatchSide);
  const double c_grad = lam[kGradientTerm] / (6.0 * n);
  for (int c = 0; c < 3; ++c) {
    auto r = fw.rtil.plane(c);
    auto g = guide_.plane(c);
    auto out = gr.plane(c);
    for (std::size_t u = 0; u < n_; ++u) {
      const double d = dabsf(r[u] - g[u]);
      out[u] = c_fid * d + c_patch * patch_count_[u] * d;
    }
    if (c_grad != 0.0) {
      for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
          const std::size_t u = static_cast<std::size_t>(y) * width_ + x;
          if (y + 1 < height_) {
            const double s =
                c_grad * dabsf(r[u + width_] - r[u] - guide_grad_.plane(c)[u]);
            out[u + width_] += s;
            out[u] -= s;
          }
          if (x + 1 < width_) {
            const double s = c_grad * dabsf(r[u + 1] - r[u] - guide_grad_.plane(3 + c)[u]);
            out[u + 1] += s;
            out[u] -= s;
          }
        }
      }
    }
  }

  if (lam[kSsimTerm] != 0.0) {
    const detail::SsimWindow win(height_, width_);
    const double scale = -lam[kSsimTerm] / (3.0 * n);
    std::vector<double> gmx(n_), gxx(n_), gxy(n_), tmx(n_), txx(n_), txy(n_);
    for (int c = 0; c < 3; ++c) {
      auto x = fw.rtil.plane(c);
      auto y = guide_.plane(c);
      const detail::SsimStats st = detail::ssim_stats(win, x, y);
      for (std::size_t i = 0; i < n_; ++i) {
        const double mx = st.mu_x[i], my = st.mu_y[i];
        const double vx = st.exx[i] - mx * mx, vy = st.eyy[i] - my * my;
        const double cxy = st.exy[i] - mx * my;
        const double a1 = 2.0 * mx * my + detail::kSsimC1;
        const double a2 = 2.0 * cxy + detail::kSsimC2;
        const double d1 = mx * mx + my * my + detail::kSsimC1;
        const double d2 = vx + vy + detail::kSsimC2;
        const double den = d1 * d2;
        const double s = a1 * a2 / den;
        const double dn_dmx = 2.0 * my * a2 - 2.0 * my * a1;
        const double dd_dmx = 2.0 * mx * d2 - 2.0 * mx * d1;
        gmx[i] = scale * (dn_dmx - s * dd_dmx) / den;
        gxx[i] = scale * (-s / d2);
        gxy[i] = scale * (2.0 * a1 / den);
      }
      win.apply_adjoint(gmx, tmx);
      win.apply_adjoint(gxx, txx);
      win.apply_adjoint(gxy, txy);
      auto out = gr.plane(c);
      for (std::size_t i = 0; i < n_; ++i) {
        out[i] += tmx[i] + 2.0 * x[i] * txx[i] + y[i] * txy[i];
      }
    }
  }

  if (lam[kMutualInfoTerm] != 0.0) {
    std::vector<double> lum(n_), wx(n_ * kMiBins), zx(n_ * kMiBins);
    for (std::size_t u = 0; u < n_; ++u) {
      lum[u] = (fw.rtil.plane(0)[u] + fw.rtil.plane(1)[u] + fw.rtil.plane(2)[u]) / 3.0;
      parzen(lum[u], wx.data() + u * kMiBins, zx.data() + u * kMiBins);
    }
    const JointHistogram h = histogram(wx, guide_bins_, n_);
    std::vector<double> gj(kMiBins * kMiBins), gp(kMiBins, 0.0);
    for (int i = 0; i < kMiBins; ++i) {
      for (int j = 0; j < kMiBins; ++j) {
        const double p = h.joint[i * kMiBins + j];
        gj[i * kMiBins + j] = std::log(p + kMiEps) + p / (p + kMiEps) -
                              std::log(h.pa[i] + kMiEps) - std::log(h.pb[j] + kMiEps);
        gp[i] -= p / (h.pa[i] + kMiEps);
      }
    }
    // Loss is H(g) - MI; d/dx = -dMI/dx.
    const double scale = -lam[kMutualInfoTerm] / n;
    for (std::size_t u = 0; u < n_; ++u) {
      const double* w = wx.data() + u * kMiBins;
      const double* z = zx.data() + u * kMiBins;
      const double* wy = guide_bins_.data() + u * kMiBins;
      double zbar = 0.0;
      for (int i = 0; i < kMiBins; ++i) zbar += w[i] * z[i];
      double dlum = 0.0;
      for (int i = 0; i < kMiBins; ++i) {
        double dw = gp[i];
        const double* row = gj.data() + i * kMiBins;
        for (int j = 0; j < kMiBins; ++j) dw += row[j] * wy[j];
        dlum += dw * w[i] * (z[i] - zbar);
      }
      const double g = scale * dlum / 3.0;
      for (int c = 0; c < 3; ++c) gr.plane(c)[u] += g;
    }
  }

  // Back through the interpolation kernel.
  grad_interpolation.assign(n_ * s2, 0.0);
  Field gbar(height_, width_, 3);
  {
    std::vector<double> gb(s2);
    for (std::size_t u = 0; u < n_; ++u) {
      const int* idx = stencil_index_.data() + u * s2;
      const double* b = fw.b.data() + u * s2;
      std::fill(gb.begin(), gb.end(), 0.0);
      for (int c = 0; c < 3; ++c) {
        const double g = gr.plane(c)[u];
        auto bar = fw.rbar.plane(c);
        auto gout = gbar.plane(c);
        for (int e = 0; e < s2; ++e) {
          gb[e] += g * bar[idx[e]];
          gout[idx[e]] += b[e] * g;
        }
      }
      double dot = 0.0;
      for (int e = 0; e < s2; ++e) dot += b[e] * gb[e];
      for (int e = 0; e < s2; ++e) grad_interpolation[u * s2 + e] = b[e] * (gb[e] - dot);
    }
  }

  // dL / d chat from the smoothness term.
  std::vector<double> gchat(n_ * 2, 0.0);
  if (lam[kSmoothTerm] != 0.0) {
    const double cs = lam[kSmoothTerm] / (4.0 * n);
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const std::size_t u = static_cast<std::size_t>(y) * width_ + x;
        for (int comp = 0; comp < 2; ++comp) {
          const double v = fw.chat[2 * u + comp];
          if (y + 1 < height_) {
            const std::size_t q = 2 * (u + width_) + comp;
            const double s = cs * dabsf(fw.chat[q] - v);
            gchat[q] += s;
            gchat[2 * u + comp] -= s;
          }
          if (x + 1 < width_) {
            const std::size_t q = 2 * (u + 1) + comp;
            const double s = cs * dabsf(fw.chat[q] - v);
            gchat[q] += s;
            gchat[2 * u + comp] -= s;
          }
        }
      }
    }
  }

  // Back through the aggregation softmax.
  grad_aggregation.assign(n_ * k, 0.0);
  {
    const double cd = lam[kDistanceTerm] / n;
    std::vector<double> ga(k);
    for (std::size_t u = 0; u < n_; ++u) {
      const double gy = gchat[2 * u] / height_, gx = gchat[2 * u + 1] / width_;
      for (int j = 0; j < k; ++j) {
        const std::size_t i = u * k + j;
        const int v = cand_index_[i];
        double acc = cd * dist_hat_[i] + gy * cands_.coord[i].y + gx * cands_.coord[i].x;
        for (int c = 0; c < 3; ++c) acc += gbar.plane(c)[u] * proxy_.plane(c)[v];
        ga[j] = acc;
      }
      const double* a = fw.a.data() + u * k;
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += a[j] * ga[j];
      for (int j = 0; j < k; ++j) grad_aggregation[u * k + j] = a[j] * (ga[j] - dot) / tau_;
    }
  }
  return smooth.total;
}

// ---------------------------------------------------------------------------

OptimResult optimize(const WarpObjective& objective, WarpParams initial,
                     const OptimConfig& cfg) {
  cfg.validate();
  OptimResult res;
  res.params = std::move(initial);
  res.trace.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  WarpParams& p = res.params;

  std::vector<double> ga, gi;
  std::vector<double> ma(p.aggregation.size(), 0.0), va(p.aggregation.size(), 0.0);
  std::vector<double> mi(p.interpolation.size(), 0.0), vi(p.interpolation.size(), 0.0);
  double b1t = 1.0, b2t = 1.0;

  auto step = [&](std::vector<double>& theta, const std::vector<double>& g,
                  std::vector<double>& m, std::vector<double>& v) {
    const double c1 = 1.0 / (1.0 - b1t), c2 = 1.0 / (1.0 - b2t);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      theta[i] -= cfg.step * (m[i] * c1) / (std::sqrt(v[i] * c2) + cfg.stabilizer);
    }
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    LossBreakdown rep;
    const double value = objective.objective_and_gradient(p, ga, gi, &rep);
    if (!std::isfinite(value) || !std::isfinite(rep.total)) {
      throw Error("non-finite warp loss at iteration " + std::to_string(it));
    }
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (!std::isfinite(ga[i])) {
        throw Error("non-finite warp gradient at iteration " + std::to_string(it));
      }
    }
    res.trace.push_back(rep);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    step(p.aggregation, ga, ma, va);
    step(p.interpolation, gi, mi, vi);
  }
  const LossBreakdown last = objective.loss(p);
  if (!std::isfinite(last.total)) {
    throw Error("non-finite warp loss at iteration " + std::to_string(cfg.iterations));
  }
  res.trace.push_back(last);
  return res;
}

std::string trace_csv(const std::vector<LossBreakdown>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,total";
  for (const char* name : kLossTermNames) os << ',' << name;
  os << '\n';
  for (std::size_t i = 0; i < trace.size(); ++i) {
    os << i << ',' << trace[i].total;
    for (double t : trace[i].terms) os << ',' << t;
    os << '\n';
  }
  return os.str();
}

}  // namespace hsialign
