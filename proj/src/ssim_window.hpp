#pragma once

// Separable 11x11 Gaussian window (sigma 1.5) truncated at the image border
// and renormalized over the in-bounds taps, so that every output is a convex
// combination of in-image samples. Shared by the SSIM metric and the SSIM
// alignment loss.

#include <cmath>
#include <span>
#include <vector>

namespace hsialign::detail {

inline constexpr int kSsimRadius = 5;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

class SsimWindow {
 public:
  SsimWindow(int height, int width)
      : height_(height), width_(width), taps_(2 * kSsimRadius + 1),
        norm_y_(height), norm_x_(width) {
    for (int o = -kSsimRadius; o <= kSsimRadius; ++o) {
      taps_[o + kSsimRadius] =
          std::exp(-(o * o) / (2.0 * kSsimSigma * kSsimSigma));
    }
    fill_norm(norm_y_, height);
    fill_norm(norm_x_, width);
  }

  int height() const { return height_; }
  int width() const { return width_; }

  /// out = F in, with F the normalized separable window.
  void apply(std::span<const double> in, std::span<double> out) const {
    std::vector<double> tmp(in.size());
    pass_x(in, tmp, false);
    pass_y(tmp, out, false);
  }

  /// out = F^T in.
  void apply_adjoint(std::span<const double> in, std::span<double> out) const {
    std::vector<double> tmp(in.size());
    pass_y(in, tmp, true);
    pass_x(tmp, out, true);
  }

 private:
  void fill_norm(std::vector<double>& norm, int len) const {
    for (int i = 0; i < len; ++i) {
      double z = 0.0;
      for (int o = -kSsimRadius; o <= kSsimRadius; ++o) {
        if (i + o >= 0 && i + o < len) z += taps_[o + kSsimRadius];
      }
      norm[i] = z;
    }
  }

  // Forward: out[i] = sum_o g(o) in[i+o] / Z(i).
  // Adjoint: out[j] = sum_o g(o) in[j-o] / Z(j-o).
  void pass_x(std::span<const double> in, std::span<double> out,
              bool adjoint) const {
    for (int y = 0; y < height_; ++y) {
      const double* src = in.data() + static_cast<std::size_t>(y) * width_;
      double* dst = out.data() + static_cast<std::size_t>(y) * width_;
      for (int x = 0; x < width_; ++x) {
        double acc = 0.0;
        for (int o = -kSsimRadius; o <= kSsimRadius; ++o) {
          const int j = adjoint ? x - o : x + o;
          if (j < 0 || j >= width_) continue;
          acc += taps_[o + kSsimRadius] * (adjoint ? src[j] / norm_x_[j] : src[j]);
        }
        dst[x] = adjoint ? acc : acc / norm_x_[x];
      }
    }
  }

  void pass_y(std::span<const double> in, std::span<double> out,
              bool adjoint) const {
    for (int y = 0; y < height_; ++y) {
      double* dst = out.data() + static_cast<std::size_t>(y) * width_;
      for (int x = 0; x < width_; ++x) dst[x] = 0.0;
      for (int o = -kSsimRadius; o <= kSsimRadius; ++o) {
        const int j = adjoint ? y - o : y + o;
        if (j < 0 || j >= height_) continue;
        const double wgt =
            taps_[o + kSsimRadius] / (adjoint ? norm_y_[j] : 1.0);
        const double* src = in.data() + static_cast<std::size_t>(j) * width_;
        for (int x = 0; x < width_; ++x) dst[x] += wgt * src[x];
      }
      if (!adjoint) {
        for (int x = 0; x < width_; ++x) dst[x] /= norm_y_[y];
      }
    }
  }

  int height_;
  int width_;
  std::vector<double> taps_;
  std::vector<double> norm_y_;
  std::vector<double> norm_x_;
};

/// Window statistics of two planes.
struct SsimStats {
  std::vector<double> mu_x, mu_y, exx, eyy, exy;
};

inline SsimStats ssim_stats(const SsimWindow& win, std::span<const double> x,
                            std::span<const double> y) {
  const std::size_t n = x.size();
  SsimStats s;
  s.mu_x.resize(n);
  s.mu_y.resize(n);
  s.exx.resize(n);
  s.eyy.resize(n);
  s.exy.resize(n);
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  win.apply(x, s.mu_x);
  win.apply(y, s.mu_y);
  win.apply(xx, s.exx);
  win.apply(yy, s.eyy);
  win.apply(xy, s.exy);
  return s;
}

/// SSIM value at window position i. Written so that x == y yields exactly 1.
inline double ssim_at(const SsimStats& s, std::size_t i) {
  const double mx = s.mu_x[i], my = s.mu_y[i];
  const double vx = s.exx[i] - mx * mx;
  const double vy = s.eyy[i] - my * my;
  const double cxy = s.exy[i] - mx * my;
  const double num = (2.0 * (mx * my) + kSsimC1) * (2.0 * cxy + kSsimC2);
  const double den = ((mx * mx) + (my * my) + kSsimC1) * (vx + vy + kSsimC2);
  return num / den;
}

/// Mean SSIM over all positions of one plane pair.
inline double ssim_plane(const SsimWindow& win, std::span<const double> x,
                         std::span<const double> y) {
  const SsimStats s = ssim_stats(win, x, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += ssim_at(s, i);
  return acc / static_cast<double>(x.size());
}

}  // namespace hsialign::detail
