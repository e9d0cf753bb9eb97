#include "hsialign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "hsialign/error.hpp"
#include "ssim_window.hpp"

namespace hsialign {

namespace {
void require_same_shape(const HyperCube& a, const HyperCube& b) {
  if (!a.same_shape(b)) throw DimensionMismatch("metric operands differ in shape");
}
}  // namespace

double psnr(const HyperCube& a, const HyperCube& b) {
  require_same_shape(a, b);
  double sse = 0.0;
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(da.size());
  if (mse == 0.0) return kPsnrIdentical;
  return std::min(kPsnrIdentical, 10.0 * std::log10(1.0 / mse));
}

double ssim(const HyperCube& a, const HyperCube& b) {
  require_same_shape(a, b);
  const detail::SsimWindow win(a.height(), a.width());
  const std::size_t n = a.pixels();
  std::vector<double> x(n), y(n);
  double acc = 0.0;
  for (int band = 0; band < a.bands(); ++band) {
    std::copy(a.plane(band).begin(), a.plane(band).end(), x.begin());
    std::copy(b.plane(band).begin(), b.plane(band).end(), y.begin());
    acc += detail::ssim_plane(win, x, y);
  }
  return acc / a.bands();
}

double sam(const HyperCube& a, const HyperCube& b) {
  require_same_shape(a, b);
  const std::size_t n = a.pixels();
  const int bands = a.bands();
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t p = 0; p < n; ++p) {
    double na = 0.0, nb = 0.0;
    for (int band = 0; band < bands; ++band) {
      const double va = a.plane(band)[p], vb = b.plane(band)[p];
      na += va * va;
      nb += vb * vb;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na <= kSamNormFloor || nb <= kSamNormFloor) continue;
    // arccos(<a,b>/(|a||b|)) evaluated as 2 atan2(|a^ - b^|, |a^ + b^|) on
    // the unit vectors; exact zero for colinear spectra.
    double diff = 0.0, sum = 0.0;
    for (int band = 0; band < bands; ++band) {
      const double ua = a.plane(band)[p] / na, ub = b.plane(band)[p] / nb;
      diff += (ua - ub) * (ua - ub);
      sum += (ua + ub) * (ua + ub);
    }
    total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
    ++counted;
  }
  if (counted == 0) return 0.0;
  return total / static_cast<double>(counted) * 180.0 / std::numbers::pi;
}

MetricReport evaluate_metrics(const HyperCube& a, const HyperCube& b) {
  return {psnr(a, b), ssim(a, b), sam(a, b)};
}

nlohmann::json to_json(const MetricReport& report) {
  return {{"psnr_db", report.psnr}, {"ssim", report.ssim}, {"sam_deg", report.sam}};
}

}  // namespace hsialign
