#pragma once

#include <string>

#include "hsialign/cube.hpp"
#include "json.hpp"

namespace hsialign {

/// PSNR returned for identical inputs (zero MSE).
inline constexpr double kPsnrIdentical = 100.0;

/// Spectra with an L2 norm at or below this are left out of the SAM average.
inline constexpr double kSamNormFloor = 1e-8;

struct MetricReport {
  double psnr = 0.0;  // dB, peak 1.0
  double ssim = 0.0;
  double sam = 0.0;   // degrees
};

/// 10 log10(1 / MSE) over all samples; 100 dB when MSE is zero.
double psnr(const HyperCube& a, const HyperCube& b);

/// Mean over bands of the mean SSIM map (11x11 Gaussian window, sigma 1.5,
/// C1 = 0.01^2, C2 = 0.03^2). The window is truncated at the border and
/// renormalized.
double ssim(const HyperCube& a, const HyperCube& b);

/// Mean spectral angle in degrees over pixels where both spectra have norm
/// above kSamNormFloor. Returns 0 when no pixel qualifies.
double sam(const HyperCube& a, const HyperCube& b);

MetricReport evaluate_metrics(const HyperCube& a, const HyperCube& b);

nlohmann::json to_json(const MetricReport& report);

}  // namespace hsialign
