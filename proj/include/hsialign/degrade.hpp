#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hsialign/cube.hpp"
#include "json.hpp"

namespace hsialign {

enum class DegradationKind {
  kGaussianNonIid,
  kComplex,
  kSrBicubic,
  kBlur,
  kBandMiss,
  kInpaintMask,
};

const char* to_string(DegradationKind kind);
DegradationKind degradation_kind_from_string(const std::string& name);

/// Task degradation and its parameters. Sigma values are in 1/255 units;
/// ratios are fractions in [0,1].
struct DegradationSpec {
  DegradationKind kind = DegradationKind::kGaussianNonIid;
  double sigma_min = 10.0;
  double sigma_max = 70.0;
  // complex: ranges drawn per affected band
  double impulse_min = 0.1;
  double impulse_max = 0.3;
  double stripe_min = 0.05;    // fraction of columns
  double stripe_max = 0.15;
  double stripe_amplitude = 0.25;  // offsets uniform in [-a, a]
  double deadline_min = 0.05;  // fraction of columns
  double deadline_max = 0.15;
  int scale = 4;
  int blur_radius = 15;
  bool gaussian_blur = false;  // Gaussian instead of disk
  double blur_sigma = 5.0;     // used when gaussian_blur is set
  double band_miss_ratio = 0.3;
  double mask_ratio = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

nlohmann::json to_json(const DegradationSpec& spec);
/// Missing keys keep their defaults; unknown keys throw InvalidInput.
DegradationSpec degradation_from_json(const nlohmann::json& j);

/// ceil(x) that treats values within 1e-9 of an integer as that integer, so
/// 0.9 * 100 counts 90 sites rather than 91.
long long robust_ceil(double x);

/// Deterministic in (cube, spec). sr_bicubic returns a ceil(H/scale) x
/// ceil(W/scale) cube; every other kind preserves the shape.
HyperCube apply_degradation(const HyperCube& cube, const DegradationSpec& spec);

/// Anti-aliased bicubic (a = -0.5) downsampling with per-output weight
/// renormalization at the border.
HyperCube bicubic_downsample(const HyperCube& cube, int scale);

/// Normalized disk of the given radius with periodic boundary.
HyperCube disk_blur(const HyperCube& cube, int radius);
/// Normalized Gaussian truncated at `radius`, periodic boundary.
HyperCube gaussian_blur(const HyperCube& cube, double sigma, int radius);

enum class Provenance { kProxy, kGenerated };

struct TrainingPair {
  HyperCube degraded;
  HyperCube clean;
  Provenance provenance = Provenance::kProxy;
  int proxy_index = 0;
  int guide_index = -1;  // -1 for proxy pairs
  DegradationSpec spec;  // with the per-pair seed
};

struct PairSet {
  std::vector<TrainingPair> pairs;
  DegradationSpec spec;  // base spec (seed = base seed)
  double ratio = 3.0;    // |generated| : |proxy|

  std::size_t count(Provenance p) const;
  nlohmann::json manifest() const;
};

/// Proxy pairs (D(p_i), p_i) for every proxy plus round(ratio * N) generated
/// pairs (D(y_ij), y_ij), taken round-robin over proxies (guide j for every
/// i before guide j+1). Throws InvalidInput when there are not enough
/// synthesized samples.
PairSet build_pairs(const std::vector<HyperCube>& proxies,
                    const std::vector<std::vector<HyperCube>>& synthesized,
                    const DegradationSpec& spec, double ratio = 3.0);

/// Forward map from proxy to guide coordinates: g = M s + t, in (y, x).
struct Affine {
  std::array<double, 4> m{1.0, 0.0, 0.0, 1.0};  // row-major 2x2
  std::array<double, 2> t{0.0, 0.0};

  static Affine identity() { return {}; }
  static Affine translation(double dy, double dx);
  /// Rotation by `degrees` about (cy, cx).
  static Affine rotation(double degrees, double cy, double cx);
  double determinant() const { return m[0] * m[3] - m[1] * m[2]; }
  /// Source coordinate of guide point (y, x).
  std::array<double, 2> inverse_map(double y, double x) const;
};

/// Per-channel gains drawn in [1 - gain, 1 + gain] and offsets in
/// [-offset, offset].
struct PhotometricJitter {
  double gain = 0.0;
  double offset = 0.0;
};

struct SyntheticGuide {
  RgbImage image;
  std::vector<std::array<double, 2>> source;  // exact proxy coordinate per guide pixel
  std::vector<std::uint8_t> in_bounds;        // source inside the proxy lattice
};

/// Warp the proxy RGB by the affine map (bilinear sampling, clamp
/// boundary), apply the jitter, clamp to [0,1].
SyntheticGuide make_synthetic_guide(const RgbImage& proxy, const Affine& affine,
                                    const PhotometricJitter& jitter, std::uint64_t seed);

struct TextureConfig {
  int endmembers = 5;
  double correlation = 2.0;  // Gaussian blur sigma of the abundance noise, px
  double sharpness = 3.0;    // softmax gain on standardized abundances
};

/// Linear mixture of smooth random endmember spectra with spatially
/// correlated random abundances. Values lie in (0, 1).
HyperCube make_random_texture_cube(int height, int width, int bands, std::uint64_t seed,
                                   const TextureConfig& cfg = {});

}  // namespace hsialign
