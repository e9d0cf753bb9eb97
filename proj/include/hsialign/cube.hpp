#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace hsialign {

struct PixelCoord {
  int y = 0;
  int x = 0;

  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Clamp a (possibly out-of-range) coordinate back onto an h x w lattice.
inline PixelCoord clamp_to_lattice(int y, int x, int h, int w) {
  return {y < 0 ? 0 : (y >= h ? h - 1 : y), x < 0 ? 0 : (x >= w ? w - 1 : x)};
}

/// Multi-channel double-precision raster, channel-major planes, each plane
/// row-major. Unlike RgbImage and HyperCube it carries no value-range
/// invariant and is used for intermediate quantities (gradients, chroma,
/// transported fields).
class Field {
 public:
  Field() = default;
  Field(int height, int width, int channels);
  Field(int height, int width, int channels, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<double> plane(int c) {
    return {data_.data() + static_cast<std::size_t>(c) * pixels(), pixels()};
  }
  std::span<const double> plane(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * pixels(), pixels()};
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Three-channel image with values in [0,1].
///
/// Construction validates finiteness (NaN/Inf throw InvalidInput) and clamps
/// out-of-range samples, recording how many were clamped.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int height, int width, std::vector<double> data);
  explicit RgbImage(const Field& field);

  int height() const noexcept { return field_.height(); }
  int width() const noexcept { return field_.width(); }
  std::size_t pixels() const noexcept { return field_.pixels(); }
  double at(int c, int y, int x) const { return field_.at(c, y, x); }
  std::span<const double> plane(int c) const { return field_.plane(c); }
  std::span<const double> data() const noexcept { return field_.data(); }
  const Field& field() const noexcept { return field_; }
  std::size_t clamped_count() const noexcept { return clamped_; }

 private:
  Field field_;
  std::size_t clamped_ = 0;
};

/// H x W x B reflectance cube, band-major (B planes, each row-major),
/// stored as 32-bit floats to match the on-disk container exactly.
///
/// Invariants: H, W, B >= 1; wavelengths strictly increasing and finite;
/// samples finite and in [0,1] after clamping.
class HyperCube {
 public:
  HyperCube() = default;
  HyperCube(int height, int width, std::vector<double> wavelengths_nm,
            std::vector<float> data);

  /// Zero-filled cube.
  static HyperCube zeros(int height, int width,
                         std::vector<double> wavelengths_nm);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int bands() const noexcept { return static_cast<int>(wavelengths_.size()); }
  std::size_t pixels() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  std::size_t size() const noexcept { return data_.size(); }

  float at(int b, int y, int x) const {
    return data_[(static_cast<std::size_t>(b) * height_ + y) * width_ + x];
  }
  std::span<const float> plane(int b) const {
    return {data_.data() + static_cast<std::size_t>(b) * pixels(), pixels()};
  }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<double>& wavelengths() const noexcept {
    return wavelengths_;
  }
  std::size_t clamped_count() const noexcept { return clamped_; }

  bool same_shape(const HyperCube& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           bands() == other.bands();
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> wavelengths_;
  std::vector<float> data_;
  std::size_t clamped_ = 0;
};

/// Evenly spaced band centers, e.g. uniform_wavelengths(31, 400, 700).
std::vector<double> uniform_wavelengths(int bands, double first_nm,
                                        double last_nm);

/// Throws InvalidInput unless the list is non-empty, finite and strictly
/// increasing.
void validate_wavelengths(std::span<const double> wavelengths_nm);

struct RgbBands {
  int red = 0;
  int green = 0;
  int blue = 0;
};

inline constexpr double kRedNm = 660.0;
inline constexpr double kGreenNm = 550.0;
inline constexpr double kBlueNm = 470.0;

/// Band nearest to 660/550/470 nm; equal distances resolve to the lower
/// band index. Requires at least three bands.
RgbBands select_rgb_bands(std::span<const double> wavelengths_nm);

/// Proxy RGB built from the three selected band planes.
RgbImage project_rgb(const HyperCube& cube);

}  // namespace hsialign
