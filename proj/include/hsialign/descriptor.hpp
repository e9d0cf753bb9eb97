#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hsialign/cube.hpp"

namespace hsialign {

struct DescriptorConfig {
  int patch_side = 5;
  double chroma_weight = 0.25;
  double gradient_weight = 0.5;
  double eps = 1e-6;

  void validate() const;
};

/// Number of stacked per-pixel channels: color (3), chroma (3), gradients (6).
inline constexpr int kDescriptorChannels = 12;

/// Per-pixel patch descriptors, stored pixel-major: the descriptor of linear
/// pixel p = y*W + x occupies [p*dim, (p+1)*dim).
///
/// Within a descriptor the layout is channel-major, then patch row, then
/// patch column: index = (c * s + py) * s + px, where c runs over
/// [R, G, B, chroma R/G/B, dy R/G/B, dx R/G/B].
class DescriptorField {
 public:
  DescriptorField(int height, int width, int dim, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int dim() const noexcept { return dim_; }
  std::size_t pixels() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  std::span<const double> at(std::size_t pixel) const {
    return {data_.data() + pixel * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const double> data() const noexcept { return data_; }

 private:
  int height_;
  int width_;
  int dim_;
  std::vector<double> data_;
};

/// I_c / (sum_c I_c + eps) per pixel.
Field chroma(const RgbImage& image, double eps);

/// Forward differences per color channel: channels 0..2 are the y
/// differences of R,G,B, channels 3..5 the x differences. The last row
/// (resp. column) difference is zero (replicate boundary).
Field gradients(const Field& image);
Field gradients(const RgbImage& image);

/// Descriptor field with replicate padding at the borders. D = 12 * s^2.
DescriptorField build_descriptors(const RgbImage& image,
                                  const DescriptorConfig& cfg);

}  // namespace hsialign
