#include "hsialign/descriptor.hpp"

#include <cmath>
#include <string>

#include "hsialign/error.hpp"

namespace hsialign {

void DescriptorConfig::validate() const {
  if (patch_side < 1 || patch_side % 2 == 0) {
    throw InvalidInput("descriptor patch side must be odd and >= 1, got " +
                       std::to_string(patch_side));
  }
  if (!(chroma_weight >= 0.0) || !(gradient_weight >= 0.0)) {
    throw InvalidInput("descriptor channel weights must be >= 0");
  }
  if (!(eps > 0.0)) throw InvalidInput("descriptor eps must be > 0");
}

DescriptorField::DescriptorField(int height, int width, int dim,
                                 std::vector<double> data)
    : height_(height), width_(width), dim_(dim), data_(std::move(data)) {
  if (data_.size() != pixels() * static_cast<std::size_t>(dim_)) {
    throw DimensionMismatch("descriptor payload size mismatch");
  }
}

Field chroma(const RgbImage& image, double eps) {
  Field out(image.height(), image.width(), 3);
  const std::size_t n = image.pixels();
  auto r = image.plane(0), g = image.plane(1), b = image.plane(2);
  for (std::size_t p = 0; p < n; ++p) {
    const double denom = r[p] + g[p] + b[p] + eps;
    out.plane(0)[p] = r[p] / denom;
    out.plane(1)[p] = g[p] / denom;
    out.plane(2)[p] = b[p] / denom;
  }
  return out;
}

Field gradients(const Field& image) {
  const int h = image.height(), w = image.width(), ch = image.channels();
  Field out(h, w, 2 * ch);
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = image.at(c, y, x);
        out.at(c, y, x) = y + 1 < h ? image.at(c, y + 1, x) - v : 0.0;
        out.at(ch + c, y, x) = x + 1 < w ? image.at(c, y, x + 1) - v : 0.0;
      }
    }
  }
  return out;
}

Field gradients(const RgbImage& image) { return gradients(image.field()); }

DescriptorField build_descriptors(const RgbImage& image,
                                  const DescriptorConfig& cfg) {
  cfg.validate();
  const int h = image.height(), w = image.width();
  const std::size_t n = image.pixels();

  // Weighted 12-channel stack; weights applied before unfolding.
  Field stack(h, w, kDescriptorChannels);
  const Field chr = chroma(image, cfg.eps);
  const Field grad = gradients(image);
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) {
      stack.plane(c)[p] = image.plane(c)[p];
      stack.plane(3 + c)[p] = cfg.chroma_weight * chr.plane(c)[p];
    }
    for (int c = 0; c < 6; ++c) {
      stack.plane(6 + c)[p] = cfg.gradient_weight * grad.plane(c)[p];
    }
  }

  const int s = cfg.patch_side, half = s / 2;
  const int dim = kDescriptorChannels * s * s;
  std::vector<double> data(n * dim);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* d = data.data() + (static_cast<std::size_t>(y) * w + x) * dim;
      for (int c = 0; c < kDescriptorChannels; ++c) {
        for (int py = 0; py < s; ++py) {
          for (int px = 0; px < s; ++px) {
            const PixelCoord q =
                clamp_to_lattice(y + py - half, x + px - half, h, w);
            *d++ = stack.at(c, q.y, q.x);
          }
        }
      }
    }
  }
  return DescriptorField(h, w, dim, std::move(data));
}

}  // namespace hsialign
