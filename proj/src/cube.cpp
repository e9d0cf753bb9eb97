#include "hsialign/cube.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hsialign/error.hpp"

namespace hsialign {

const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kIo: return "io error";
    case ParseErrorKind::kBadMagic: return "bad magic";
    case ParseErrorKind::kBadHeader: return "bad header";
    case ParseErrorKind::kTruncated: return "truncated payload";
    case ParseErrorKind::kTrailingData: return "trailing data";
    case ParseErrorKind::kInvalidWavelengths: return "invalid wavelengths";
    case ParseErrorKind::kNonFinite: return "non-finite payload";
    case ParseErrorKind::kUnsupportedFormat: return "unsupported format";
  }
  return "parse error";
}

namespace {

void check_dims(int height, int width, int channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw InvalidInput("raster dimensions must be >= 1, got " +
                       std::to_string(height) + "x" + std::to_string(width) +
                       "x" + std::to_string(channels));
  }
}

template <typename T>
std::size_t clamp_unit_interval(std::vector<T>& values) {
  std::size_t clamped = 0;
  for (T& v : values) {
    if (!std::isfinite(v)) {
      throw InvalidInput("non-finite sample");
    }
    if (v < T(0)) {
      v = T(0);
      ++clamped;
    } else if (v > T(1)) {
      v = T(1);
      ++clamped;
    }
  }
  return clamped;
}

}  // namespace

Field::Field(int height, int width, int channels)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  data_.assign(static_cast<std::size_t>(height) * width * channels, 0.0);
}

Field::Field(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels),
      data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionMismatch("field payload size does not match dimensions");
  }
}

RgbImage::RgbImage(int height, int width, std::vector<double> data) {
  check_dims(height, width, 3);
  if (data.size() != static_cast<std::size_t>(height) * width * 3) {
    throw DimensionMismatch("rgb payload size does not match dimensions");
  }
  clamped_ = clamp_unit_interval(data);
  field_ = Field(height, width, 3, std::move(data));
}

RgbImage::RgbImage(const Field& field) {
  if (field.channels() != 3) {
    throw DimensionMismatch("rgb image needs exactly 3 channels");
  }
  std::vector<double> data(field.data().begin(), field.data().end());
  clamped_ = clamp_unit_interval(data);
  field_ = Field(field.height(), field.width(), 3, std::move(data));
}

void validate_wavelengths(std::span<const double> wavelengths_nm) {
  if (wavelengths_nm.empty()) {
    throw InvalidInput("at least one band is required");
  }
  for (std::size_t b = 0; b < wavelengths_nm.size(); ++b) {
    if (!std::isfinite(wavelengths_nm[b])) {
      throw InvalidInput("non-finite wavelength");
    }
    if (b > 0 && !(wavelengths_nm[b] > wavelengths_nm[b - 1])) {
      throw InvalidInput("wavelengths must be strictly increasing (band " +
                         std::to_string(b) + ")");
    }
  }
}

HyperCube::HyperCube(int height, int width, std::vector<double> wavelengths_nm,
                     std::vector<float> data)
    : height_(height), width_(width), wavelengths_(std::move(wavelengths_nm)),
      data_(std::move(data)) {
  validate_wavelengths(wavelengths_);
  check_dims(height, width, bands());
  if (data_.size() != pixels() * wavelengths_.size()) {
    throw DimensionMismatch("cube payload has " + std::to_string(data_.size()) +
                            " samples, expected " +
                            std::to_string(pixels() * wavelengths_.size()));
  }
  clamped_ = clamp_unit_interval(data_);
}

HyperCube HyperCube::zeros(int height, int width,
                           std::vector<double> wavelengths_nm) {
  std::vector<float> data(static_cast<std::size_t>(height) * width *
                              wavelengths_nm.size(),
                          0.0f);
  return HyperCube(height, width, std::move(wavelengths_nm), std::move(data));
}

std::vector<double> uniform_wavelengths(int bands, double first_nm,
                                        double last_nm) {
  if (bands < 1) throw InvalidInput("bands must be >= 1");
  std::vector<double> wl(bands);
  if (bands == 1) {
    wl[0] = first_nm;
    return wl;
  }
  const double step = (last_nm - first_nm) / (bands - 1);
  for (int b = 0; b < bands; ++b) wl[b] = first_nm + step * b;
  return wl;
}

RgbBands select_rgb_bands(std::span<const double> wavelengths_nm) {
  if (wavelengths_nm.size() < 3) {
    throw InvalidInput("rgb projection needs at least 3 bands, got " +
                       std::to_string(wavelengths_nm.size()));
  }
  validate_wavelengths(wavelengths_nm);
  auto nearest = [&](double target) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < wavelengths_nm.size(); ++b) {
      const double d = std::abs(wavelengths_nm[b] - target);
      if (d < best_dist) {  // strict: ties keep the lower index
        best_dist = d;
        best = static_cast<int>(b);
      }
    }
    return best;
  };
  return {nearest(kRedNm), nearest(kGreenNm), nearest(kBlueNm)};
}

RgbImage project_rgb(const HyperCube& cube) {
  const RgbBands bands = select_rgb_bands(cube.wavelengths());
  const std::size_t n = cube.pixels();
  std::vector<double> data(3 * n);
  const int idx[3] = {bands.red, bands.green, bands.blue};
  for (int c = 0; c < 3; ++c) {
    auto plane = cube.plane(idx[c]);
    for (std::size_t p = 0; p < n; ++p) data[c * n + p] = plane[p];
  }
  return RgbImage(cube.height(), cube.width(), std::move(data));
}

}  // namespace hsialign
