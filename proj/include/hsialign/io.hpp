#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsialign/cube.hpp"

namespace hsialign {

// HSIC container layout:
//   "HSIC" | u32 LE header length | UTF-8 JSON header | H*W*B f32 LE samples
// The header is {"bands","dtype":"f32le","height","wavelengths_nm","width"};
// samples are band-major, each plane row-major.

std::vector<std::uint8_t> encode_cube(const HyperCube& cube);
HyperCube decode_cube(const std::vector<std::uint8_t>& bytes);

HyperCube load_cube(const std::filesystem::path& path);
void save_cube(const HyperCube& cube, const std::filesystem::path& path);

/// Reads an 8- or 16-bit RGB PNG; codes map to [0,1] by division by the max
/// code. Grayscale, palette and alpha images raise ParseError
/// (kUnsupportedFormat).
RgbImage load_rgb(const std::filesystem::path& path);

/// Writes an RGB PNG at the given bit depth (8 or 16); values are quantized
/// with round-half-up, floor(v * max + 0.5).
void save_rgb(const RgbImage& image, const std::filesystem::path& path,
              int bit_depth = 8);

/// Decoded integer codes of an RGB PNG, interleaved per pixel as stored.
struct PngPayload {
  int height = 0;
  int width = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> codes;
};
PngPayload read_png_payload(const std::filesystem::path& path);
void write_png_payload(const PngPayload& payload,
                       const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hsialign
