#include "hsialign/io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "bytes.hpp"
#include "hsialign/error.hpp"
#include "json.hpp"

namespace hsialign {

using nlohmann::json;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(ParseErrorKind::kIo, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------
// HSIC

namespace {
constexpr char kCubeMagic[4] = {'H', 'S', 'I', 'C'};
}

std::vector<std::uint8_t> encode_cube(const HyperCube& cube) {
  json header = {{"height", cube.height()},
                 {"width", cube.width()},
                 {"bands", cube.bands()},
                 {"wavelengths_nm", cube.wavelengths()},
                 {"dtype", "f32le"}};
  const std::string text = header.dump();
  detail::ByteWriter w;
  w.put_bytes(kCubeMagic, 4);
  w.put_u32(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  for (float v : cube.data()) w.put_f32(v);
  return std::move(w.bytes());
}

HyperCube decode_cube(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCubeMagic, 4) != 0) {
    throw ParseError(ParseErrorKind::kBadMagic, "expected \"HSIC\"");
  }
  const std::uint32_t header_len = r.get_u32("header length");
  std::string text(header_len, '\0');
  r.get_bytes(text.data(), header_len, "header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(ParseErrorKind::kBadHeader, e.what());
  }
  long long height = 0, width = 0, bands = 0;
  std::vector<double> wavelengths;
  try {
    height = header.at("height").get<long long>();
    width = header.at("width").get<long long>();
    bands = header.at("bands").get<long long>();
    wavelengths = header.at("wavelengths_nm").get<std::vector<double>>();
    if (header.at("dtype").get<std::string>() != "f32le") {
      throw ParseError(ParseErrorKind::kBadHeader, "dtype must be f32le");
    }
  } catch (const json::exception& e) {
    throw ParseError(ParseErrorKind::kBadHeader, e.what());
  }
  if (height < 1 || width < 1 || bands < 1 || height > (1 << 20) ||
      width > (1 << 20)) {
    throw ParseError(ParseErrorKind::kBadHeader, "dimensions out of range");
  }
  if (static_cast<long long>(wavelengths.size()) != bands) {
    throw ParseError(ParseErrorKind::kBadHeader,
                     "wavelength count does not match band count");
  }
  try {
    validate_wavelengths(wavelengths);
  } catch (const InvalidInput& e) {
    throw ParseError(ParseErrorKind::kInvalidWavelengths, e.what());
  }

  const std::size_t count = static_cast<std::size_t>(height) * width * bands;
  if (r.remaining() < count * 4) {
    throw ParseError(ParseErrorKind::kTruncated,
                     "header declares " + std::to_string(count) +
                         " samples, payload holds " +
                         std::to_string(r.remaining() / 4));
  }
  if (r.remaining() > count * 4) {
    throw ParseError(ParseErrorKind::kTrailingData,
                     std::to_string(r.remaining() - count * 4) +
                         " bytes after the payload");
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = r.get_f32("payload");
    if (!std::isfinite(data[i])) {
      throw ParseError(ParseErrorKind::kNonFinite,
                       "sample " + std::to_string(i) + " is not finite");
    }
  }
  return HyperCube(static_cast<int>(height), static_cast<int>(width),
                   std::move(wavelengths), std::move(data));
}

HyperCube load_cube(const std::filesystem::path& path) {
  return decode_cube(read_file(path));
}

void save_cube(const HyperCube& cube, const std::filesystem::path& path) {
  write_file(path, encode_cube(cube));
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct PngFile {
  std::FILE* fp = nullptr;
  explicit PngFile(const std::filesystem::path& path, const char* mode)
      : fp(std::fopen(path.string().c_str(), mode)) {}
  ~PngFile() {
    if (fp) std::fclose(fp);
  }
  PngFile(const PngFile&) = delete;
  PngFile& operator=(const PngFile&) = delete;
};

struct PngMessage {
  char text[256] = {0};
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* m = static_cast<PngMessage*>(png_get_error_ptr(png));
  std::snprintf(m->text, sizeof(m->text), "%s", msg);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

// Reads into `out`; returns an empty string on success or an error message.
// Kept free of objects with non-trivial destructors between setjmp and the
// libpng calls.
std::string read_png_raw(std::FILE* fp, PngPayload& out, int& color_type) {
  PngMessage msg;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &msg,
                                           on_png_error, on_png_warning);
  if (!png) return "png_create_read_struct failed";
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return "png_create_info_struct failed";
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return msg.text[0] ? msg.text : "libpng error";
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  color_type = png_get_color_type(png, info);
  if (color_type != PNG_COLOR_TYPE_RGB ||
      (out.bit_depth != 8 && out.bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    return "";
  }
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.codes.assign(static_cast<std::size_t>(out.height) * out.width * 3, 0);
  std::vector<png_byte> row(rowbytes);
  for (int y = 0; y < out.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    const std::size_t base = static_cast<std::size_t>(y) * out.width * 3;
    for (int i = 0; i < out.width * 3; ++i) {
      out.codes[base + i] =
          out.bit_depth == 8
              ? row[i]
              : static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return "";
}

std::string write_png_raw(std::FILE* fp, const PngPayload& in) {
  PngMessage msg;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &msg,
                                            on_png_error, on_png_warning);
  if (!png) return "png_create_write_struct failed";
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return "png_create_info_struct failed";
  }
  std::vector<png_byte> row(static_cast<std::size_t>(in.width) * 3 *
                            (in.bit_depth / 8));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return msg.text[0] ? msg.text : "libpng error";
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, in.width, in.height, in.bit_depth,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < in.height; ++y) {
    const std::size_t base = static_cast<std::size_t>(y) * in.width * 3;
    for (int i = 0; i < in.width * 3; ++i) {
      const std::uint16_t c = in.codes[base + i];
      if (in.bit_depth == 8) {
        row[i] = static_cast<png_byte>(c);
      } else {
        row[2 * i] = static_cast<png_byte>(c >> 8);
        row[2 * i + 1] = static_cast<png_byte>(c & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return "";
}

}  // namespace

PngPayload read_png_payload(const std::filesystem::path& path) {
  PngFile file(path, "rb");
  if (!file.fp) {
    throw ParseError(ParseErrorKind::kIo, "cannot open " + path.string());
  }
  PngPayload payload;
  int color_type = -1;
  const std::string err = read_png_raw(file.fp, payload, color_type);
  if (!err.empty()) throw ParseError(ParseErrorKind::kBadHeader, err);
  if (color_type != PNG_COLOR_TYPE_RGB) {
    throw ParseError(ParseErrorKind::kUnsupportedFormat,
                     "only 3-channel RGB PNGs are supported (color type " +
                         std::to_string(color_type) + ")");
  }
  if (payload.bit_depth != 8 && payload.bit_depth != 16) {
    throw ParseError(ParseErrorKind::kUnsupportedFormat,
                     "bit depth must be 8 or 16, got " +
                         std::to_string(payload.bit_depth));
  }
  return payload;
}

void write_png_payload(const PngPayload& payload,
                       const std::filesystem::path& path) {
  if (payload.bit_depth != 8 && payload.bit_depth != 16) {
    throw InvalidInput("bit depth must be 8 or 16");
  }
  if (payload.codes.size() !=
      static_cast<std::size_t>(payload.height) * payload.width * 3) {
    throw DimensionMismatch("png payload size does not match dimensions");
  }
  PngFile file(path, "wb");
  if (!file.fp) throw Error("cannot write " + path.string());
  const std::string err = write_png_raw(file.fp, payload);
  if (!err.empty()) throw Error("png write failed: " + err);
}

RgbImage load_rgb(const std::filesystem::path& path) {
  const PngPayload payload = read_png_payload(path);
  const double max_code = payload.bit_depth == 8 ? 255.0 : 65535.0;
  const std::size_t n = static_cast<std::size_t>(payload.height) * payload.width;
  std::vector<double> data(3 * n);
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) {
      data[c * n + p] = payload.codes[3 * p + c] / max_code;
    }
  }
  return RgbImage(payload.height, payload.width, std::move(data));
}

void save_rgb(const RgbImage& image, const std::filesystem::path& path,
              int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw InvalidInput("bit depth must be 8 or 16");
  }
  const double max_code = bit_depth == 8 ? 255.0 : 65535.0;
  PngPayload payload{image.height(), image.width(), bit_depth, {}};
  const std::size_t n = image.pixels();
  payload.codes.resize(3 * n);
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) {
      payload.codes[3 * p + c] = static_cast<std::uint16_t>(
          std::floor(image.data()[c * n + p] * max_code + 0.5));
    }
  }
  write_png_payload(payload, path);
}

}  // namespace hsialign
