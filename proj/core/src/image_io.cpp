#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "lensforge/binary_io.hpp"
#include "lensforge/error.hpp"
#include "lensforge/image.hpp"

namespace lensforge {
namespace {

struct MemReader {
  std::span<const std::uint8_t> data;
  std::size_t pos = 0;
};

void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->data.size() - r->pos < n) png_error(png, "truncated PNG data");
  std::memcpy(out, r->data.data() + r->pos, n);
  r->pos += n;
}

void png_write_mem(png_structp png, png_bytep in, png_size_t n) {
  auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  v->insert(v->end(), in, in + n);
}

void png_flush_noop(png_structp) {}

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warn_fn(png_structp, png_const_charp) {}

// Decoded samples, always 1 or 3 channels, 8 or 16 bits.
struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

RawPng decode_raw(std::span<const std::uint8_t> bytes, bool want_rgb) {
  if (!is_png(bytes)) throw FormatError(FormatError::Kind::Magic, "not a PNG file");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn_fn);
  if (!png) throw FormatError(FormatError::Kind::Io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  MemReader reader{bytes, 0};
  RawPng raw;
  std::vector<std::uint8_t> buf;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(FormatError::Kind::Truncated, "PNG decode failed: " + err);
  }
  png_set_read_fn(png, &reader, png_read_mem);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (want_rgb && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  raw.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buf.resize(rowbytes * raw.height);
  rows.resize(raw.height);
  for (int y = 0; y < raw.height; ++y) rows[y] = buf.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height * raw.channels;
  raw.samples.resize(n);
  if (raw.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) raw.samples[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  } else {
    for (std::size_t i = 0; i < n; ++i) raw.samples[i] = buf[i];
  }
  return raw;
}

std::vector<std::uint8_t> encode_raw(int width, int height, int channels, int bit_depth,
                                     const std::vector<std::uint16_t>& samples) {
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn_fn);
  if (!png) throw FormatError(FormatError::Kind::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<std::uint8_t> buf(rowbytes * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (bit_depth == 16) {
      buf[2 * i] = static_cast<std::uint8_t>(samples[i] >> 8);
      buf[2 * i + 1] = static_cast<std::uint8_t>(samples[i] & 0xff);
    } else {
      buf[i] = static_cast<std::uint8_t>(samples[i]);
    }
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buf.data() + rowbytes * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(FormatError::Kind::Io, "PNG encode failed: " + err);
  }
  png_set_write_fn(png, &out, png_write_mem, png_flush_noop);
  png_set_IHDR(png, info, width, height, bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

}  // namespace

bool is_png(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

bool is_pfm(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 'P' && (bytes[1] == 'f' || bytes[1] == 'F') &&
         std::isspace(static_cast<unsigned char>(bytes[2]));
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  const RawPng raw = decode_raw(bytes, true);
  RgbImage img(raw.height, raw.width);
  const float maxv = raw.bit_depth == 16 ? 65535.0f : 255.0f;
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * raw.width + x) * 3;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = raw.samples[base + c] / maxv;
    }
  }
  return img;
}

RgbImage read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

std::vector<std::uint8_t> encode_png(const RgbImage& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ValidationError("PNG bit depth must be 8 or 16");
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<std::uint16_t> samples(image.plane_size() * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * image.width + x) * 3;
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(c, y, x)), 0.0, 1.0);
        samples[base + c] = static_cast<std::uint16_t>(std::lround(v * maxv));
      }
    }
  }
  return encode_raw(image.width, image.height, 3, bit_depth, samples);
}

void write_png(const RgbImage& image, const std::filesystem::path& path, int bit_depth) {
  write_file_bytes(path, encode_png(image, bit_depth));
}

DepthMap decode_pfm(std::span<const std::uint8_t> bytes) {
  if (!is_pfm(bytes)) throw FormatError(FormatError::Kind::Magic, "not a PFM file");
  const int channels = bytes[1] == 'F' ? 3 : 1;
  // Header: "Pf" ws width ws height ws scale single-whitespace data.
  std::size_t pos = 2;
  auto next_token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) throw FormatError(FormatError::Kind::Truncated, "PFM header truncated");
    return std::string(reinterpret_cast<const char*>(bytes.data()) + start, pos - start);
  };
  int w = 0;
  int h = 0;
  double scale = 0.0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    scale = std::stod(next_token());
  } catch (const std::logic_error&) {
    throw FormatError(FormatError::Kind::Dimensions, "PFM header is malformed");
  }
  if (pos >= bytes.size()) throw FormatError(FormatError::Kind::Truncated, "PFM header truncated");
  ++pos;  // single whitespace byte
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16) || scale == 0.0) {
    throw FormatError(FormatError::Kind::Dimensions, "PFM dimensions out of range");
  }
  const bool little = scale < 0.0;
  const std::size_t count = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - pos < count * 4) throw FormatError(FormatError::Kind::Truncated, "PFM pixel data truncated");
  DepthMap out(h, w);
  for (int row = 0; row < h; ++row) {
    // PFM stores scanlines bottom to top.
    const int y = h - 1 - row;
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* p = bytes.data() + pos + ((static_cast<std::size_t>(row) * w + x) * channels) * 4;
      std::uint32_t u = little ? (p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24))
                               : (p[3] | (p[2] << 8) | (p[1] << 16) | (static_cast<std::uint32_t>(p[0]) << 24));
      float v;
      std::memcpy(&v, &u, 4);
      if (std::isfinite(v) && v > 0.0f) {
        out.at(y, x) = v;
      } else {
        out.set_missing(y, x);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_pfm(const DepthMap& depth) {
  const std::string header = "Pf\n" + std::to_string(depth.width) + " " + std::to_string(depth.height) + "\n-1\n";
  ByteWriter w;
  w.bytes(header.data(), header.size());
  for (int row = 0; row < depth.height; ++row) {
    const int y = depth.height - 1 - row;
    for (int x = 0; x < depth.width; ++x) w.f32(depth.is_valid(y, x) ? depth.at(y, x) : 0.0f);
  }
  return w.take();
}

DepthMap read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file_bytes(path)); }

void write_pfm(const DepthMap& depth, const std::filesystem::path& path) {
  write_file_bytes(path, encode_pfm(depth));
}

DepthMap decode_depth_png16(std::span<const std::uint8_t> bytes, double scale_mm) {
  if (!(scale_mm > 0.0)) throw ValidationError("depth PNG scale must be positive");
  const RawPng raw = decode_raw(bytes, false);
  if (raw.bit_depth != 16 || raw.channels != 1) {
    throw FormatError(FormatError::Kind::Dimensions, "depth PNG must be 16-bit single channel");
  }
  DepthMap out(raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const std::uint16_t v = raw.samples[static_cast<std::size_t>(y) * raw.width + x];
      if (v == 0) {
        out.set_missing(y, x);
      } else {
        out.at(y, x) = static_cast<float>(v * scale_mm / 1000.0);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_depth_png16(const DepthMap& depth, double scale_mm) {
  if (!(scale_mm > 0.0)) throw ValidationError("depth PNG scale must be positive");
  std::vector<std::uint16_t> samples(depth.size());
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      std::uint16_t v = 0;
      if (depth.is_valid(y, x)) {
        const double units = std::round(depth.at(y, x) * 1000.0 / scale_mm);
        v = static_cast<std::uint16_t>(std::clamp(units, 1.0, 65535.0));
      }
      samples[static_cast<std::size_t>(y) * depth.width + x] = v;
    }
  }
  return encode_raw(depth.width, depth.height, 1, 16, samples);
}

DepthMap read_depth_png16(const std::filesystem::path& path) {
  double scale_mm = 1.0;
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const auto text = read_file_bytes(side);
    try {
      const auto j = nlohmann::json::parse(text.begin(), text.end());
      scale_mm = j.at("scale_mm").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(FormatError::Kind::Dimensions, "bad depth sidecar " + side.string() + ": " + e.what());
    }
  }
  return decode_depth_png16(read_file_bytes(path), scale_mm);
}

void write_depth_png16(const DepthMap& depth, const std::filesystem::path& path, double scale_mm) {
  write_file_bytes(path, encode_depth_png16(depth, scale_mm));
  const std::string side = nlohmann::json{{"scale_mm", scale_mm}}.dump() + "\n";
  write_file_bytes(sidecar_path(path), {reinterpret_cast<const std::uint8_t*>(side.data()), side.size()});
}

DepthMap read_depth(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (is_pfm(bytes)) return decode_pfm(bytes);
  if (is_png(bytes)) return read_depth_png16(path);
  throw FormatError(FormatError::Kind::Magic, "depth file is neither PFM nor PNG: " + path.string());
}

DepthMap decode_depth(std::span<const std::uint8_t> bytes, double png_scale_mm) {
  if (is_pfm(bytes)) return decode_pfm(bytes);
  if (is_png(bytes)) return decode_depth_png16(bytes, png_scale_mm);
  throw FormatError(FormatError::Kind::Magic, "depth data is neither PFM nor PNG");
}

}  // namespace lensforge
