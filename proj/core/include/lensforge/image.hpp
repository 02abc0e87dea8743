#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lensforge {

/// Planar float RGB image with values in [0, 1]. Row index runs along sensor +y.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // [channel][row][col]

  RgbImage() = default;
  RgbImage(int h, int w, float fill = 0.0f);

  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  std::span<float> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const float> plane(int c) const { return {data.data() + c * plane_size(), plane_size()}; }

  RgbImage crop(int y0, int x0, int h, int w) const;
  void paste(const RgbImage& src, int y0, int x0);
  void clamp01();
  double total() const;

  bool operator==(const RgbImage&) const = default;
};

/// Per-pixel depth in metres with an explicit validity mask.
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<float> depth;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> filled;  // set where a value was inherited rather than measured

  DepthMap() = default;
  DepthMap(int h, int w, float fill = 1.0f);

  std::size_t size() const noexcept { return static_cast<std::size_t>(height) * width; }
  float& at(int y, int x) { return depth[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  bool is_valid(int y, int x) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
  void set_missing(int y, int x);
  std::size_t valid_count() const;

  DepthMap crop(int y0, int x0, int h, int w) const;
  void validate() const;
};

struct DepthStats {
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  double hole_fraction = 0.0;
  std::size_t valid = 0;
};
DepthStats depth_stats(const DepthMap& depth);

// Image files. Rows are written top to bottom in row-index order.
RgbImage read_png(const std::filesystem::path& path);
RgbImage decode_png(std::span<const std::uint8_t> bytes);
void write_png(const RgbImage& image, const std::filesystem::path& path, int bit_depth = 8);
std::vector<std::uint8_t> encode_png(const RgbImage& image, int bit_depth = 8);

// Depth files: PFM (float32, metres; non-finite or non-positive marks a hole) or 16-bit
// grayscale PNG where value * scale_mm is the depth in millimetres and 0 is a hole.
DepthMap read_pfm(const std::filesystem::path& path);
DepthMap decode_pfm(std::span<const std::uint8_t> bytes);
void write_pfm(const DepthMap& depth, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pfm(const DepthMap& depth);
DepthMap decode_depth_png16(std::span<const std::uint8_t> bytes, double scale_mm);
std::vector<std::uint8_t> encode_depth_png16(const DepthMap& depth, double scale_mm);
/// PNG16 depth with a `<file>.json` sidecar holding {"scale_mm": s}; scale 1 mm when absent.
DepthMap read_depth_png16(const std::filesystem::path& path);
void write_depth_png16(const DepthMap& depth, const std::filesystem::path& path, double scale_mm = 1.0);
/// Dispatch on file contents: PFM header or PNG signature.
DepthMap read_depth(const std::filesystem::path& path);
DepthMap decode_depth(std::span<const std::uint8_t> bytes, double png_scale_mm = 1.0);

bool is_png(std::span<const std::uint8_t> bytes);
bool is_pfm(std::span<const std::uint8_t> bytes);

}  // namespace lensforge
