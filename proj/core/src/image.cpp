#include "lensforge/image.hpp"

#include <algorithm>
#include <cmath>

#include "lensforge/error.hpp"

namespace lensforge {

RgbImage::RgbImage(int h, int w, float fill) : height(h), width(w) {
  if (h <= 0 || w <= 0) throw ValidationError("image dimensions must be positive");
  data.assign(3 * plane_size(), fill);
}

RgbImage RgbImage::crop(int y0, int x0, int h, int w) const {
  if (y0 < 0 || x0 < 0 || y0 + h > height || x0 + w > width) throw ValidationError("crop outside image");
  RgbImage out(h, w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = at(c, y0 + y, x0 + x);
    }
  }
  return out;
}

void RgbImage::paste(const RgbImage& src, int y0, int x0) {
  if (y0 < 0 || x0 < 0 || y0 + src.height > height || x0 + src.width > width) {
    throw ValidationError("paste outside image");
  }
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) at(c, y0 + y, x0 + x) = src.at(c, y, x);
    }
  }
}

void RgbImage::clamp01() {
  for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
}

double RgbImage::total() const {
  double s = 0.0;
  for (float v : data) s += v;
  return s;
}

DepthMap::DepthMap(int h, int w, float fill) : height(h), width(w) {
  if (h <= 0 || w <= 0) throw ValidationError("depth map dimensions must be positive");
  depth.assign(size(), fill);
  valid.assign(size(), 1);
  filled.assign(size(), 0);
}

void DepthMap::set_missing(int y, int x) {
  const std::size_t i = static_cast<std::size_t>(y) * width + x;
  valid[i] = 0;
  depth[i] = 0.0f;
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

DepthMap DepthMap::crop(int y0, int x0, int h, int w) const {
  if (y0 < 0 || x0 < 0 || y0 + h > height || x0 + w > width) throw ValidationError("crop outside depth map");
  DepthMap out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t s = static_cast<std::size_t>(y0 + y) * width + x0 + x;
      const std::size_t d = static_cast<std::size_t>(y) * w + x;
      out.depth[d] = depth[s];
      out.valid[d] = valid[s];
      out.filled[d] = filled[s];
    }
  }
  return out;
}

void DepthMap::validate() const {
  if (depth.size() != size() || valid.size() != size()) throw ValidationError("depth map storage size mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    if (valid[i] && !(depth[i] > 0.0f)) throw ValidationError("valid depth values must be positive");
  }
}

DepthStats depth_stats(const DepthMap& depth) {
  DepthStats s;
  std::vector<float> values;
  values.reserve(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (depth.valid[i]) values.push_back(depth.depth[i]);
  }
  s.valid = values.size();
  s.hole_fraction = depth.size() ? 1.0 - static_cast<double>(values.size()) / depth.size() : 0.0;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.min = values.front();
  s.max = values.back();
  const std::size_t n = values.size();
  s.median = n % 2 ? values[n / 2] : 0.5 * (static_cast<double>(values[n / 2 - 1]) + values[n / 2]);
  return s;
}

}  // namespace lensforge
