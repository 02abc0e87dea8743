#include "lensforge/depth_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <tbb/parallel_for.h>

#include "lensforge/error.hpp"

namespace lensforge {
namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Reflect-101 (mirror without repeating the edge) for any index.
int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

double coc_diameter(double focal_mm, double f_number, double depth_m, double focus_m) {
  if (!(depth_m > 0.0)) throw ValidationError("object distance must be positive");
  if (!(f_number > 0.0) || !(focal_mm > 0.0)) throw ValidationError("focal length and F-number must be positive");
  const double f_d = focus_m * 1000.0;
  if (!(f_d > focal_mm)) throw ValidationError("focus distance must exceed the focal length");
  const double aperture = focal_mm / f_number;
  const double mag = focal_mm / (f_d - focal_mm);
  if (std::isinf(depth_m)) return aperture * mag;
  const double d = depth_m * 1000.0;
  return aperture * (std::abs(d - f_d) / d) * mag;
}

CellRange covered_cells(int height, int width, int m, PixelOffset offset) {
  if (m <= 0) throw ValidationError("patch size must be positive");
  if (height <= 0 || width <= 0) throw ValidationError("image dimensions must be positive");
  CellRange r;
  r.row0 = floor_div(offset.y, m);
  r.col0 = floor_div(offset.x, m);
  r.rows = floor_div(offset.y + height - 1, m) - r.row0 + 1;
  r.cols = floor_div(offset.x + width - 1, m) - r.col0 + 1;
  return r;
}

DepthMap avg_depth_pool(const DepthMap& depth, int m) {
  if (m <= 0 || depth.height % m != 0 || depth.width % m != 0) {
    throw ValidationError("depth map dimensions must be divisible by the patch size");
  }
  return avg_depth_pool(depth, m, {});
}

DepthMap avg_depth_pool(const DepthMap& depth, int m, PixelOffset offset) {
  const CellRange cells = covered_cells(depth.height, depth.width, m, offset);
  std::vector<double> sum(static_cast<std::size_t>(cells.rows) * cells.cols, 0.0);
  std::vector<std::size_t> count(sum.size(), 0);
  for (int y = 0; y < depth.height; ++y) {
    const int cr = floor_div(y + offset.y, m) - cells.row0;
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.is_valid(y, x)) continue;
      const int cc = floor_div(x + offset.x, m) - cells.col0;
      sum[cr * cells.cols + cc] += depth.at(y, x);
      ++count[cr * cells.cols + cc];
    }
  }
  DepthMap out(cells.rows, cells.cols);
  bool any = false;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (count[i]) {
      out.depth[i] = static_cast<float>(sum[i] / count[i]);
      any = true;
    } else {
      out.valid[i] = 0;
    }
  }
  if (!any) throw ValidationError("depth map has no valid pixels");
  for (int r = 0; r < cells.rows; ++r) {
    for (int c = 0; c < cells.cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cells.cols + c;
      if (count[i]) continue;
      double best = std::numeric_limits<double>::infinity();
      float value = 0.0f;
      for (int r2 = 0; r2 < cells.rows; ++r2) {
        for (int c2 = 0; c2 < cells.cols; ++c2) {
          const std::size_t j = static_cast<std::size_t>(r2) * cells.cols + c2;
          if (!count[j]) continue;
          const double dist = std::hypot(r2 - r, c2 - c);
          if (dist < best) {
            best = dist;
            value = out.depth[j];
          }
        }
      }
      out.depth[i] = value;
      out.valid[i] = 1;
      out.filled[i] = 1;
    }
  }
  return out;
}

RgbImage convolve_patchwise(const RgbImage& image, int m, int k, const KernelLookup& kernel, PixelOffset offset) {
  if (k <= 0 || k % 2 == 0) throw ValidationError("kernel size must be odd and positive");
  const CellRange cells = covered_cells(image.height, image.width, m, offset);
  const int half = k / 2;
  const int H = image.height;
  const int W = image.width;
  const int PH = H + 2 * half;
  const int PW = W + 2 * half;

  // Reflect-padded copy of each channel: padded(y + half, x + half) = I(y, x).
  std::vector<float> padded(3 * static_cast<std::size_t>(PH) * PW);
  for (int c = 0; c < 3; ++c) {
    for (int py = 0; py < PH; ++py) {
      const int sy = reflect101(py - half, H);
      for (int px = 0; px < PW; ++px) {
        padded[(static_cast<std::size_t>(c) * PH + py) * PW + px] = image.at(c, sy, reflect101(px - half, W));
      }
    }
  }

  RgbImage out(H, W);
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  tbb::parallel_for(0, cells.rows * cells.cols, [&](int idx) {
    const int row = cells.row0 + idx / cells.cols;
    const int col = cells.col0 + idx % cells.cols;
    const int y0 = std::max(0, row * m - offset.y);
    const int y1 = std::min(H, (row + 1) * m - offset.y);
    const int x0 = std::max(0, col * m - offset.x);
    const int x1 = std::min(W, (col + 1) * m - offset.x);
    const std::span<const float> K = kernel(row, col);
    if (K.size() != 3 * kk) throw ValidationError("kernel size does not match k");
    for (int c = 0; c < 3; ++c) {
      const float* kc = K.data() + c * kk;
      const float* pc = padded.data() + static_cast<std::size_t>(c) * PH * PW;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          // I(y - a + half, x - b + half) sits at padded(y - a + 2 half, x - b + 2 half).
          double acc = 0.0;
          for (int a = 0; a < k; ++a) {
            const float* prow = pc + static_cast<std::size_t>(y - a + 2 * half) * PW + (x + 2 * half);
            const float* krow = kc + static_cast<std::size_t>(a) * k;
            for (int b = 0; b < k; ++b) acc += static_cast<double>(krow[b]) * prow[-b];
          }
          out.at(c, y, x) = static_cast<float>(acc);
        }
      }
    }
  });
  return out;
}

void add_noise_and_clamp(RgbImage& image, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw ValidationError("noise sigma must be non-negative");
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (float& v : image.data) v = static_cast<float>(v + noise(rng));
  }
  image.clamp01();
}

RgbImage simulate_aberration(const RgbImage& image, const DepthMap& depth, const PsfLibrary& lib,
                             const SimulationOptions& options) {
  if (image.height != depth.height || image.width != depth.width) {
    throw ValidationError("image and depth map dimensions differ");
  }
  const PixelOffset off = options.offset;
  if (off.y < 0 || off.x < 0 || off.y + image.height > lib.n_h() * lib.m() ||
      off.x + image.width > lib.n_w() * lib.m()) {
    throw ValidationError("image window of " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                          " at offset (" + std::to_string(off.y) + "," + std::to_string(off.x) +
                          ") does not fit the library sensor of " + std::to_string(lib.n_h() * lib.m()) + "x" +
                          std::to_string(lib.n_w() * lib.m()));
  }
  const CellRange cells = covered_cells(image.height, image.width, lib.m(), off);
  const DepthMap pooled = avg_depth_pool(depth, lib.m(), off);
  std::vector<std::size_t> plane(pooled.size());
  for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = nearest_depth_plane(lib.depths(), pooled.depth[i]);
  RgbImage out = convolve_patchwise(
      image, lib.m(), lib.k(),
      [&](int row, int col) {
        const std::size_t i = static_cast<std::size_t>(row - cells.row0) * cells.cols + (col - cells.col0);
        return lib.patch(plane[i], row, col);
      },
      off);
  add_noise_and_clamp(out, options.noise_sigma, options.seed);
  return out;
}

PixelOffset embed_resolution(int height, int width, int target_height, int target_width, std::uint64_t seed) {
  if (height <= 0 || width <= 0) throw ValidationError("image dimensions must be positive");
  if (height > target_height || width > target_width) {
    throw ValidationError("image of " + std::to_string(height) + "x" + std::to_string(width) +
                          " is larger than the target " + std::to_string(target_height) + "x" +
                          std::to_string(target_width));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dy(0, target_height - height);
  std::uniform_int_distribution<int> dx(0, target_width - width);
  PixelOffset off;
  off.y = dy(rng);
  off.x = dx(rng);
  return off;
}

}  // namespace lensforge
