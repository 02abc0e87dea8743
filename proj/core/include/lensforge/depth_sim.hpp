#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lensforge/image.hpp"
#include "lensforge/psflib.hpp"

namespace lensforge {

/// Paraxial circle-of-confusion diameter in mm. F in mm, distances in metres.
double coc_diameter(double focal_mm, double f_number, double depth_m, double focus_m);

struct PixelOffset {
  int y = 0;
  int x = 0;
  bool operator==(const PixelOffset&) const = default;
};

/// Range of sensor patch cells touched by an image window placed at `offset`.
struct CellRange {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;
};
CellRange covered_cells(int height, int width, int m, PixelOffset offset = {});

/// Masked mean depth per m x m cell. Cells without valid pixels take the value
/// of the nearest cell that has some, and are flagged in `filled`.
DepthMap avg_depth_pool(const DepthMap& depth, int m);
/// Windowed variant: cells follow the sensor grid, the image sits at `offset`.
DepthMap avg_depth_pool(const DepthMap& depth, int m, PixelOffset offset);

/// Kernel for sensor cell (row, col): 3 * k * k floats, [channel][row][col].
using KernelLookup = std::function<std::span<const float>(int row, int col)>;

/// out(y, x) = sum_ab K[a][b] * I(y - a + k/2, x - b + k/2), with K chosen by the
/// sensor cell that (y, x) falls in and reflect-101 padding at the image border.
RgbImage convolve_patchwise(const RgbImage& image, int m, int k, const KernelLookup& kernel,
                            PixelOffset offset = {});

/// Add zero-mean Gaussian noise (std `sigma`) drawn from a seeded generator, then clamp to [0, 1].
void add_noise_and_clamp(RgbImage& image, double sigma, std::uint64_t seed);

struct SimulationOptions {
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  PixelOffset offset;  // placement of the image on the library's sensor grid
};

/// I_L = sum over cells of psf(cell, avg depth) * I_H, plus noise, clamped.
RgbImage simulate_aberration(const RgbImage& image, const DepthMap& depth, const PsfLibrary& lib,
                             const SimulationOptions& options = {});

/// Seeded placement of an image inside a larger sensor frame.
PixelOffset embed_resolution(int height, int width, int target_height, int target_width, std::uint64_t seed);

}  // namespace lensforge
