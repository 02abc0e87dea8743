#pragma once

#include <array>
#include <vector>

#include "lensforge/lens.hpp"

namespace lensforge {

struct SensorSpec {
  int width_px = 0;
  int height_px = 0;
  double pitch_h = 0.0;  // mm per pixel, vertical
  double pitch_w = 0.0;  // mm per pixel, horizontal

  double half_diagonal_mm() const;
  /// Splat width of the per-ray Gaussian: sqrt(dh^2 + dw^2) / 3.
  double splat_sigma() const;
  void validate() const;

  /// Square-pixel sensor whose half diagonal equals the lens image circle.
  static SensorSpec for_lens(const LensPrescription& lens, int height_px, int width_px);
};

inline constexpr int kFullSensorHeight = 1280;
inline constexpr int kFullSensorWidth = 1920;

enum class Channel { R = 0, G = 1, B = 2 };

struct SpectralSample {
  double wavelength_nm;
  double weight;
};

/// Per-channel wavelength samples with weights normalized to sum to one.
struct SpectralResponse {
  std::array<std::vector<SpectralSample>, 3> channels;

  void validate() const;
  /// Rescale each channel's weights to sum to one.
  SpectralResponse normalized() const;

  /// Nine samples, three per channel, with triangular weights.
  static SpectralResponse default_rgb();
  static SpectralResponse single(double r_nm, double g_nm, double b_nm);
};

}  // namespace lensforge
