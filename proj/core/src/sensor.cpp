#include "lensforge/sensor.hpp"

#include <cmath>

#include "lensforge/error.hpp"

namespace lensforge {

double SensorSpec::half_diagonal_mm() const {
  return 0.5 * std::hypot(width_px * pitch_w, height_px * pitch_h);
}

double SensorSpec::splat_sigma() const { return std::hypot(pitch_h, pitch_w) / 3.0; }

void SensorSpec::validate() const {
  if (width_px <= 0 || height_px <= 0) throw ValidationError("sensor pixel counts must be positive");
  if (!(pitch_h > 0.0) || !(pitch_w > 0.0)) throw ValidationError("sensor pitch must be positive");
}

SensorSpec SensorSpec::for_lens(const LensPrescription& lens, int height_px, int width_px) {
  SensorSpec s;
  s.height_px = height_px;
  s.width_px = width_px;
  const double diag_px = std::hypot(static_cast<double>(height_px), static_cast<double>(width_px));
  s.pitch_h = s.pitch_w = 2.0 * lens.max_image_height() / diag_px;
  s.validate();
  return s;
}

void SpectralResponse::validate() const {
  for (const auto& ch : channels) {
    if (ch.empty()) throw ValidationError("spectral channel has no samples");
    double sum = 0.0;
    for (const auto& s : ch) {
      if (!(s.weight >= 0.0)) throw ValidationError("spectral weights must be non-negative");
      if (!(s.wavelength_nm >= 400.0 && s.wavelength_nm <= 700.0)) {
        throw ValidationError("spectral samples must lie in 400..700 nm");
      }
      sum += s.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("spectral weights must sum to 1 per channel");
  }
}

SpectralResponse SpectralResponse::normalized() const {
  SpectralResponse out = *this;
  for (auto& ch : out.channels) {
    double sum = 0.0;
    for (const auto& s : ch) sum += s.weight;
    if (!(sum > 0.0)) throw ValidationError("spectral channel has zero total weight");
    for (auto& s : ch) s.weight /= sum;
  }
  return out;
}

SpectralResponse SpectralResponse::default_rgb() {
  SpectralResponse r;
  r.channels[0] = {{610.0, 0.25}, {590.0, 0.5}, {570.0, 0.25}};
  r.channels[1] = {{555.0, 0.25}, {535.0, 0.5}, {515.0, 0.25}};
  r.channels[2] = {{480.0, 0.25}, {460.0, 0.5}, {440.0, 0.25}};
  return r;
}

SpectralResponse SpectralResponse::single(double r_nm, double g_nm, double b_nm) {
  SpectralResponse r;
  r.channels[0] = {{r_nm, 1.0}};
  r.channels[1] = {{g_nm, 1.0}};
  r.channels[2] = {{b_nm, 1.0}};
  return r;
}

}  // namespace lensforge
