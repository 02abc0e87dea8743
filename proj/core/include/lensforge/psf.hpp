#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lensforge/raytrace.hpp"
#include "lensforge/sensor.hpp"

namespace lensforge {

/// One k x k x 3 kernel. Rows run along sensor +y, columns along +x; the
/// centre pixel (k/2, k/2) sits on the chief-ray landing point.
struct PsfPatch {
  int k = 0;
  double pitch_mm = 0.0;      // 0 when unknown (e.g. read back from a library file)
  Vec2 center_mm = Vec2::Zero();
  std::vector<float> data;    // [channel][row][col]

  PsfPatch() = default;
  PsfPatch(int k, double pitch_mm);

  static PsfPatch delta(int k);

  std::size_t channel_size() const noexcept { return static_cast<std::size_t>(k) * k; }
  float& at(int c, int row, int col) { return data[c * channel_size() + row * k + col]; }
  float at(int c, int row, int col) const { return data[c * channel_size() + row * k + col]; }
  std::span<float> channel(int c) { return {data.data() + c * channel_size(), channel_size()}; }
  std::span<const float> channel(int c) const { return {data.data() + c * channel_size(), channel_size()}; }

  /// Divide every channel by its own sum. Channels with zero sum are left alone.
  void normalize();
  double channel_sum(int c) const;
  bool is_delta() const;
};

/// Per-ray energy of the Gaussian splat at distance r from a pixel centre.
double splat_weight(double r_mm, double sigma_mm);

/// Half-width of the square neighbourhood each ray deposits into (5 x 5).
inline constexpr int kSplatRadius = 2;

struct TraceSettings {
  int pupil_samples = 128;  // rectangular grid per side
  int k = 41;
};

/// A single-wavelength PSF, before conversion to float storage.
struct MonoPsf {
  int k = 0;
  double pitch_mm = 0.0;
  Vec2 center_mm = Vec2::Zero();
  std::vector<double> data;  // [row][col], unit sum
};

struct MonoTraceResult {
  MonoPsf psf;
  double raw_energy = 0.0;  // splat total before normalization
  std::size_t rays_launched = 0;
  std::size_t rays_landed = 0;
  TraceStats stats;
  std::vector<Vec2> landings;  // filled when requested
};

struct MonoTraceOptions {
  bool keep_landings = false;
};

/// Launch a pupil grid from `object`, splat every surviving ray onto a k x k
/// patch around the chief-ray landing, then normalize to unit sum.
MonoTraceResult trace_psf_mono(const LensPrescription& lens, const ObjectPoint& object,
                               double wavelength_nm, const SensorSpec& sensor,
                               const TraceSettings& settings = {},
                               const MonoTraceOptions& options = {});

/// Sum of normalized per-wavelength PSFs weighted by the spectral response.
PsfPatch trace_psf_rgb(const LensPrescription& lens, const ObjectPoint& object,
                       const SpectralResponse& spectral, const SensorSpec& sensor,
                       const TraceSettings& settings = {}, TraceStats* stats = nullptr);

/// Object point at normalized image height `field` in [0, 1] of the image circle.
ObjectPoint object_at_normalized_field(const LensPrescription& lens, double field, double depth_m,
                                       double azimuth_deg = 0.0);

/// Sum |a - b| over all entries divided by sum |a|.
double relative_l1(const PsfPatch& a, const PsfPatch& b);

}  // namespace lensforge
