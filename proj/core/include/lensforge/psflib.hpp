#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lensforge/psf.hpp"
#include "lensforge/sensor.hpp"

namespace lensforge {

inline constexpr double kMinDepth = 0.7;   // m
inline constexpr double kMaxDepth = 10.0;  // m

/// Planes uniform in 1/d over [1/d_max, 1/d_min], nearest first, plus +inf when requested.
std::vector<double> inverse_uniform_depths(std::size_t finite_count, double d_min = kMinDepth,
                                           double d_max = kMaxDepth, bool with_infinity = true);

struct PsfMapGrid {
  int n_h = 8;
  int n_w = 12;
  int m = 64;     // pixels per patch side
  int k = 11;     // PSF side
  int n_fov = 16; // meridional field samples, from the axis to the image-circle edge
  int pupil_samples = 64;
  int trace_oversample = 1;  // trace at pitch / oversample, then resize down
  std::vector<double> depths = inverse_uniform_depths(11);

  int height_px() const noexcept { return n_h * m; }
  int width_px() const noexcept { return n_w * m; }
  std::size_t cell_count() const noexcept {
    return static_cast<std::size_t>(n_h) * n_w * depths.size();
  }
  void validate() const;

  static PsfMapGrid desk();
  static PsfMapGrid full();
};

/// Meridional PSFs for one depth: sample j sits at image height j / (n_fov - 1) * h_max.
struct MeridionalPsfs {
  double depth_m = 0.0;
  double max_image_height = 0.0;
  std::vector<PsfPatch> samples;
  std::vector<bool> traced;  // false where the sample fell back to a neighbour
};

struct BuildStats {
  std::size_t traced_fields = 0;
  std::size_t fallback_fields = 0;
  TraceStats trace;
};

MeridionalPsfs trace_meridional_psfs(const LensPrescription& lens, double depth_m,
                                     const PsfMapGrid& grid, const SensorSpec& sensor,
                                     const SpectralResponse& spectral, BuildStats* stats = nullptr);

/// Bilinear resample of `psf` rotated by `azimuth_rad` (from +y toward +x), renormalized.
PsfPatch rotate_psf(const PsfPatch& psf, double azimuth_rad);

/// Area resample from `psf.pitch_mm` to `to_pitch_mm` with side `to_k`, renormalized.
PsfPatch resize_psf(const PsfPatch& psf, double to_pitch_mm, int to_k);

/// Linear blend of the two meridional samples bracketing `image_height`.
PsfPatch interpolate_meridional(const MeridionalPsfs& merid, double image_height);

/// Sensor-plane centre (mm) of patch (row, col); rows run along +y.
Vec2 patch_center_mm(const PsfMapGrid& grid, const SensorSpec& sensor, int row, int col);

/// The P_resize(P_rot(P_inter(...))) chain for one patch.
PsfPatch assemble_cell(const MeridionalPsfs& merid, const PsfMapGrid& grid, const SensorSpec& sensor,
                       int row, int col);

/// n_h x n_w PSFs, row-major.
std::vector<PsfPatch> build_psf_map(const LensPrescription& lens, double depth_m, const PsfMapGrid& grid,
                                    const SensorSpec& sensor, const SpectralResponse& spectral,
                                    BuildStats* stats = nullptr);

class PsfLibrary {
 public:
  PsfLibrary() = default;
  PsfLibrary(std::string lens_id, int n_h, int n_w, int m, int k, std::vector<double> depths);

  const std::string& lens_id() const noexcept { return lens_id_; }
  int n_h() const noexcept { return n_h_; }
  int n_w() const noexcept { return n_w_; }
  int m() const noexcept { return m_; }
  int k() const noexcept { return k_; }
  const std::vector<double>& depths() const noexcept { return depths_; }
  std::size_t depth_count() const noexcept { return depths_.size(); }
  std::size_t patch_floats() const noexcept { return 3 * static_cast<std::size_t>(k_) * k_; }
  std::size_t cell_count() const noexcept {
    return static_cast<std::size_t>(n_h_) * n_w_ * depths_.size();
  }

  std::span<const float> patch(std::size_t depth_index, int row, int col) const;
  std::span<float> patch(std::size_t depth_index, int row, int col);
  PsfPatch patch_copy(std::size_t depth_index, int row, int col) const;
  void set_patch(std::size_t depth_index, int row, int col, const PsfPatch& psf);

  const std::vector<float>& data() const noexcept { return data_; }
  std::vector<float>& data() noexcept { return data_; }

  bool operator==(const PsfLibrary& other) const = default;

 private:
  std::size_t offset(std::size_t depth_index, int row, int col) const;

  std::string lens_id_;
  int n_h_ = 0;
  int n_w_ = 0;
  int m_ = 0;
  int k_ = 0;
  std::vector<double> depths_;
  std::vector<float> data_;  // (depth, row, col, channel, y, x)
};

PsfLibrary build_psflib(const LensPrescription& lens, const PsfMapGrid& grid,
                        const SpectralResponse& spectral = SpectralResponse::default_rgb(),
                        BuildStats* stats = nullptr);

/// Index of the plane nearest to `depth_m` in inverse depth, with clamping at both ends.
std::size_t nearest_depth_plane(const std::vector<double>& depths, double depth_m);

PsfPatch query_psf(const PsfLibrary& lib, int row, int col, double depth_m);

/// Byte layout of the PSFL container; `encode` appends the CRC32 trailer.
std::vector<std::uint8_t> encode_psflib(const PsfLibrary& lib);
PsfLibrary decode_psflib(std::span<const std::uint8_t> bytes);
void save_psflib(const PsfLibrary& lib, const std::filesystem::path& path);
PsfLibrary load_psflib(const std::filesystem::path& path);
/// Exact file size for the given dimensions.
std::size_t psflib_file_size(std::size_t lens_id_bytes, std::size_t n_h, std::size_t n_w,
                             std::size_t depth_count, std::size_t k);

}  // namespace lensforge
