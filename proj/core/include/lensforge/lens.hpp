#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lensforge {

/// Glass described by its d-line index and Abbe number.
struct Material {
  std::string name;  // catalog name, or empty when given as an (n, V) pair
  double nd = 1.0;
  double vd = 0.0;
};

enum class SurfaceKind {
  Aperture,  // planar stop; no refraction
  Sphere,    // spherical (or planar, when curvature is zero) refracting interface
  Paraxial,  // ideal thin lens, used for validation prescriptions
};

struct Surface {
  SurfaceKind kind = SurfaceKind::Sphere;
  double curvature = 0.0;       // 1/mm, 0 for a flat surface
  double thickness = 0.0;       // mm to the next vertex
  std::optional<Material> material;  // medium after this surface; air when empty
  double semi_diameter = 0.0;   // mm
  double conic = 0.0;
  double paraxial_focal = 0.0;  // mm, Paraxial only

  bool flat() const noexcept { return curvature == 0.0; }
  /// Signed radius in mm; +inf for flat surfaces.
  double radius() const noexcept;
};

struct LensPrescription {
  std::string id;
  std::vector<Surface> surfaces;  // last entry is the sensor plane
  std::size_t stop_index = 0;
  double focal_length = 0.0;  // mm, nominal
  double f_number = 0.0;
  double fov_full = 0.0;      // degrees, nominal
  std::optional<double> image_height_override;  // mm

  std::size_t sensor_index() const noexcept { return surfaces.size() - 1; }
  const Surface& sensor() const { return surfaces.back(); }
  /// Axial position of surface `i`'s vertex, first vertex at z = 0.
  double vertex_z(std::size_t i) const;
  /// Radius of the image circle the PSF map spans (mm).
  double max_image_height() const;
};

/// Parse the line-oriented prescription format; validates before returning.
LensPrescription load_prescription(std::string_view text);
LensPrescription load_prescription_file(const std::filesystem::path& path);
std::string serialize_prescription(const LensPrescription& lens);

/// Throws ValidationError naming the offending surface.
void validate(const LensPrescription& lens);

/// Scale every finite radius, every thickness and every n_d by an independent
/// factor drawn uniformly from [1 - fraction, 1 + fraction].
LensPrescription perturb_prescription(const LensPrescription& lens, double fraction,
                                      std::uint64_t seed);

struct BundledLens {
  std::string file_name;
  std::string text;
};
std::vector<BundledLens> bundled_lens_sources();
/// MOS-S1, MOS-S2, DoubleGauss, 6P in that order.
std::vector<LensPrescription> bundled_lenses();
LensPrescription bundled_lens(std::string_view id);

}  // namespace lensforge
