#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "lensforge/lens.hpp"
#include "lensforge/materials.hpp"

namespace lensforge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Lens space: optical axis +z, first vertex at z = 0, light travels toward +z.
// The meridional plane is y-z; a positive field angle images onto +y.

enum class RayFate {
  Alive,
  Vignetted,               // hit outside a clear semi-diameter
  Missed,                  // no intersection on the surface cap
  NewtonDiverged,          // intersection did not converge in kMaxNewtonSteps
  TotalInternalReflection,
};

struct Ray {
  Vec3 position = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit direction cosines
  double wavelength_nm = kLambdaD;
  bool alive = true;
  RayFate fate = RayFate::Alive;

  void kill(RayFate why) noexcept {
    alive = false;
    fate = why;
  }
};

inline constexpr int kMaxNewtonSteps = 32;
inline constexpr double kNewtonTolerance = 1e-10;  // mm
inline constexpr int kMaxAimIterations = 20;
inline constexpr double kAimTolerance = 1e-6;  // mm

/// Diagnostic counters and worst-case residuals collected while tracing.
struct TraceStats {
  std::size_t refractions = 0;
  std::size_t intersections = 0;
  std::size_t newton_failures = 0;
  std::size_t vignetted = 0;
  std::size_t missed = 0;
  std::size_t tir = 0;
  std::size_t aim_failures = 0;
  double max_snell_residual = 0.0;
  double max_surface_residual = 0.0;  // mm
  double max_direction_drift = 0.0;   // | |d| - 1 |

  void merge(const TraceStats& other);
};

/// Geometric distance (mm) from `p` to the surface whose vertex sits at `vertex_z`.
double surface_residual(const Surface& surface, double vertex_z, const Vec3& p);

/// Unit surface normal at `p`; points toward -z near the vertex.
Vec3 surface_normal(const Surface& surface, double vertex_z, const Vec3& p);

/// Newton intersection of `ray` with `surface`. The returned ray sits on the
/// surface; it is dead when vignetted (if `clip`), missed, or not converged.
Ray intersect_surface(const Ray& ray, const Surface& surface, double vertex_z, bool clip = true,
                      TraceStats* stats = nullptr);

/// Vector Snell refraction; dead on total internal reflection.
Ray refract(const Ray& ray, const Vec3& normal, double n1, double n2, TraceStats* stats = nullptr);

struct TraceOptions {
  bool clip = true;
  /// Trace up to and including this surface; defaults to the sensor.
  std::size_t last_surface = std::numeric_limits<std::size_t>::max();
};

/// A prescription bound to one wavelength: vertex positions and media indices.
class PreparedLens {
 public:
  PreparedLens(const LensPrescription& lens, double wavelength_nm);

  const LensPrescription& lens() const noexcept { return *lens_; }
  double wavelength_nm() const noexcept { return wavelength_nm_; }
  double vertex_z(std::size_t i) const { return vertex_z_[i]; }
  /// Index of the medium after surface `i`; index_before(0) is air.
  double index_after(std::size_t i) const { return index_after_[i]; }
  double index_before(std::size_t i) const { return i == 0 ? 1.0 : index_after_[i - 1]; }

  /// Trace a ray that starts in object space, through surfaces [0, last].
  Ray trace(Ray ray, const TraceOptions& options = {}, TraceStats* stats = nullptr) const;

 private:
  const LensPrescription* lens_;
  double wavelength_nm_;
  std::vector<double> vertex_z_;
  std::vector<double> index_after_;
};

inline constexpr double kInfiniteDepthThreshold = 10.0;  // m; deeper objects are at infinity

/// An object point described by its field angle and depth.
struct ObjectPoint {
  double field_angle_deg = 0.0;
  double azimuth_deg = 0.0;  // image-side azimuth, from +y toward +x
  double depth_m = std::numeric_limits<double>::infinity();

  bool at_infinity() const noexcept { return !(depth_m <= kInfiniteDepthThreshold); }
};

struct AimResult {
  Ray ray;                  // launch ray in object space, before the first surface
  Vec2 launch = Vec2::Zero();  // aiming variable: crossing of the z = 0 plane
  Eigen::Matrix2d jacobian = Eigen::Matrix2d::Identity();  // d(stop xy) / d(launch)
  Vec2 stop_hit = Vec2::Zero();
  int iterations = 0;       // Newton updates applied
  bool converged = false;
};

/// Build the object-space ray for `object` that passes through `launch` on z = 0.
Ray launch_ray(const PreparedLens& lens, const ObjectPoint& object, const Vec2& launch);

/// Find the launch ray that crosses the stop at pupil_uv * stop semi-diameter.
/// With `chord_jacobian`, updates reuse that matrix instead of re-differencing; if that
/// stalls, the search restarts with full Newton steps.
AimResult aim_ray(const PreparedLens& lens, const ObjectPoint& object, const Vec2& pupil_uv,
                  std::optional<Vec2> launch_guess = std::nullopt,
                  const Eigen::Matrix2d* chord_jacobian = nullptr);
AimResult aim_ray(const LensPrescription& lens, double field_angle_deg, const Vec2& pupil_uv,
                  double wavelength_nm = kLambdaD);

/// Landing height on the sensor of the aimed chief ray for an object at infinity.
double chief_ray_image_height(const LensPrescription& lens, double field_angle_deg,
                              double wavelength_nm = kLambdaD);

/// Field angle whose chief ray lands at `image_height_mm` (object at infinity).
double field_angle_for_image_height(const LensPrescription& lens, double image_height_mm,
                                    double wavelength_nm = kLambdaD);

/// Largest field angle the PSF map needs: the chief ray reaching the image circle edge.
double max_field_angle(const LensPrescription& lens);

}  // namespace lensforge
