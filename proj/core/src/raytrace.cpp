#include "lensforge/raytrace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "lensforge/error.hpp"

namespace lensforge {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

Ray plane_hit(const Ray& ray, double z, TraceStats* stats) {
  Ray out = ray;
  if (!(ray.direction.z() > 0.0)) {
    out.kill(RayFate::Missed);
    if (stats) ++stats->missed;
    return out;
  }
  const double t = (z - ray.position.z()) / ray.direction.z();
  out.position = ray.position + t * ray.direction;
  out.position.z() = z;
  return out;
}

// Ideal thin lens: slopes change by -height / f, which images any conjugate pair exactly.
Ray paraxial_bend(const Ray& ray, double focal) {
  Ray out = ray;
  const Vec3& d = ray.direction;
  const double sx = d.x() / d.z() - ray.position.x() / focal;
  const double sy = d.y() / d.z() - ray.position.y() / focal;
  out.direction = Vec3(sx, sy, 1.0).normalized();
  return out;
}

}  // namespace

void TraceStats::merge(const TraceStats& o) {
  refractions += o.refractions;
  intersections += o.intersections;
  newton_failures += o.newton_failures;
  vignetted += o.vignetted;
  missed += o.missed;
  tir += o.tir;
  aim_failures += o.aim_failures;
  max_snell_residual = std::max(max_snell_residual, o.max_snell_residual);
  max_surface_residual = std::max(max_surface_residual, o.max_surface_residual);
  max_direction_drift = std::max(max_direction_drift, o.max_direction_drift);
}

double surface_residual(const Surface& surface, double vertex_z, const Vec3& p) {
  if (surface.curvature == 0.0 || surface.kind != SurfaceKind::Sphere) {
    return std::abs(p.z() - vertex_z);
  }
  const double r = surface.radius();
  const Vec3 center(0.0, 0.0, vertex_z + r);
  return std::abs((p - center).norm() - std::abs(r));
}

Vec3 surface_normal(const Surface& surface, double vertex_z, const Vec3& p) {
  if (surface.curvature == 0.0 || surface.kind != SurfaceKind::Sphere) return -Vec3::UnitZ();
  const double c = surface.curvature;
  return Vec3(c * p.x(), c * p.y(), c * (p.z() - vertex_z) - 1.0).normalized();
}

Ray intersect_surface(const Ray& ray, const Surface& surface, double vertex_z, bool clip,
                      TraceStats* stats) {
  if (!ray.alive) return ray;
  if (stats) ++stats->intersections;
  Ray out;
  if (surface.curvature == 0.0 || surface.kind != SurfaceKind::Sphere) {
    out = plane_hit(ray, vertex_z, stats);
    if (!out.alive) return out;
  } else {
    out = ray;
    const Vec3& d = ray.direction;
    const Vec3 q(ray.position.x(), ray.position.y(), ray.position.z() - vertex_z);
    if (!(d.z() > 0.0)) {
      out.kill(RayFate::Missed);
      if (stats) ++stats->missed;
      return out;
    }
    // Solve c|q + t d|^2 - 2 (q + t d)_z = 0, starting from the vertex tangent plane.
    const double c = surface.curvature;
    double t = -q.z() / d.z();
    bool converged = false;
    for (int step = 0; step < kMaxNewtonSteps; ++step) {
      const Vec3 r = q + t * d;
      const double f = c * r.squaredNorm() - 2.0 * r.z();
      const double fp = 2.0 * (c * r.dot(d) - d.z());
      if (!(std::abs(fp) > 1e-300) || !std::isfinite(f)) break;
      const double dt = f / fp;
      t -= dt;
      if (std::abs(dt) < kNewtonTolerance) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      out.kill(RayFate::NewtonDiverged);
      if (stats) ++stats->newton_failures;
      return out;
    }
    const Vec3 r = q + t * d;
    // The far sheet of the sphere is not part of the lens surface.
    if (!(1.0 - c * r.z() > 0.0) || t < -kNewtonTolerance) {
      out.kill(RayFate::Missed);
      if (stats) ++stats->missed;
      return out;
    }
    out.position = Vec3(r.x(), r.y(), r.z() + vertex_z);
  }
  if (clip) {
    const double h2 = out.position.x() * out.position.x() + out.position.y() * out.position.y();
    if (h2 > surface.semi_diameter * surface.semi_diameter) {
      out.kill(RayFate::Vignetted);
      if (stats) ++stats->vignetted;
      return out;
    }
  }
  if (stats) {
    stats->max_surface_residual =
        std::max(stats->max_surface_residual, surface_residual(surface, vertex_z, out.position));
  }
  return out;
}

Ray refract(const Ray& ray, const Vec3& normal, double n1, double n2, TraceStats* stats) {
  if (!ray.alive) return ray;
  Ray out = ray;
  const Vec3& d = ray.direction;
  Vec3 n = normal;
  double cos_i = -n.dot(d);
  if (cos_i < 0.0) {
    n = -n;
    cos_i = -cos_i;
  }
  const double mu = n1 / n2;
  const double k = 1.0 - mu * mu * (1.0 - cos_i * cos_i);
  if (k < 0.0) {
    out.kill(RayFate::TotalInternalReflection);
    if (stats) ++stats->tir;
    return out;
  }
  const Vec3 t = mu * d + (mu * cos_i - std::sqrt(k)) * n;
  const double len = t.norm();
  out.direction = t / len;
  if (stats) {
    ++stats->refractions;
    const double sin_i = d.cross(n).norm();
    const double sin_t = out.direction.cross(n).norm();
    stats->max_snell_residual = std::max(stats->max_snell_residual, std::abs(n1 * sin_i - n2 * sin_t));
    stats->max_direction_drift =
        std::max(stats->max_direction_drift, std::abs(out.direction.norm() - 1.0));
  }
  return out;
}

PreparedLens::PreparedLens(const LensPrescription& lens, double wavelength_nm)
    : lens_(&lens), wavelength_nm_(wavelength_nm) {
  const std::size_t n = lens.surfaces.size();
  vertex_z_.resize(n);
  index_after_.resize(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    vertex_z_[i] = z;
    z += lens.surfaces[i].thickness;
    const auto& mat = lens.surfaces[i].material;
    index_after_[i] = mat ? refractive_index(*mat, wavelength_nm) : 1.0;
  }
}

Ray PreparedLens::trace(Ray ray, const TraceOptions& options, TraceStats* stats) const {
  const auto& surfaces = lens_->surfaces;
  const std::size_t sensor = surfaces.size() - 1;
  const std::size_t last = std::min(options.last_surface, sensor);
  ray.wavelength_nm = wavelength_nm_;
  for (std::size_t i = 0; i <= last && ray.alive; ++i) {
    const Surface& s = surfaces[i];
    const bool is_sensor = i == sensor;
    ray = intersect_surface(ray, s, vertex_z_[i], options.clip && !is_sensor, stats);
    if (!ray.alive || is_sensor) break;
    switch (s.kind) {
      case SurfaceKind::Aperture:
        break;
      case SurfaceKind::Paraxial:
        ray = paraxial_bend(ray, s.paraxial_focal);
        break;
      case SurfaceKind::Sphere: {
        const double n1 = index_before(i);
        const double n2 = index_after_[i];
        if (n1 != n2) ray = refract(ray, surface_normal(s, vertex_z_[i], ray.position), n1, n2, stats);
        break;
      }
    }
  }
  return ray;
}

Ray launch_ray(const PreparedLens& lens, const ObjectPoint& object, const Vec2& launch) {
  const double theta = object.field_angle_deg * kDegToRad;
  const double phi = object.azimuth_deg * kDegToRad;
  Ray ray;
  ray.wavelength_nm = lens.wavelength_nm();
  const Vec3 target(launch.x(), launch.y(), 0.0);
  if (object.at_infinity()) {
    const Vec3 dir(std::sin(theta) * std::sin(phi), std::sin(theta) * std::cos(phi), std::cos(theta));
    const double z_start = -(lens.lens().surfaces.front().semi_diameter + 1.0);
    ray.direction = dir;
    ray.position = target + (z_start / dir.z()) * dir;
  } else {
    const double d_mm = object.depth_m * 1000.0;
    const double h = d_mm * std::tan(theta);
    const Vec3 p(-h * std::sin(phi), -h * std::cos(phi), -d_mm);
    ray.position = p;
    ray.direction = (target - p).normalized();
  }
  return ray;
}

AimResult aim_ray(const PreparedLens& lens, const ObjectPoint& object, const Vec2& pupil_uv,
                  std::optional<Vec2> launch_guess, const Eigen::Matrix2d* chord_jacobian) {
  const auto& rx = lens.lens();
  const std::size_t stop = rx.stop_index;
  const Vec2 target = pupil_uv * rx.surfaces[stop].semi_diameter;
  TraceOptions to_stop;
  to_stop.clip = false;
  to_stop.last_surface = stop;

  auto stop_hit = [&](const Vec2& launch) -> std::optional<Vec2> {
    const Ray r = lens.trace(launch_ray(lens, object, launch), to_stop);
    if (!r.alive) return std::nullopt;
    return Vec2(r.position.x(), r.position.y());
  };
  auto jacobian_at = [&](const Vec2& launch, const Vec2& base) -> std::optional<Eigen::Matrix2d> {
    constexpr double h = 1e-6;
    const auto fx = stop_hit(launch + Vec2(h, 0.0));
    const auto fy = stop_hit(launch + Vec2(0.0, h));
    if (!fx || !fy) return std::nullopt;
    Eigen::Matrix2d j;
    j.col(0) = (*fx - base) / h;
    j.col(1) = (*fy - base) / h;
    return j;
  };

  AimResult result;
  const Vec2 start = launch_guess.value_or(target);
  auto solve = [&](const Eigen::Matrix2d* fixed) {
    Vec2 launch = start;
    result.iterations = 0;
    result.converged = false;
    std::optional<Eigen::PartialPivLU<Eigen::Matrix2d>> fixed_lu;
    if (fixed) fixed_lu.emplace(*fixed);
    for (int iter = 0; iter <= kMaxAimIterations; ++iter) {
      const auto hit = stop_hit(launch);
      if (!hit) break;
      const Vec2 err = *hit - target;
      result.stop_hit = *hit;
      if (err.norm() < kAimTolerance) {
        result.converged = true;
        break;
      }
      if (iter == kMaxAimIterations) break;
      if (fixed) {
        result.jacobian = *fixed;
        launch -= fixed_lu->solve(err);
      } else {
        const auto j = jacobian_at(launch, *hit);
        if (!j || std::abs(j->determinant()) < 1e-14) break;
        result.jacobian = *j;
        launch -= j->partialPivLu().solve(err);
      }
      ++result.iterations;
    }
    result.launch = launch;
  };
  if (chord_jacobian && std::abs(chord_jacobian->determinant()) > 1e-14) solve(chord_jacobian);
  if (!result.converged) solve(nullptr);
  result.ray = launch_ray(lens, object, result.launch);
  if (!result.converged) result.ray.kill(RayFate::Missed);
  return result;
}

AimResult aim_ray(const LensPrescription& lens, double field_angle_deg, const Vec2& pupil_uv,
                  double wavelength_nm) {
  const PreparedLens prepared(lens, wavelength_nm);
  ObjectPoint obj;
  obj.field_angle_deg = field_angle_deg;
  AimResult r = aim_ray(prepared, obj, pupil_uv);
  // The result's ray refers to `prepared`, which only lives here; the ray itself is self-contained.
  return r;
}

double chief_ray_image_height(const LensPrescription& lens, double field_angle_deg,
                              double wavelength_nm) {
  const PreparedLens prepared(lens, wavelength_nm);
  ObjectPoint obj;
  obj.field_angle_deg = field_angle_deg;
  const AimResult chief = aim_ray(prepared, obj, Vec2::Zero());
  if (!chief.converged) {
    throw TraceError("chief ray aiming failed at field " + std::to_string(field_angle_deg) + " deg");
  }
  TraceOptions opt;
  opt.clip = false;
  const Ray r = prepared.trace(chief.ray, opt);
  if (!r.alive) {
    throw TraceError("chief ray lost at field " + std::to_string(field_angle_deg) + " deg");
  }
  return r.position.y();
}

double field_angle_for_image_height(const LensPrescription& lens, double image_height_mm,
                                    double wavelength_nm) {
  if (image_height_mm == 0.0) return 0.0;
  constexpr double probe = 0.01;  // deg
  const double slope0 = chief_ray_image_height(lens, probe, wavelength_nm) / std::tan(probe * kDegToRad);
  if (!(std::abs(slope0) > 0.0)) throw TraceError("lens has no imaging power");
  double theta = std::atan(image_height_mm / slope0) / kDegToRad;
  for (int iter = 0; iter < 60; ++iter) {
    const double h = chief_ray_image_height(lens, theta, wavelength_nm);
    const double err = h - image_height_mm;
    if (std::abs(err) < 1e-9) return theta;
    constexpr double dtheta = 1e-5;
    const double deriv = (chief_ray_image_height(lens, theta + dtheta, wavelength_nm) - h) / dtheta;
    if (!(std::abs(deriv) > 0.0)) break;
    theta = std::clamp(theta - err / deriv, -89.0, 89.0);
  }
  throw TraceError("no field angle reaches image height " + std::to_string(image_height_mm) + " mm");
}

double max_field_angle(const LensPrescription& lens) {
  return field_angle_for_image_height(lens, lens.max_image_height());
}

}  // namespace lensforge
