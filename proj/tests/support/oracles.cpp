#include "oracles.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Geometry>

namespace lensforge::testing {

std::optional<Vec3> sphere_hit_quadratic(const Vec3& origin, const Vec3& dir, double vertex_z, double radius) {
  if (std::isinf(radius)) {
    if (dir.z() == 0.0) return std::nullopt;
    const double t = (vertex_z - origin.z()) / dir.z();
    return origin + t * dir;
  }
  const Vec3 c(0.0, 0.0, vertex_z + radius);
  const Vec3 oc = origin - c;
  const double b = oc.dot(dir);
  const double cc = oc.squaredNorm() - radius * radius;
  const double disc = b * b - cc;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  const Vec3 p1 = origin + (-b - s) * dir;
  const Vec3 p2 = origin + (-b + s) * dir;
  // The cap containing the vertex is the one nearer to it along z.
  return std::abs(p1.z() - vertex_z) < std::abs(p2.z() - vertex_z) ? p1 : p2;
}

double sphere_residual(const Vec3& p, double vertex_z, double radius) {
  if (std::isinf(radius)) return std::abs(p.z() - vertex_z);
  const Vec3 c(0.0, 0.0, vertex_z + radius);
  return std::abs((p - c).norm() - std::abs(radius));
}

Vec3 sphere_normal(const Vec3& p, double vertex_z, double radius) {
  if (std::isinf(radius)) return Vec3::UnitZ();
  const Vec3 c(0.0, 0.0, vertex_z + radius);
  return (p - c).normalized();
}

double snell_residual(const Vec3& d_in, const Vec3& d_out, const Vec3& normal, double n1, double n2) {
  return (n1 * d_in.cross(normal) - n2 * d_out.cross(normal)).norm();
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

RgbImage dense_convolution(const RgbImage& image, int m, int k, PixelOffset offset,
                           const std::function<std::span<const float>(int row, int col)>& kernel) {
  RgbImage out(image.height, image.width);
  const int h = k / 2;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto K = kernel((y + offset.y) / m, (x + offset.x) / m);
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int a = 0; a < k; ++a) {
          for (int b = 0; b < k; ++b) {
            const int sy = reflect101(y - a + h, image.height);
            const int sx = reflect101(x - b + h, image.width);
            acc += static_cast<double>(K[(c * k + a) * k + b]) * image.at(c, sy, sx);
          }
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

std::size_t nearest_plane_bruteforce(const std::vector<double>& depths, double d) {
  double far = 0.0;
  for (double p : depths) {
    if (std::isfinite(p) && p > far) far = p;
  }
  if (d > far) return depths.size() - 1;
  std::size_t best = 0;
  for (std::size_t i = 1; i < depths.size(); ++i) {
    const double inv_i = std::isinf(depths[i]) ? 0.0 : 1.0 / depths[i];
    const double inv_b = std::isinf(depths[best]) ? 0.0 : 1.0 / depths[best];
    if (std::abs(inv_i - 1.0 / d) < std::abs(inv_b - 1.0 / d)) best = i;
  }
  return best;
}

RgbImage random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RgbImage img(h, w);
  for (auto& v : img.data) v = u(rng);
  return img;
}

DepthMap random_depth(int h, int w, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(1.0 / hi, 1.0 / lo);
  DepthMap d(h, w);
  for (auto& v : d.depth) v = static_cast<float>(1.0 / u(rng));
  return d;
}

PsfLibrary random_library(const std::string& id, int n_h, int n_w, int m, int k, std::vector<double> depths,
                          std::uint64_t seed) {
  PsfLibrary lib(id, n_h, n_w, m, k, std::move(depths));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t d = 0; d < lib.depth_count(); ++d) {
    for (int r = 0; r < n_h; ++r) {
      for (int c = 0; c < n_w; ++c) {
        PsfPatch p(k, 0.0);
        for (auto& v : p.data) v = u(rng);
        p.normalize();
        lib.set_patch(d, r, c, p);
      }
    }
  }
  return lib;
}

LensPrescription thin_lens(double focal_mm, double f_number, double focus_m) {
  const double v = 1.0 / (1.0 / focal_mm - 1.0 / (focus_m * 1000.0));
  std::ostringstream s;
  s.precision(17);
  s << "lens id=Thin focal_length_mm=" << focal_mm << " f_number=" << f_number << " fov_full_deg=10\n"
    << "surface kind=aperture radius_mm=Infinite thickness_mm=0 semi_diameter_mm=" << focal_mm / f_number / 2.0
    << "\n"
    << "surface kind=paraxial focal_mm=" << focal_mm << " thickness_mm=" << v
    << " semi_diameter_mm=" << focal_mm / f_number << "\n"
    << "sensor semi_diameter_mm=" << v * std::tan(5.0 * M_PI / 180.0) << "\n";
  return load_prescription(s.str());
}

PsfMapGrid tiny_grid() {
  PsfMapGrid g;
  g.n_h = 2;
  g.n_w = 3;
  g.m = 16;
  g.k = 7;
  g.n_fov = 4;
  g.pupil_samples = 16;
  g.depths = inverse_uniform_depths(2);
  return g;
}

TempDir::TempDir() {
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("lensforge-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace lensforge::testing
