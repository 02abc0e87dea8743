#include "lensforge/materials.hpp"

#include <array>

namespace lensforge {
namespace {

struct GlassEntry {
  std::string_view name;
  double nd;
  double vd;
};

// Catalog d-line values.
constexpr std::array<GlassEntry, 4> kGlasses{{
    {"H-K9L", 1.51680, 64.20},
    {"LAF2", 1.74400, 44.72},
    {"PSK3", 1.55232, 63.46},
    {"SF1", 1.71736, 29.51},
}};

double inv_sq_um(double wavelength_nm) {
  const double um = wavelength_nm * 1e-3;
  return 1.0 / (um * um);
}

}  // namespace

CauchyCoefficients cauchy_from_abbe(double nd, double vd) {
  // n_F - n_C = b (1/lF^2 - 1/lC^2) = (nd - 1) / vd
  const double b = (nd - 1.0) / (vd * (inv_sq_um(kLambdaF) - inv_sq_um(kLambdaC)));
  const double a = nd - b * inv_sq_um(kLambdaD);
  return {a, b};
}

double refractive_index(const Material& material, double wavelength_nm) {
  // Anchored form of a + b / lambda^2; exact at the d line.
  const auto coeffs = cauchy_from_abbe(material.nd, material.vd);
  return material.nd + coeffs.b * (inv_sq_um(wavelength_nm) - inv_sq_um(kLambdaD));
}

std::optional<Material> find_glass(std::string_view name) {
  for (const auto& g : kGlasses) {
    if (g.name == name) return Material{std::string(g.name), g.nd, g.vd};
  }
  return std::nullopt;
}

}  // namespace lensforge
