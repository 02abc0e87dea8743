#pragma once

#include <optional>
#include <string_view>

#include "lensforge/lens.hpp"

namespace lensforge {

inline constexpr double kLambdaD = 587.56;  // nm
inline constexpr double kLambdaF = 486.13;  // nm
inline constexpr double kLambdaC = 656.27;  // nm

/// Two-term Cauchy coefficients n(lambda) = a + b / lambda^2, lambda in micrometres.
struct CauchyCoefficients {
  double a;
  double b;
};

CauchyCoefficients cauchy_from_abbe(double nd, double vd);

/// Index of `material` at `wavelength_nm`, valid for 400..700 nm.
double refractive_index(const Material& material, double wavelength_nm);

/// Built-in catalog of the named glasses used by the bundled prescriptions.
std::optional<Material> find_glass(std::string_view name);

}  // namespace lensforge
