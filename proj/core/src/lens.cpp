#include "lensforge/lens.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "lensforge/error.hpp"
#include "lensforge/materials.hpp"

namespace lensforge {
namespace {

using Fields = std::map<std::string, std::string, std::less<>>;

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_number(std::size_t line, std::string_view key, std::string_view text) {
  if (text == "Infinite" || text == "inf" || text == "Inf") {
    return std::numeric_limits<double>::infinity();
  }
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(line, "key '" + std::string(key) + "' expects a number, got '" +
                               std::string(text) + "'");
  }
  return value;
}

std::string format_number(double v) {
  if (std::isinf(v)) return "Infinite";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

class Record {
 public:
  Record(std::size_t line, Fields fields) : line_(line), fields_(std::move(fields)) {}

  bool has(std::string_view key) const { return fields_.find(key) != fields_.end(); }

  const std::string& text(std::string_view key) {
    auto it = fields_.find(key);
    if (it == fields_.end()) throw ParseError(line_, "missing key '" + std::string(key) + "'");
    used_.push_back(std::string(key));
    return it->second;
  }

  double number(std::string_view key) { return parse_number(line_, key, text(key)); }

  std::optional<double> optional_number(std::string_view key) {
    if (!has(key)) return std::nullopt;
    return number(key);
  }

  void reject_unused() const {
    for (const auto& [k, v] : fields_) {
      if (std::find(used_.begin(), used_.end(), k) == used_.end()) {
        throw ParseError(line_, "unknown key '" + k + "'");
      }
    }
  }

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
  Fields fields_;
  std::vector<std::string> used_;
};

Material parse_material(std::size_t line, std::string_view text) {
  if (auto glass = find_glass(text)) return *glass;
  const auto comma = text.find(',');
  if (comma == std::string_view::npos) {
    throw ParseError(line, "unknown glass '" + std::string(text) + "'");
  }
  Material m;
  m.nd = parse_number(line, "material", text.substr(0, comma));
  m.vd = parse_number(line, "material", text.substr(comma + 1));
  return m;
}

std::string surface_label(std::size_t index) {
  return "surface " + std::to_string(index + 1);
}

}  // namespace

double Surface::radius() const noexcept {
  return curvature == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / curvature;
}

double LensPrescription::vertex_z(std::size_t i) const {
  double z = 0.0;
  for (std::size_t s = 0; s < i && s < surfaces.size(); ++s) z += surfaces[s].thickness;
  return z;
}

double LensPrescription::max_image_height() const {
  return image_height_override.value_or(surfaces.back().semi_diameter);
}

void validate(const LensPrescription& lens) {
  if (lens.id.empty()) throw ValidationError("lens id is empty");
  if (lens.surfaces.size() < 2) throw ValidationError("prescription needs at least one surface and a sensor");
  std::size_t stops = 0;
  for (std::size_t i = 0; i < lens.surfaces.size(); ++i) {
    const auto& s = lens.surfaces[i];
    const bool is_sensor = i + 1 == lens.surfaces.size();
    const std::string label = is_sensor ? std::string("sensor") : surface_label(i);
    if (!(s.semi_diameter > 0.0) || !std::isfinite(s.semi_diameter)) {
      throw ValidationError(label + ": semi-diameter must be positive");
    }
    if (!(s.thickness >= 0.0) || !std::isfinite(s.thickness)) {
      throw ValidationError(label + ": thickness must be non-negative");
    }
    if (s.conic != 0.0) throw ValidationError(label + ": conic surfaces are not supported");
    if (!std::isfinite(s.curvature)) throw ValidationError(label + ": radius must be non-zero");
    if (s.material) {
      if (is_sensor) throw ValidationError("sensor: must not carry a material");
      if (!(s.material->nd > 1.0)) throw ValidationError(label + ": n_d must exceed 1");
      if (!(s.material->vd > 0.0)) throw ValidationError(label + ": V_d must be positive");
    }
    if (s.kind == SurfaceKind::Aperture) {
      ++stops;
      if (s.curvature != 0.0) throw ValidationError(label + ": aperture stop must be flat");
    }
    if (s.kind == SurfaceKind::Paraxial && !(std::abs(s.paraxial_focal) > 0.0)) {
      throw ValidationError(label + ": paraxial focal length must be non-zero");
    }
  }
  if (stops != 1) {
    throw ValidationError("expected exactly one aperture stop, found " + std::to_string(stops));
  }
  if (lens.surfaces[lens.stop_index].kind != SurfaceKind::Aperture) {
    throw ValidationError("stop index does not point at the aperture surface");
  }
  if (lens.image_height_override && !(*lens.image_height_override > 0.0)) {
    throw ValidationError("max image height must be positive");
  }
}

LensPrescription load_prescription(std::string_view text) {
  LensPrescription lens;
  bool have_lens = false;
  bool have_sensor = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tokens = split_ws(line);
    if (tokens.empty()) {
      if (eol == text.size()) break;
      continue;
    }
    Fields fields;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto eq = tokens[t].find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw ParseError(line_no, "expected key=value, got '" + std::string(tokens[t]) + "'");
      }
      auto [it, inserted] = fields.emplace(std::string(tokens[t].substr(0, eq)),
                                           std::string(tokens[t].substr(eq + 1)));
      if (!inserted) throw ParseError(line_no, "duplicate key '" + it->first + "'");
    }
    Record rec(line_no, std::move(fields));
    if (have_sensor) throw ParseError(line_no, "records after the sensor line");

    const std::string_view kind = tokens[0];
    if (kind == "lens") {
      if (have_lens) throw ParseError(line_no, "duplicate lens record");
      lens.id = rec.text("id");
      lens.focal_length = rec.number("focal_length_mm");
      lens.f_number = rec.number("f_number");
      lens.fov_full = rec.number("fov_full_deg");
      lens.image_height_override = rec.optional_number("max_image_height_mm");
      have_lens = true;
    } else if (kind == "surface") {
      Surface s;
      const std::string& k = rec.text("kind");
      if (k == "aperture") {
        s.kind = SurfaceKind::Aperture;
      } else if (k == "sphere") {
        s.kind = SurfaceKind::Sphere;
      } else if (k == "paraxial") {
        s.kind = SurfaceKind::Paraxial;
      } else {
        throw ParseError(line_no, "unknown surface kind '" + k + "'");
      }
      if (s.kind == SurfaceKind::Paraxial) {
        s.paraxial_focal = rec.number("focal_mm");
      } else {
        const double r = rec.number("radius_mm");
        if (r == 0.0) throw ParseError(line_no, "radius_mm must be non-zero (use Infinite)");
        s.curvature = std::isinf(r) ? 0.0 : 1.0 / r;
      }
      s.thickness = rec.number("thickness_mm");
      s.semi_diameter = rec.number("semi_diameter_mm");
      s.conic = rec.optional_number("conic").value_or(0.0);
      if (rec.has("material")) s.material = parse_material(line_no, rec.text("material"));
      lens.surfaces.push_back(std::move(s));
    } else if (kind == "sensor") {
      Surface s;
      s.kind = SurfaceKind::Sphere;
      s.semi_diameter = rec.number("semi_diameter_mm");
      s.conic = rec.optional_number("conic").value_or(0.0);
      lens.surfaces.push_back(std::move(s));
      have_sensor = true;
    } else {
      throw ParseError(line_no, "unknown record '" + std::string(kind) + "'");
    }
    rec.reject_unused();
    if (eol == text.size()) break;
  }
  if (!have_lens) throw ParseError(line_no, "missing lens record");
  if (!have_sensor) throw ParseError(line_no, "missing sensor record");
  const auto stop = std::find_if(lens.surfaces.begin(), lens.surfaces.end(), [](const Surface& s) {
    return s.kind == SurfaceKind::Aperture;
  });
  lens.stop_index = stop == lens.surfaces.end() ? 0 : static_cast<std::size_t>(stop - lens.surfaces.begin());
  validate(lens);
  return lens;
}

LensPrescription load_prescription_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open prescription " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_prescription(buf.str());
}

std::string serialize_prescription(const LensPrescription& lens) {
  std::ostringstream out;
  out << "lens id=" << lens.id << " focal_length_mm=" << format_number(lens.focal_length)
      << " f_number=" << format_number(lens.f_number)
      << " fov_full_deg=" << format_number(lens.fov_full);
  if (lens.image_height_override) {
    out << " max_image_height_mm=" << format_number(*lens.image_height_override);
  }
  out << '\n';
  for (std::size_t i = 0; i + 1 < lens.surfaces.size(); ++i) {
    const auto& s = lens.surfaces[i];
    out << "surface kind=";
    switch (s.kind) {
      case SurfaceKind::Aperture: out << "aperture"; break;
      case SurfaceKind::Sphere: out << "sphere"; break;
      case SurfaceKind::Paraxial: out << "paraxial"; break;
    }
    if (s.kind == SurfaceKind::Paraxial) {
      out << " focal_mm=" << format_number(s.paraxial_focal);
    } else {
      out << " radius_mm=" << format_number(s.radius());
    }
    out << " thickness_mm=" << format_number(s.thickness);
    if (s.material) {
      if (!s.material->name.empty()) {
        out << " material=" << s.material->name;
      } else {
        out << " material=" << format_number(s.material->nd) << ','
            << format_number(s.material->vd);
      }
    }
    out << " semi_diameter_mm=" << format_number(s.semi_diameter)
        << " conic=" << format_number(s.conic) << '\n';
  }
  out << "sensor semi_diameter_mm=" << format_number(lens.sensor().semi_diameter)
      << " conic=" << format_number(lens.sensor().conic) << '\n';
  return out.str();
}

LensPrescription perturb_prescription(const LensPrescription& lens, double fraction,
                                      std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ValidationError("perturbation fraction must lie in [0, 1)");
  }
  LensPrescription out = lens;
  if (fraction == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> factor(1.0 - fraction, 1.0 + fraction);
  for (std::size_t i = 0; i + 1 < out.surfaces.size(); ++i) {
    auto& s = out.surfaces[i];
    if (s.curvature != 0.0) s.curvature = 1.0 / (s.radius() * factor(rng));
    s.thickness *= factor(rng);
    if (s.material) {
      // Keep the medium optically denser than air even for large fractions.
      s.material->nd = std::max(s.material->nd * factor(rng), 1.0 + 1e-6);
      s.material->name.clear();
    }
  }
  return out;
}

std::vector<LensPrescription> bundled_lenses() {
  std::vector<LensPrescription> out;
  for (const auto& src : bundled_lens_sources()) out.push_back(load_prescription(src.text));
  return out;
}

LensPrescription bundled_lens(std::string_view id) {
  for (auto& lens : bundled_lenses()) {
    if (lens.id == id) return lens;
  }
  throw ValidationError("unknown lens id '" + std::string(id) + "'");
}

}  // namespace lensforge
