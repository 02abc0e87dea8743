#include "lensforge/common.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "lensforge/binary_io.hpp"
#include "lensforge/error.hpp"

namespace lensforge::cli {

void GridOverrides::add_to(CLI::App& cmd) {
  cmd.add_option("--nh", n_h, "Patch rows (N_h)")->check(CLI::PositiveNumber);
  cmd.add_option("--nw", n_w, "Patch columns (N_w)")->check(CLI::PositiveNumber);
  cmd.add_option("--patch", m, "Patch side in pixels (m)")->check(CLI::PositiveNumber);
  cmd.add_option("--k", k, "PSF side in pixels (odd)")->check(CLI::PositiveNumber);
  cmd.add_option("--nfov", n_fov, "Meridional field samples (N_fov)")->check(CLI::Range(2, 4096));
  cmd.add_option("--pupil", pupil, "Pupil samples per side")->check(CLI::PositiveNumber);
  cmd.add_option("--depth-planes", depth_planes, "Finite depth planes (an infinity plane is added)")
      ->check(CLI::PositiveNumber);
}

PsfMapGrid GridOverrides::apply(const std::string& preset) const {
  PsfMapGrid g = preset_grid(preset);
  if (n_h) g.n_h = *n_h;
  if (n_w) g.n_w = *n_w;
  if (m) g.m = *m;
  if (k) g.k = *k;
  if (n_fov) g.n_fov = *n_fov;
  if (pupil) g.pupil_samples = *pupil;
  if (depth_planes) g.depths = inverse_uniform_depths(static_cast<std::size_t>(*depth_planes));
  g.validate();
  return g;
}

PsfMapGrid preset_grid(const std::string& preset) {
  if (preset == "desk") return PsfMapGrid::desk();
  if (preset == "full") return PsfMapGrid::full();
  throw ValidationError("unknown preset '" + preset + "' (expected desk or full)");
}

FieldConfig preset_field(const std::string& preset, int lens_count) {
  if (preset == "desk") return FieldConfig::desk(lens_count);
  if (preset == "full") return FieldConfig::full(lens_count);
  throw ValidationError("unknown preset '" + preset + "' (expected desk or full)");
}

TrainConfig preset_train(const std::string& preset) {
  if (preset == "desk") return TrainConfig::desk();
  if (preset == "full") return TrainConfig::full();
  throw ValidationError("unknown preset '" + preset + "' (expected desk or full)");
}

LensPrescription resolve_lens(const std::string& spec) {
  const std::filesystem::path p(spec);
  if (p.extension() == ".lens" || std::filesystem::is_regular_file(p)) return load_prescription_file(p);
  try {
    return bundled_lens(spec);
  } catch (const Error&) {
    std::string ids;
    for (const auto& l : bundled_lenses()) ids += (ids.empty() ? "" : ", ") + l.id;
    throw ValidationError("unknown lens '" + spec + "' (not a file; bundled lenses: " + ids + ")");
  }
}

double parse_depth(const std::string& text) {
  if (text == "inf" || text == "Inf" || text == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(v > 0.0)) throw ValidationError("depth '" + text + "' is not a positive number or inf");
  return v;
}

json grid_json(const PsfMapGrid& grid) {
  json depths = json::array();
  for (double d : grid.depths) {
    if (std::isinf(d)) {
      depths.push_back("inf");
    } else {
      depths.push_back(d);
    }
  }
  return {{"n_h", grid.n_h},     {"n_w", grid.n_w}, {"m", grid.m}, {"k", grid.k}, {"n_fov", grid.n_fov},
          {"pupil", grid.pupil_samples}, {"depths", depths}};
}

Manifest::Manifest(std::string command, json config) : command_(std::move(command)), config_(std::move(config)) {}

std::string Manifest::config_hash() const {
  // FNV-1a over the canonical (sorted-key) dump.
  const std::string text = config_.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void Manifest::add_output(const std::filesystem::path& path, json extra) {
  const auto bytes = read_file_bytes(path);
  char crc[9];
  std::snprintf(crc, sizeof crc, "%08x", crc32(bytes));
  extra["path"] = path.filename().string();
  extra["bytes"] = bytes.size();
  extra["crc32"] = crc;
  outputs_.push_back(std::move(extra));
}

void Manifest::write(const std::filesystem::path& path) const {
  json m{{"tool", "lensforge"},
         {"command", command_},
         {"config", config_},
         {"config_hash", config_hash()},
         {"outputs", outputs_}};
  const std::string text = m.dump(2) + "\n";
  ensure_parent_dir(path);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_parent_dir(const std::filesystem::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

}  // namespace lensforge::cli
