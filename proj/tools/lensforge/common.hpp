#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lensforge/field.hpp"
#include "lensforge/lens.hpp"
#include "lensforge/psflib.hpp"

namespace lensforge::cli {

using nlohmann::json;

struct GlobalOptions {
  std::string preset = "desk";
  int workers = 0;
  std::string log_level;
};

/// Grid flags left unset keep the preset value.
struct GridOverrides {
  std::optional<int> n_h, n_w, m, k, n_fov, pupil, depth_planes;

  void add_to(CLI::App& cmd);
  PsfMapGrid apply(const std::string& preset) const;
};

PsfMapGrid preset_grid(const std::string& preset);
FieldConfig preset_field(const std::string& preset, int lens_count);
TrainConfig preset_train(const std::string& preset);

/// A path to a prescription file, or the id of a bundled lens.
LensPrescription resolve_lens(const std::string& spec);

/// Metres, or "inf".
double parse_depth(const std::string& text);

json grid_json(const PsfMapGrid& grid);

/// Records a run: the canonical configuration, its hash, and every output file.
class Manifest {
 public:
  Manifest(std::string command, json config);
  void add_output(const std::filesystem::path& path, json extra = json::object());
  void write(const std::filesystem::path& path) const;
  std::string config_hash() const;

 private:
  std::string command_;
  json config_;
  json outputs_ = json::array();
};

void ensure_parent_dir(const std::filesystem::path& path);

void register_trace(CLI::App& app, const GlobalOptions& global);
void register_build_psflib(CLI::App& app, const GlobalOptions& global);
void register_simulate(CLI::App& app, const GlobalOptions& global);
void register_fit_field(CLI::App& app, const GlobalOptions& global);
void register_render(CLI::App& app, const GlobalOptions& global);
void register_serve(CLI::App& app, const GlobalOptions& global);

}  // namespace lensforge::cli
