#include <chrono>

#include <spdlog/spdlog.h>

#include "lensforge/binary_io.hpp"
#include "lensforge/common.hpp"
#include "lensforge/depth_sim.hpp"
#include "lensforge/error.hpp"
#include "lensforge/image.hpp"
#include "lensforge/sensor.hpp"

namespace lensforge::cli {
namespace {

struct BuildArgs {
  std::string lens = "MOS-S1";
  std::string out;
  GridOverrides grid;
  double perturb = 0.0;
  std::uint64_t seed = 0;
};

void run_build(const BuildArgs& a, const GlobalOptions& g) {
  const PsfMapGrid grid = a.grid.apply(g.preset);
  LensPrescription lens = resolve_lens(a.lens);
  if (a.perturb < 0.0 || a.perturb >= 1.0) throw ValidationError("--perturb must lie in [0, 1)");
  if (a.perturb > 0.0) lens = perturb_prescription(lens, a.perturb, a.seed);
  const std::filesystem::path out = a.out.empty() ? std::filesystem::path(lens.id + ".psfl") : std::filesystem::path(a.out);

  const auto t0 = std::chrono::steady_clock::now();
  BuildStats stats;
  const PsfLibrary lib = build_psflib(lens, grid, SpectralResponse::default_rgb(), &stats);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("{}: {} cells traced in {:.1f} s ({} field samples, {} fallbacks)", lens.id, lib.cell_count(), secs,
               stats.traced_fields, stats.fallback_fields);

  ensure_parent_dir(out);
  save_psflib(lib, out);
  Manifest manifest("build-psflib", {{"lens", a.lens},
                                     {"lens_id", lens.id},
                                     {"grid", grid_json(grid)},
                                     {"perturb", a.perturb},
                                     {"seed", a.seed},
                                     {"preset", g.preset}});
  manifest.add_output(out, {{"cells", lib.cell_count()}, {"fallback_fields", stats.fallback_fields}});
  manifest.write(out.string() + ".manifest.json");
}

struct SimulateArgs {
  std::string psflib;
  std::string pairs;
  std::string out_dir = "simulated";
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  bool center = false;
  int bit_depth = 8;
};

// Pair list: {"pairs": [{"image": "a.png", "depth": "a.pfm", "depth_scale_mm": 1.0}, ...]}, paths relative
// to the list file.
void run_simulate(const SimulateArgs& a, const GlobalOptions& g) {
  const PsfLibrary lib = load_psflib(a.psflib);
  const std::filesystem::path list_path(a.pairs);
  json list;
  try {
    const auto bytes = read_file_bytes(list_path);
    list = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ValidationError("pair list " + a.pairs + " is not valid JSON: " + e.what());
  }
  if (!list.contains("pairs") || !list["pairs"].is_array() || list["pairs"].empty()) {
    throw ValidationError("pair list must hold a non-empty \"pairs\" array");
  }
  const auto base = list_path.parent_path();
  const std::filesystem::path out_dir(a.out_dir);
  std::filesystem::create_directories(out_dir);

  Manifest manifest("simulate", {{"psflib", std::filesystem::path(a.psflib).filename().string()},
                                 {"lens_id", lib.lens_id()},
                                 {"pairs", list["pairs"]},
                                 {"noise_sigma", a.noise_sigma},
                                 {"seed", a.seed},
                                 {"center", a.center},
                                 {"bit_depth", a.bit_depth},
                                 {"preset", g.preset}});
  std::size_t index = 0;
  for (const auto& pair : list["pairs"]) {
    if (!pair.contains("image") || !pair.contains("depth")) {
      throw ValidationError("pair " + std::to_string(index) + " needs \"image\" and \"depth\"");
    }
    const std::filesystem::path image_path = base / pair["image"].get<std::string>();
    const std::filesystem::path depth_path = base / pair["depth"].get<std::string>();
    const RgbImage image = read_png(image_path);
    const double scale_mm = pair.value("depth_scale_mm", 1.0);
    const auto depth_bytes = read_file_bytes(depth_path);
    const DepthMap depth = decode_depth(depth_bytes, scale_mm);

    SimulationOptions opt;
    opt.noise_sigma = a.noise_sigma;
    opt.seed = a.seed + index;
    const int sensor_h = lib.n_h() * lib.m();
    const int sensor_w = lib.n_w() * lib.m();
    if (a.center) {
      opt.offset = {(sensor_h - image.height) / 2, (sensor_w - image.width) / 2};
    } else {
      opt.offset = embed_resolution(image.height, image.width, sensor_h, sensor_w, a.seed + index);
    }
    const RgbImage out = simulate_aberration(image, depth, lib, opt);
    const auto out_path = out_dir / (image_path.stem().string() + "_aberrated.png");
    write_png(out, out_path, a.bit_depth);
    manifest.add_output(out_path, {{"image", pair["image"]},
                                   {"depth", pair["depth"]},
                                   {"offset", {opt.offset.y, opt.offset.x}},
                                   {"seed", opt.seed}});
    spdlog::info("simulated {} at offset ({}, {})", image_path.string(), opt.offset.y, opt.offset.x);
    ++index;
  }
  manifest.write(out_dir / "manifest.json");
}

}  // namespace

void register_build_psflib(CLI::App& app, const GlobalOptions& global) {
  auto args = std::make_shared<BuildArgs>();
  auto* cmd = app.add_subcommand("build-psflib", "Trace a depth-swept 4D PSF library for one lens");
  cmd->add_option("--lens", args->lens, "Bundled lens id or prescription file")->capture_default_str();
  cmd->add_option("-o,--out", args->out, "Output .psfl file (default <lens id>.psfl)");
  args->grid.add_to(*cmd);
  cmd->add_option("--perturb", args->perturb, "Random relative perturbation of radii, thicknesses and indices")
      ->capture_default_str();
  cmd->add_option("--seed", args->seed, "Perturbation seed")->capture_default_str();
  cmd->callback([args, &global] { run_build(*args, global); });
}

void register_simulate(CLI::App& app, const GlobalOptions& global) {
  auto args = std::make_shared<SimulateArgs>();
  auto* cmd = app.add_subcommand("simulate", "Render depth-aware aberrated images from a PSF library");
  cmd->add_option("--psflib", args->psflib, "PSF library file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--pairs", args->pairs, "JSON list of image/depth pairs")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", args->out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--noise-sigma", args->noise_sigma, "Gaussian noise standard deviation")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--seed", args->seed, "Seed for placement and noise (pair i uses seed + i)")
      ->capture_default_str();
  cmd->add_flag("--center", args->center, "Center images on the sensor instead of placing them randomly");
  cmd->add_option("--bit-depth", args->bit_depth, "PNG bit depth")
      ->check(CLI::IsMember({8, 16}))
      ->capture_default_str();
  cmd->callback([args, &global] { run_simulate(*args, global); });
}

}  // namespace lensforge::cli
