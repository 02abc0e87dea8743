#include <algorithm>
#include <cmath>
#include <cstdio>

#include <spdlog/spdlog.h>

#include "lensforge/binary_io.hpp"
#include "lensforge/common.hpp"
#include "lensforge/error.hpp"
#include "lensforge/image.hpp"
#include "lensforge/psf.hpp"
#include "lensforge/sensor.hpp"

namespace lensforge::cli {
namespace {

struct TraceArgs {
  std::vector<std::string> lenses{"MOS-S1"};
  std::vector<double> fields;
  std::vector<double> thetas;
  std::vector<std::string> depths{"inf"};
  std::optional<int> k;
  std::optional<int> pupil;
  int scale = 8;
  std::string out = "psf";
};

// Each channel scaled to its own peak so faint tails stay visible.
RgbImage visualize(const PsfPatch& psf, int scale) {
  RgbImage img(psf.k * scale, psf.k * scale);
  for (int c = 0; c < 3; ++c) {
    const auto ch = psf.channel(c);
    const float peak = *std::max_element(ch.begin(), ch.end());
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        // Row 0 of the PSF is the most negative sensor y; flip so +y points up.
        const float v = psf.at(c, psf.k - 1 - y / scale, x / scale);
        img.at(c, y, x) = peak > 0.0f ? v / peak : 0.0f;
      }
    }
  }
  return img;
}

std::string tag(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void run(const TraceArgs& a, const GlobalOptions& g) {
  if (a.fields.empty() == a.thetas.empty()) throw ValidationError("give either --field or --theta values");
  const PsfMapGrid grid = preset_grid(g.preset);
  TraceSettings settings;
  settings.k = a.k.value_or(grid.k);
  settings.pupil_samples = a.pupil.value_or(grid.pupil_samples);
  if (settings.k % 2 == 0) throw ValidationError("--k must be odd");

  std::vector<double> depths;
  for (const auto& d : a.depths) depths.push_back(parse_depth(d));
  std::vector<LensPrescription> lenses;
  for (const auto& l : a.lenses) lenses.push_back(resolve_lens(l));
  const bool by_angle = !a.thetas.empty();
  const auto& angles = by_angle ? a.thetas : a.fields;
  for (const auto& lens : lenses) {
    for (double v : angles) {
      if (by_angle && !(v >= 0.0 && v <= lens.fov_full / 2.0)) {
        throw ValidationError("field angle " + tag(v) + " deg is outside [0, " + tag(lens.fov_full / 2.0) +
                              "] for " + lens.id);
      }
      if (!by_angle && !(v >= 0.0 && v <= 1.0)) throw ValidationError("normalized field must lie in [0, 1]");
    }
  }

  json config{{"lenses", a.lenses}, {"depths", a.depths}, {"k", settings.k}, {"pupil", settings.pupil_samples},
              {"sensor", {grid.height_px(), grid.width_px()}}, {"preset", g.preset}};
  config[by_angle ? "theta_deg" : "field"] = angles;
  Manifest manifest("trace-psf", config);

  const std::filesystem::path out(a.out);
  ensure_parent_dir(out);
  const bool single = lenses.size() * angles.size() * depths.size() == 1;
  const int tile = settings.k * a.scale;
  const int gap = 2;
  const int rows = static_cast<int>(lenses.size() * depths.size());
  const int cols = static_cast<int>(angles.size());
  RgbImage gallery(rows * (tile + gap) - gap, cols * (tile + gap) - gap, 1.0f);

  int row = 0;
  for (const auto& lens : lenses) {
    const SensorSpec sensor = SensorSpec::for_lens(lens, grid.height_px(), grid.width_px());
    for (double depth : depths) {
      for (int col = 0; col < cols; ++col) {
        const ObjectPoint obj = by_angle ? ObjectPoint{angles[col], 0.0, depth}
                                         : object_at_normalized_field(lens, angles[col], depth);
        TraceStats stats;
        const PsfPatch psf = trace_psf_rgb(lens, obj, SpectralResponse::default_rgb(), sensor, settings, &stats);
        spdlog::info("{} theta={:.4f} deg depth={} center=({:.5f}, {:.5f}) mm", lens.id, obj.field_angle_deg,
                     tag(depth), psf.center_mm.x(), psf.center_mm.y());
        const std::string stem = single ? out.string()
                                        : out.string() + "_" + lens.id + "_" + (by_angle ? "t" : "f") +
                                              tag(angles[col]) + "_d" + tag(depth);
        const RgbImage vis = visualize(psf, a.scale);
        write_png(vis, stem + ".png");
        ByteWriter w;
        w.f32s(psf.data);
        write_file_bytes(stem + ".f32", w.buffer());
        json meta{{"lens", lens.id},
                  {"theta_deg", obj.field_angle_deg},
                  {"depth_m", std::isinf(depth) ? json("inf") : json(depth)},
                  {"k", psf.k},
                  {"pitch_mm", psf.pitch_mm},
                  {"center_mm", {psf.center_mm.x(), psf.center_mm.y()}},
                  {"layout", "float32 little-endian [channel R,G,B][row +y][col +x], unit sum per channel"}};
        manifest.add_output(stem + ".png", meta);
        manifest.add_output(stem + ".f32", meta);
        gallery.paste(vis, row * (tile + gap), col * (tile + gap));
      }
      ++row;
    }
  }
  if (!single) {
    write_png(gallery, out.string() + "_gallery.png");
    manifest.add_output(out.string() + "_gallery.png",
                        {{"layout", "rows: lens x depth in argument order; columns: field values"}});
  }
  manifest.write(out.string() + ".manifest.json");
}

}  // namespace

void register_trace(CLI::App& app, const GlobalOptions& global) {
  auto args = std::make_shared<TraceArgs>();
  auto* cmd = app.add_subcommand("trace-psf", "Trace the RGB PSF of a lens at given fields and depths");
  cmd->add_option("--lens", args->lenses, "Bundled lens id or prescription file (repeatable)")
      ->capture_default_str();
  cmd->add_option("--field", args->fields, "Normalized field in [0, 1] along the image diagonal (repeatable)");
  cmd->add_option("--theta", args->thetas, "Object field angle in degrees, at most half the lens FoV (repeatable)");
  cmd->add_option("--depth", args->depths, "Object distance in metres or inf (repeatable)")->capture_default_str();
  cmd->add_option("--k", args->k, "PSF side in pixels (default from preset)");
  cmd->add_option("--pupil", args->pupil, "Pupil samples per side (default from preset)");
  cmd->add_option("--scale", args->scale, "Pixel magnification of the visualization")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  cmd->add_option("-o,--out", args->out, "Output path prefix")->capture_default_str();
  cmd->callback([args, &global] { run(*args, global); });
}

}  // namespace lensforge::cli
