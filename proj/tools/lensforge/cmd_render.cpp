#include <csignal>

#include <spdlog/spdlog.h>

#include "lensforge/binary_io.hpp"
#include "lensforge/common.hpp"
#include "lensforge/dof.hpp"
#include "lensforge/error.hpp"
#include "lensforge/service.hpp"

namespace lensforge::cli {
namespace {

AssetRegistry load_assets(const std::string& dir, const std::vector<std::string>& psflibs,
                          const std::vector<std::string>& models, const PsfMapGrid& grid) {
  AssetRegistry reg;
  if (!dir.empty()) {
    if (!std::filesystem::is_directory(dir)) throw ValidationError("asset directory " + dir + " does not exist");
    reg = AssetRegistry::load_dir(dir, grid);
  }
  for (const auto& p : psflibs) {
    auto lib = std::make_shared<const PsfLibrary>(load_psflib(p));
    LensAsset a;
    a.id = lib->lens_id();
    a.n_h = lib->n_h();
    a.n_w = lib->n_w();
    a.m = lib->m();
    a.library = lib;
    reg.add(std::move(a));
  }
  for (const auto& p : models) {
    auto model = std::make_shared<const FieldModel>(load_field(p));
    for (int i = 0; i < static_cast<int>(model->lens_ids.size()); ++i) {
      LensAsset a;
      a.id = model->lens_ids[i];
      a.field = model;
      a.field_index = i;
      a.n_h = grid.n_h;
      a.n_w = grid.n_w;
      a.m = grid.m;
      reg.add(std::move(a));
    }
  }
  return reg;
}

// "lo:hi" in metres; hi may be "inf" or omitted.
SharpInterval parse_sharp(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ValidationError("--sharp expects lo:hi, got '" + text + "'");
  SharpInterval s;
  s.lo = parse_depth(text.substr(0, colon));
  const std::string hi = text.substr(colon + 1);
  s.hi = hi.empty() ? parse_depth("inf") : parse_depth(hi);
  s.validate();
  return s;
}

struct RenderArgs {
  std::string assets;
  std::vector<std::string> psflibs;
  std::vector<std::string> models;
  std::string image;
  std::string depth;
  double depth_scale_mm = 1.0;
  std::string lens;
  std::string sharp;
  std::string source = "library";
  std::string out = "dof.png";
  int bit_depth = 8;
};

void run_render(const RenderArgs& a, const GlobalOptions& g) {
  const AssetRegistry reg = load_assets(a.assets, a.psflibs, a.models, preset_grid(g.preset));
  if (reg.empty()) throw ValidationError("no lens assets given (use --assets, --psflib or --model)");
  RenderRequest req;
  req.image = read_png(a.image);
  req.depth = decode_depth(read_file_bytes(a.depth), a.depth_scale_mm);
  clamp_near_depths(req.depth);
  req.lens_id = a.lens.empty() ? reg.assets().front().id : a.lens;
  req.sharp = parse_sharp(a.sharp);
  req.source = parse_psf_source(a.source);
  RenderTiming timing;
  const RgbImage out = render_dof(req, reg, &timing);
  ensure_parent_dir(a.out);
  write_png(out, a.out, a.bit_depth);
  spdlog::info("rendered {} with {} ({}) in {:.1f} + {:.1f} ms", a.image, req.lens_id, a.source, timing.psf_ms,
               timing.convolve_ms);
  Manifest manifest("render-dof", {{"image", std::filesystem::path(a.image).filename().string()},
                                   {"depth", std::filesystem::path(a.depth).filename().string()},
                                   {"depth_scale_mm", a.depth_scale_mm},
                                   {"lens_id", req.lens_id},
                                   {"sharp", a.sharp},
                                   {"source", a.source},
                                   {"bit_depth", a.bit_depth},
                                   {"preset", g.preset}});
  manifest.add_output(a.out);
  manifest.write(a.out + ".manifest.json");
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8787;
  std::string assets = "assets";
  std::vector<std::string> psflibs;
  std::vector<std::string> models;
  std::string static_dir;
  std::size_t cache = 16;
};

DofService* g_service = nullptr;

void run_serve(const ServeArgs& a, const GlobalOptions& g) {
  const PsfMapGrid grid = preset_grid(g.preset);
  AssetRegistry reg = load_assets(std::filesystem::is_directory(a.assets) ? a.assets : std::string(), a.psflibs,
                                  a.models, grid);
  if (reg.empty()) spdlog::warn("no lens assets loaded; /api/lenses will answer 503");
  ServiceConfig cfg;
  cfg.host = a.host;
  cfg.port = a.port;
  cfg.static_dir = a.static_dir;
  cfg.cache_entries_per_session = a.cache;
  DofService service(std::move(reg), cfg);
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  spdlog::info("serving on http://{}:{}", a.host, a.port);
  std::fprintf(stderr, "lensforge: listening on http://%s:%d\n", a.host.c_str(), a.port);
  const bool ok = service.listen();
  g_service = nullptr;
  if (!ok) throw Error("cannot listen on " + a.host + ":" + std::to_string(a.port));
}

}  // namespace

void register_render(CLI::App& app, const GlobalOptions& global) {
  auto args = std::make_shared<RenderArgs>();
  auto* cmd = app.add_subcommand("render-dof", "Render controllable depth of field for an all-in-focus image");
  cmd->add_option("--assets", args->assets, "Directory of .psfl, .olf and .lens files");
  cmd->add_option("--psflib", args->psflibs, "PSF library file (repeatable)")->check(CLI::ExistingFile);
  cmd->add_option("--model", args->models, "Neural lens field file (repeatable)")->check(CLI::ExistingFile);
  cmd->add_option("--image", args->image, "All-in-focus PNG")->required()->check(CLI::ExistingFile);
  cmd->add_option("--depth", args->depth, "Depth map: PFM (metres) or 16-bit PNG")->required()->check(CLI::ExistingFile);
  cmd->add_option("--depth-scale-mm", args->depth_scale_mm, "Millimetres per 16-bit PNG depth unit")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--lens", args->lens, "Lens id (default: first loaded)");
  cmd->add_option("--sharp", args->sharp, "Depth interval kept sharp, lo:hi in metres (hi may be inf)")->required();
  cmd->add_option("--source", args->source, "PSF source")
      ->check(CLI::IsMember({"library", "field"}))
      ->capture_default_str();
  cmd->add_option("-o,--out", args->out, "Output PNG")->capture_default_str();
  cmd->add_option("--bit-depth", args->bit_depth, "PNG bit depth")
      ->check(CLI::IsMember({8, 16}))
      ->capture_default_str();
  cmd->callback([args, &global] { run_render(*args, global); });
}

void register_serve(CLI::App& app, const GlobalOptions& global) {
  auto args = std::make_shared<ServeArgs>();
  auto* cmd = app.add_subcommand("serve", "Run the local depth-of-field HTTP service");
  cmd->add_option("--host", args->host, "Bind address")->capture_default_str();
  cmd->add_option("--port", args->port, "TCP port")->check(CLI::Range(1, 65535))->capture_default_str();
  cmd->add_option("--assets", args->assets, "Directory of .psfl, .olf and .lens files")->capture_default_str();
  cmd->add_option("--psflib", args->psflibs, "Extra PSF library file (repeatable)")->check(CLI::ExistingFile);
  cmd->add_option("--model", args->models, "Extra neural lens field file (repeatable)")->check(CLI::ExistingFile);
  cmd->add_option("--static", args->static_dir, "Directory served at / (web UI bundle)");
  cmd->add_option("--cache", args->cache, "Cached renders per session")->capture_default_str();
  cmd->callback([args, &global] { run_serve(*args, global); });
}

}  // namespace lensforge::cli
