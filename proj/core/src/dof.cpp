#include "lensforge/dof.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <spdlog/spdlog.h>

#include "lensforge/error.hpp"

namespace lensforge {

void SharpInterval::validate() const {
  if (!(lo > 0.0)) throw ValidationError("sharp interval lower bound must be positive");
  if (!(lo <= hi)) throw ValidationError("sharp interval lower bound exceeds upper bound");
}

SharpInterval select_interval_from_point(const DepthMap& depth, int y, int x, double half_width) {
  if (y < 0 || x < 0 || y >= depth.height || x >= depth.width) throw ValidationError("pixel outside the depth map");
  if (!(half_width >= 0.0)) throw ValidationError("half width must be non-negative");
  if (!depth.is_valid(y, x)) throw ValidationError("no depth at the selected pixel; pick another point");
  const double d = depth.at(y, x);
  SharpInterval s;
  s.lo = std::max(d - half_width, std::nextafter(0.0, 1.0));
  s.hi = d + half_width;
  return s;
}

std::vector<PsfPatch> make_mask(std::vector<PsfPatch> psf_map, const DepthMap& depth_avg,
                                const SharpInterval& interval) {
  if (psf_map.size() != depth_avg.size()) throw ValidationError("PSF map and depth cells differ in size");
  for (std::size_t i = 0; i < psf_map.size(); ++i) {
    if (interval.contains(depth_avg.depth[i])) psf_map[i] = PsfPatch::delta(psf_map[i].k);
  }
  return psf_map;
}

void clamp_near_depths(DepthMap& depth, double d_min) {
  const float lo = static_cast<float>(d_min);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (depth.valid[i]) depth.depth[i] = std::max(depth.depth[i], lo);
  }
}

const char* to_string(PsfSource source) noexcept { return source == PsfSource::Library ? "library" : "field"; }

PsfSource parse_psf_source(std::string_view text) {
  if (text == "library") return PsfSource::Library;
  if (text == "field") return PsfSource::Field;
  throw ValidationError("unknown PSF source '" + std::string(text) + "' (expected library or field)");
}

void AssetRegistry::add(LensAsset asset) {
  for (auto& a : assets_) {
    if (a.id == asset.id) {
      if (asset.library) a.library = asset.library;
      if (asset.field) {
        a.field = asset.field;
        a.field_index = asset.field_index;
      }
      if (a.m == 0) {
        a.n_h = asset.n_h;
        a.n_w = asset.n_w;
        a.m = asset.m;
      }
      return;
    }
  }
  assets_.push_back(std::move(asset));
}

const LensAsset* AssetRegistry::find(std::string_view id) const {
  for (const auto& a : assets_) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

AssetRegistry AssetRegistry::load_dir(const std::filesystem::path& dir, const PsfMapGrid& grid) {
  AssetRegistry reg;
  if (!std::filesystem::is_directory(dir)) return reg;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<LensPrescription> prescriptions;
  for (const auto& f : files) {
    if (f.extension() == ".lens") prescriptions.push_back(load_prescription_file(f));
  }
  auto facts = [&](LensAsset& a) {
    for (const auto& p : prescriptions) {
      if (p.id == a.id) {
        a.focal_length = p.focal_length;
        a.f_number = p.f_number;
        a.fov_full = p.fov_full;
        return;
      }
    }
    try {
      const auto p = bundled_lens(a.id);
      a.focal_length = p.focal_length;
      a.f_number = p.f_number;
      a.fov_full = p.fov_full;
    } catch (const Error&) {
      spdlog::warn("no prescription found for lens '{}'; lens facts left empty", a.id);
    }
  };

  for (const auto& f : files) {
    if (f.extension() != ".psfl") continue;
    auto lib = std::make_shared<const PsfLibrary>(load_psflib(f));
    LensAsset a;
    a.id = lib->lens_id();
    a.n_h = lib->n_h();
    a.n_w = lib->n_w();
    a.m = lib->m();
    a.library = lib;
    facts(a);
    reg.add(std::move(a));
  }
  for (const auto& f : files) {
    if (f.extension() != ".olf") continue;
    auto model = std::make_shared<const FieldModel>(load_field(f));
    for (int i = 0; i < static_cast<int>(model->lens_ids.size()); ++i) {
      LensAsset a;
      a.id = model->lens_ids[i];
      a.field = model;
      a.field_index = i;
      a.n_h = grid.n_h;
      a.n_w = grid.n_w;
      a.m = grid.m;
      facts(a);
      reg.add(std::move(a));
    }
  }
  return reg;
}

PixelOffset centered_offset(int height, int width, int n_h, int n_w, int m) {
  const int rows = (height + m - 1) / m;
  const int cols = (width + m - 1) / m;
  if (rows > n_h || cols > n_w) {
    throw ValidationError("image of " + std::to_string(height) + "x" + std::to_string(width) +
                          " does not fit the lens grid of " + std::to_string(n_h * m) + "x" +
                          std::to_string(n_w * m));
  }
  return {(n_h - rows) / 2 * m, (n_w - cols) / 2 * m};
}

RgbImage render_dof(const RenderRequest& req, const LensAsset& asset, RenderTiming* timing) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  req.sharp.validate();
  if (!asset.has(req.source)) {
    throw ValidationError("lens '" + asset.id + "' has no " + to_string(req.source) + " PSF source");
  }
  if (req.image.height != req.depth.height || req.image.width != req.depth.width) {
    throw ValidationError("image and depth map dimensions differ");
  }
  const int m = asset.m;
  const PixelOffset off = req.offset ? *req.offset : centered_offset(req.image.height, req.image.width, asset.n_h,
                                                                   asset.n_w, m);
  if (off.y < 0 || off.x < 0 || off.y + req.image.height > asset.n_h * m || off.x + req.image.width > asset.n_w * m) {
    throw ValidationError("image window does not fit the lens grid");
  }
  const CellRange cells = covered_cells(req.image.height, req.image.width, m, off);
  const DepthMap depth_avg = avg_depth_pool(req.depth, m, off);

  std::vector<PsfPatch> map;
  int k = 0;
  if (req.source == PsfSource::Library) {
    const PsfLibrary& lib = *asset.library;
    k = lib.k();
    map.reserve(depth_avg.size());
    for (int r = 0; r < cells.rows; ++r) {
      for (int c = 0; c < cells.cols; ++c) {
        map.push_back(query_psf(lib, cells.row0 + r, cells.col0 + c, depth_avg.at(r, c)));
      }
    }
  } else {
    k = asset.field->config().k;
    map = field_psf_map(*asset.field, depth_avg, asset.field_index, asset.n_h, asset.n_w, cells.row0, cells.col0);
  }
  map = make_mask(std::move(map), depth_avg, req.sharp);
  const auto t1 = clock::now();

  RgbImage out = convolve_patchwise(
      req.image, m, k,
      [&](int row, int col) -> std::span<const float> {
        const auto& p = map[static_cast<std::size_t>(row - cells.row0) * cells.cols + (col - cells.col0)];
        return p.data;
      },
      off);
  out.clamp01();
  if (timing) {
    timing->psf_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    timing->convolve_ms = std::chrono::duration<double, std::milli>(clock::now() - t1).count();
  }
  return out;
}

RgbImage render_dof(const RenderRequest& req, const AssetRegistry& registry, RenderTiming* timing) {
  const LensAsset* asset = registry.find(req.lens_id);
  if (!asset) throw ValidationError("unknown lens id '" + req.lens_id + "'");
  return render_dof(req, *asset, timing);
}

}  // namespace lensforge
