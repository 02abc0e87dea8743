#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lensforge/depth_sim.hpp"
#include "lensforge/field.hpp"
#include "lensforge/image.hpp"
#include "lensforge/psflib.hpp"

namespace lensforge {

/// Closed depth interval [lo, hi] in metres kept sharp; hi may be +inf.
struct SharpInterval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double d) const noexcept { return d >= lo && d <= hi; }
  void validate() const;
};

/// Interval of half-width `half_width` around the depth at (y, x), clamped to positive depths.
SharpInterval select_interval_from_point(const DepthMap& depth, int y, int x, double half_width);

/// Replace the PSF of every cell whose average depth lies in `interval` by a delta kernel.
std::vector<PsfPatch> make_mask(std::vector<PsfPatch> psf_map, const DepthMap& depth_avg,
                                const SharpInterval& interval);

/// Raise valid depths below `d_min` to `d_min` (the nearest library plane).
void clamp_near_depths(DepthMap& depth, double d_min = kMinDepth);

enum class PsfSource { Library, Field };
const char* to_string(PsfSource source) noexcept;
PsfSource parse_psf_source(std::string_view text);

/// Everything needed to render one lens.
struct LensAsset {
  std::string id;
  double focal_length = 0.0;
  double f_number = 0.0;
  double fov_full = 0.0;
  std::shared_ptr<const PsfLibrary> library;
  std::shared_ptr<const FieldModel> field;
  int field_index = 0;  // lens input of `field`
  // Patch grid used with the field model (taken from the library when present).
  int n_h = 0;
  int n_w = 0;
  int m = 0;

  bool has(PsfSource source) const noexcept { return source == PsfSource::Library ? !!library : !!field; }
};

class AssetRegistry {
 public:
  void add(LensAsset asset);
  const LensAsset* find(std::string_view id) const;
  const std::vector<LensAsset>& assets() const noexcept { return assets_; }
  bool empty() const noexcept { return assets_.empty(); }

  /// Loads *.psfl libraries and *.olf field models from `dir`. Lens facts come
  /// from a matching *.lens file in `dir` or from the bundled prescriptions.
  /// `grid` supplies the patch layout for lenses that only have a field model.
  static AssetRegistry load_dir(const std::filesystem::path& dir, const PsfMapGrid& grid = PsfMapGrid::desk());

 private:
  std::vector<LensAsset> assets_;
};

struct RenderRequest {
  RgbImage image;
  DepthMap depth;
  std::string lens_id;
  SharpInterval sharp;
  PsfSource source = PsfSource::Library;
  std::optional<PixelOffset> offset;  // defaults to the centred, patch-aligned placement
};

struct RenderTiming {
  double psf_ms = 0.0;
  double convolve_ms = 0.0;
};

/// Patch-aligned offset that centres a height x width image on an n_h x n_w grid of m-pixel cells.
PixelOffset centered_offset(int height, int width, int n_h, int n_w, int m);

RgbImage render_dof(const RenderRequest& request, const LensAsset& asset, RenderTiming* timing = nullptr);
RgbImage render_dof(const RenderRequest& request, const AssetRegistry& registry, RenderTiming* timing = nullptr);

}  // namespace lensforge
