#include "lensforge/psflib.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>
#include <tbb/parallel_for.h>

#include "lensforge/binary_io.hpp"
#include "lensforge/error.hpp"

namespace lensforge {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'F', 'L'};
constexpr std::uint32_t kVersion = 1;

double inverse_depth(double d) { return std::isinf(d) ? 0.0 : 1.0 / d; }

struct TraceJob {
  std::size_t depth_index;
  int sample;
};

std::vector<double> meridional_field_angles(const LensPrescription& lens, int n_fov) {
  std::vector<double> angles(n_fov, 0.0);
  const double h_max = lens.max_image_height();
  for (int j = 1; j < n_fov; ++j) {
    angles[j] = field_angle_for_image_height(lens, h_max * j / (n_fov - 1));
  }
  return angles;
}

// Trace one meridional sample at the (possibly oversampled) trace pitch.
PsfPatch trace_sample(const LensPrescription& lens, double field_deg, double depth_m, const PsfMapGrid& grid,
                      const SensorSpec& sensor, const SpectralResponse& spectral, TraceStats* stats) {
  SensorSpec trace_sensor = sensor;
  TraceSettings ts;
  ts.pupil_samples = grid.pupil_samples;
  ts.k = grid.k;
  if (grid.trace_oversample > 1) {
    trace_sensor.pitch_h /= grid.trace_oversample;
    trace_sensor.pitch_w /= grid.trace_oversample;
    ts.k = grid.k * grid.trace_oversample;
    if (ts.k % 2 == 0) ++ts.k;
  }
  ObjectPoint obj;
  obj.field_angle_deg = field_deg;
  obj.depth_m = depth_m;
  return trace_psf_rgb(lens, obj, spectral, trace_sensor, ts, stats);
}

void fill_fallbacks(MeridionalPsfs& merid) {
  const int n = static_cast<int>(merid.samples.size());
  int first_valid = -1;
  for (int j = 0; j < n; ++j) {
    if (merid.traced[j]) {
      first_valid = j;
      break;
    }
  }
  if (first_valid < 0) throw TraceError("fully vignetted field point at every meridional sample");
  for (int j = 0; j < n; ++j) {
    if (merid.traced[j]) continue;
    int best = first_valid;
    for (int i = 0; i < n; ++i) {
      if (merid.traced[i] && std::abs(i - j) < std::abs(best - j)) best = i;
    }
    merid.samples[j] = merid.samples[best];
  }
}

}  // namespace

std::vector<double> inverse_uniform_depths(std::size_t finite_count, double d_min, double d_max,
                                           bool with_infinity) {
  if (finite_count == 0) throw ValidationError("at least one finite depth plane is required");
  if (!(d_min > 0.0 && d_max >= d_min)) throw ValidationError("depth range must satisfy 0 < d_min <= d_max");
  std::vector<double> out;
  if (finite_count == 1) {
    out.push_back(d_min);
  } else {
    const double a = 1.0 / d_min;
    const double b = 1.0 / d_max;
    for (std::size_t i = 0; i < finite_count; ++i) {
      const double inv = a + (b - a) * static_cast<double>(i) / static_cast<double>(finite_count - 1);
      out.push_back(1.0 / inv);
    }
    out.front() = d_min;
    out.back() = d_max;
  }
  // Planes are stored as float32 on disk; keep them exactly representable.
  for (double& d : out) d = static_cast<float>(d);
  if (with_infinity) out.push_back(std::numeric_limits<double>::infinity());
  return out;
}

void PsfMapGrid::validate() const {
  if (n_h <= 0 || n_w <= 0) throw ValidationError("patch counts must be positive");
  if (m <= 0) throw ValidationError("patch size m must be positive");
  if (k <= 0 || k % 2 == 0) throw ValidationError("PSF size k must be odd and positive");
  if (n_fov < 2) throw ValidationError("N_fov must be at least 2");
  if (pupil_samples < 1) throw ValidationError("pupil sampling must be positive");
  if (trace_oversample < 1) throw ValidationError("trace oversampling must be >= 1");
  if (depths.empty()) throw ValidationError("depth list is empty");
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const double d = depths[i];
    if (!(d > 0.0)) throw ValidationError("depth planes must be positive");
    if (i > 0 && !(d > depths[i - 1])) throw ValidationError("depth planes must be strictly increasing");
  }
}

PsfMapGrid PsfMapGrid::desk() { return PsfMapGrid{}; }

PsfMapGrid PsfMapGrid::full() {
  PsfMapGrid g;
  g.n_h = 20;
  g.n_w = 30;
  g.m = 64;
  g.k = 41;
  g.n_fov = 64;
  g.pupil_samples = 128;
  g.depths = inverse_uniform_depths(11);
  return g;
}

MeridionalPsfs trace_meridional_psfs(const LensPrescription& lens, double depth_m, const PsfMapGrid& grid,
                                     const SensorSpec& sensor, const SpectralResponse& spectral,
                                     BuildStats* stats) {
  grid.validate();
  const auto angles = meridional_field_angles(lens, grid.n_fov);
  depth_m = static_cast<float>(depth_m);
  MeridionalPsfs merid;
  merid.depth_m = depth_m;
  merid.max_image_height = lens.max_image_height();
  merid.samples.resize(grid.n_fov);
  merid.traced.assign(grid.n_fov, false);
  std::vector<TraceStats> per(grid.n_fov);
  std::vector<char> ok(grid.n_fov, 0);
  tbb::parallel_for(0, grid.n_fov, [&](int j) {
    try {
      merid.samples[j] = trace_sample(lens, angles[j], depth_m, grid, sensor, spectral, &per[j]);
      ok[j] = 1;
    } catch (const TraceError&) {
      ok[j] = 0;
    }
  });
  std::size_t fallbacks = 0;
  for (int j = 0; j < grid.n_fov; ++j) {
    merid.traced[j] = ok[j] != 0;
    if (!ok[j]) ++fallbacks;
  }
  if (fallbacks > 0) {
    spdlog::warn("{}: {} of {} field samples at d={} m fully vignetted; using nearest valid sample", lens.id,
                 fallbacks, grid.n_fov, depth_m);
  }
  fill_fallbacks(merid);
  if (stats) {
    stats->traced_fields += grid.n_fov - fallbacks;
    stats->fallback_fields += fallbacks;
    for (const auto& s : per) stats->trace.merge(s);
  }
  return merid;
}

PsfPatch rotate_psf(const PsfPatch& psf, double azimuth_rad) {
  if (azimuth_rad == 0.0) return psf;
  const int k = psf.k;
  const int mid = k / 2;
  const double c = std::cos(azimuth_rad);
  const double s = std::sin(azimuth_rad);
  PsfPatch out(k, psf.pitch_mm);
  out.center_mm = psf.center_mm;
  for (int row = 0; row < k; ++row) {
    const double qy = row - mid;
    for (int col = 0; col < k; ++col) {
      const double qx = col - mid;
      const double sx = qx * c - qy * s + mid;
      const double sy = qx * s + qy * c + mid;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      for (int ch = 0; ch < 3; ++ch) {
        auto sample = [&](int y, int x) -> double {
          return (x < 0 || y < 0 || x >= k || y >= k) ? 0.0 : psf.at(ch, y, x);
        };
        const double v = (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                         fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
        out.at(ch, row, col) = static_cast<float>(v);
      }
    }
  }
  out.normalize();
  return out;
}

PsfPatch resize_psf(const PsfPatch& psf, double to_pitch_mm, int to_k) {
  if (psf.pitch_mm == to_pitch_mm && psf.k == to_k) return psf;
  if (!(psf.pitch_mm > 0.0 && to_pitch_mm > 0.0)) throw ValidationError("resize needs positive pitches");
  // Separable overlap weights: w[o][i] = length of output pixel o covered by input pixel i, in mm.
  const int kin = psf.k;
  const double half_in = kin / 2;
  const double half_out = to_k / 2;
  std::vector<double> w(static_cast<std::size_t>(to_k) * kin, 0.0);
  for (int o = 0; o < to_k; ++o) {
    const double o_lo = (o - half_out - 0.5) * to_pitch_mm;
    const double o_hi = o_lo + to_pitch_mm;
    for (int i = 0; i < kin; ++i) {
      const double i_lo = (i - half_in - 0.5) * psf.pitch_mm;
      const double i_hi = i_lo + psf.pitch_mm;
      w[o * kin + i] = std::max(0.0, std::min(o_hi, i_hi) - std::max(o_lo, i_lo));
    }
  }
  PsfPatch out(to_k, to_pitch_mm);
  out.center_mm = psf.center_mm;
  std::vector<double> tmp(static_cast<std::size_t>(kin) * to_k);
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < kin; ++r) {
      for (int o = 0; o < to_k; ++o) {
        double acc = 0.0;
        for (int i = 0; i < kin; ++i) acc += w[o * kin + i] * psf.at(ch, r, i);
        tmp[r * to_k + o] = acc;
      }
    }
    for (int o = 0; o < to_k; ++o) {
      for (int c = 0; c < to_k; ++c) {
        double acc = 0.0;
        for (int i = 0; i < kin; ++i) acc += w[o * kin + i] * tmp[i * to_k + c];
        out.at(ch, o, c) = static_cast<float>(acc);
      }
    }
  }
  out.normalize();
  return out;
}

PsfPatch interpolate_meridional(const MeridionalPsfs& merid, double image_height) {
  const int n = static_cast<int>(merid.samples.size());
  const double t = std::clamp(image_height / merid.max_image_height, 0.0, 1.0) * (n - 1);
  const int j = std::min(static_cast<int>(std::floor(t)), n - 1);
  const double f = t - j;
  if (f == 0.0 || j == n - 1) return merid.samples[j];
  const PsfPatch& a = merid.samples[j];
  const PsfPatch& b = merid.samples[j + 1];
  PsfPatch out(a.k, a.pitch_mm);
  out.center_mm = (1.0 - f) * a.center_mm + f * b.center_mm;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = static_cast<float>((1.0 - f) * a.data[i] + f * b.data[i]);
  }
  return out;
}

Vec2 patch_center_mm(const PsfMapGrid& grid, const SensorSpec& sensor, int row, int col) {
  const double x = ((col + 0.5) * grid.m - 0.5 * grid.width_px()) * sensor.pitch_w;
  const double y = ((row + 0.5) * grid.m - 0.5 * grid.height_px()) * sensor.pitch_h;
  return {x, y};
}

PsfPatch assemble_cell(const MeridionalPsfs& merid, const PsfMapGrid& grid, const SensorSpec& sensor, int row,
                       int col) {
  const Vec2 c = patch_center_mm(grid, sensor, row, col);
  const double r = c.norm();
  const double phi = r > 0.0 ? std::atan2(c.x(), c.y()) : 0.0;
  PsfPatch p = rotate_psf(interpolate_meridional(merid, r), phi);
  p = resize_psf(p, sensor.pitch_h, grid.k);
  p.center_mm = c;
  return p;
}

std::vector<PsfPatch> build_psf_map(const LensPrescription& lens, double depth_m, const PsfMapGrid& grid,
                                    const SensorSpec& sensor, const SpectralResponse& spectral,
                                    BuildStats* stats) {
  const MeridionalPsfs merid = trace_meridional_psfs(lens, depth_m, grid, sensor, spectral, stats);
  std::vector<PsfPatch> map(static_cast<std::size_t>(grid.n_h) * grid.n_w);
  tbb::parallel_for(0, grid.n_h * grid.n_w, [&](int idx) {
    map[idx] = assemble_cell(merid, grid, sensor, idx / grid.n_w, idx % grid.n_w);
  });
  return map;
}

PsfLibrary::PsfLibrary(std::string lens_id, int n_h, int n_w, int m, int k, std::vector<double> depths)
    : lens_id_(std::move(lens_id)), n_h_(n_h), n_w_(n_w), m_(m), k_(k), depths_(std::move(depths)) {
  if (n_h <= 0 || n_w <= 0 || m <= 0 || k <= 0 || k % 2 == 0 || depths_.empty()) {
    throw ValidationError("invalid PSF library dimensions");
  }
  for (double& d : depths_) d = static_cast<float>(d);
  data_.assign(cell_count() * patch_floats(), 0.0f);
}

std::size_t PsfLibrary::offset(std::size_t d, int row, int col) const {
  if (d >= depths_.size() || row < 0 || row >= n_h_ || col < 0 || col >= n_w_) {
    throw ValidationError("PSF library index out of range");
  }
  return ((d * n_h_ + row) * n_w_ + col) * patch_floats();
}

std::span<const float> PsfLibrary::patch(std::size_t d, int row, int col) const {
  return {data_.data() + offset(d, row, col), patch_floats()};
}

std::span<float> PsfLibrary::patch(std::size_t d, int row, int col) {
  return {data_.data() + offset(d, row, col), patch_floats()};
}

PsfPatch PsfLibrary::patch_copy(std::size_t d, int row, int col) const {
  PsfPatch p(k_, 0.0);
  const auto src = patch(d, row, col);
  std::copy(src.begin(), src.end(), p.data.begin());
  return p;
}

void PsfLibrary::set_patch(std::size_t d, int row, int col, const PsfPatch& psf) {
  if (psf.k != k_) throw ValidationError("PSF size does not match the library");
  std::copy(psf.data.begin(), psf.data.end(), patch(d, row, col).begin());
}

PsfLibrary build_psflib(const LensPrescription& lens, const PsfMapGrid& grid, const SpectralResponse& spectral,
                        BuildStats* stats) {
  grid.validate();
  spectral.validate();
  const SensorSpec sensor = SensorSpec::for_lens(lens, grid.height_px(), grid.width_px());
  const auto angles = meridional_field_angles(lens, grid.n_fov);
  const std::size_t n_depth = grid.depths.size();

  std::vector<MeridionalPsfs> merids(n_depth);
  for (std::size_t d = 0; d < n_depth; ++d) {
    merids[d].depth_m = grid.depths[d];
    merids[d].max_image_height = lens.max_image_height();
    merids[d].samples.resize(grid.n_fov);
    merids[d].traced.assign(grid.n_fov, false);
  }
  std::vector<TraceJob> jobs;
  for (std::size_t d = 0; d < n_depth; ++d) {
    for (int j = 0; j < grid.n_fov; ++j) jobs.push_back({d, j});
  }
  std::vector<TraceStats> per(jobs.size());
  std::vector<char> ok(jobs.size(), 0);
  tbb::parallel_for(std::size_t{0}, jobs.size(), [&](std::size_t i) {
    const auto& job = jobs[i];
    try {
      merids[job.depth_index].samples[job.sample] =
          trace_sample(lens, angles[job.sample], static_cast<float>(grid.depths[job.depth_index]), grid, sensor,
                       spectral, &per[i]);
      ok[i] = 1;
    } catch (const TraceError&) {
      ok[i] = 0;
    }
  });
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    merids[jobs[i].depth_index].traced[jobs[i].sample] = ok[i] != 0;
    if (!ok[i]) ++fallbacks;
    if (stats) stats->trace.merge(per[i]);
  }
  if (fallbacks > 0) {
    spdlog::warn("{}: {} of {} field samples fully vignetted; using nearest valid sample", lens.id, fallbacks,
                 jobs.size());
  }
  for (auto& m : merids) fill_fallbacks(m);
  if (stats) {
    stats->traced_fields += jobs.size() - fallbacks;
    stats->fallback_fields += fallbacks;
  }

  PsfLibrary lib(lens.id, grid.n_h, grid.n_w, grid.m, grid.k, grid.depths);
  const int cells_per_depth = grid.n_h * grid.n_w;
  tbb::parallel_for(std::size_t{0}, n_depth * cells_per_depth, [&](std::size_t idx) {
    const std::size_t d = idx / cells_per_depth;
    const int cell = static_cast<int>(idx % cells_per_depth);
    const int row = cell / grid.n_w;
    const int col = cell % grid.n_w;
    lib.set_patch(d, row, col, assemble_cell(merids[d], grid, sensor, row, col));
  });
  spdlog::debug("{}: built {} PSF cells from {} traced field samples", lens.id, lib.cell_count(), jobs.size());
  return lib;
}

std::size_t nearest_depth_plane(const std::vector<double>& depths, double depth_m) {
  if (depths.empty()) throw ValidationError("no depth planes");
  if (!(depth_m > 0.0)) throw ValidationError("query depth must be positive");
  // Anything beyond the farthest finite plane belongs to the farthest plane.
  double largest_finite = 0.0;
  for (double d : depths) {
    if (std::isfinite(d)) largest_finite = std::max(largest_finite, d);
  }
  if (depth_m > largest_finite) return depths.size() - 1;
  const double q = inverse_depth(depth_m);
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const double dist = std::abs(inverse_depth(depths[i]) - q);
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  return best;
}

PsfPatch query_psf(const PsfLibrary& lib, int row, int col, double depth_m) {
  return lib.patch_copy(nearest_depth_plane(lib.depths(), depth_m), row, col);
}

std::size_t psflib_file_size(std::size_t lens_id_bytes, std::size_t n_h, std::size_t n_w, std::size_t depth_count,
                             std::size_t k) {
  const std::size_t header = 4 + 4 + 4 + lens_id_bytes + 5 * 4 + depth_count * 4;
  return header + n_h * n_w * depth_count * 3 * k * k * 4 + 4;
}

std::vector<std::uint8_t> encode_psflib(const PsfLibrary& lib) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.str(lib.lens_id());
  w.u32(static_cast<std::uint32_t>(lib.n_h()));
  w.u32(static_cast<std::uint32_t>(lib.n_w()));
  w.u32(static_cast<std::uint32_t>(lib.m()));
  w.u32(static_cast<std::uint32_t>(lib.k()));
  w.u32(static_cast<std::uint32_t>(lib.depth_count()));
  for (double d : lib.depths()) w.f32(static_cast<float>(d));
  w.buffer().reserve(w.buffer().size() + lib.data().size() * 4 + 4);
  w.f32s(lib.data());
  w.finish_with_crc();
  return w.take();
}

PsfLibrary decode_psflib(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::Magic, "not a PSFL file");
  }
  const auto payload = verify_crc_trailer(bytes, 8);
  ByteReader r(payload);
  char magic[4];
  r.bytes(magic, 4);
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError(FormatError::Kind::Version, "unsupported PSFL version " + std::to_string(version));
  }
  std::string lens_id = r.str();
  const std::uint32_t n_h = r.u32();
  const std::uint32_t n_w = r.u32();
  const std::uint32_t m = r.u32();
  const std::uint32_t k = r.u32();
  const std::uint32_t n_d = r.u32();
  if (n_h == 0 || n_w == 0 || m == 0 || k == 0 || k % 2 == 0 || n_d == 0 || n_h > 1u << 16 || n_w > 1u << 16 ||
      k > 1u << 12 || n_d > 1u << 16) {
    throw FormatError(FormatError::Kind::Dimensions, "invalid PSFL dimensions");
  }
  std::vector<double> depths(n_d);
  for (auto& d : depths) d = r.f32();
  const std::size_t expected = static_cast<std::size_t>(n_h) * n_w * n_d * 3 * k * k * 4;
  if (r.remaining() != expected) {
    throw FormatError(FormatError::Kind::Dimensions, "PSFL payload size does not match its header (holes or extra data)");
  }
  PsfLibrary lib(std::move(lens_id), static_cast<int>(n_h), static_cast<int>(n_w), static_cast<int>(m),
                 static_cast<int>(k), std::move(depths));
  r.f32s(lib.data());
  return lib;
}

void save_psflib(const PsfLibrary& lib, const std::filesystem::path& path) {
  write_file_bytes(path, encode_psflib(lib));
}

PsfLibrary load_psflib(const std::filesystem::path& path) { return decode_psflib(read_file_bytes(path)); }

}  // namespace lensforge
