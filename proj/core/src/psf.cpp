#include "lensforge/psf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/LU>
#include <tbb/parallel_for.h>

#include "lensforge/error.hpp"

namespace lensforge {

PsfPatch::PsfPatch(int k_, double pitch) : k(k_), pitch_mm(pitch), data(3 * static_cast<std::size_t>(k_) * k_, 0.0f) {
  if (k_ <= 0 || k_ % 2 == 0) throw ValidationError("PSF size k must be odd and positive");
}

PsfPatch PsfPatch::delta(int k) {
  PsfPatch p(k, 0.0);
  for (int c = 0; c < 3; ++c) p.at(c, k / 2, k / 2) = 1.0f;
  return p;
}

double PsfPatch::channel_sum(int c) const {
  double s = 0.0;
  for (float v : channel(c)) s += v;
  return s;
}

void PsfPatch::normalize() {
  for (int c = 0; c < 3; ++c) {
    const double s = channel_sum(c);
    if (!(s > 0.0)) continue;
    for (float& v : channel(c)) v = static_cast<float>(v / s);
  }
}

bool PsfPatch::is_delta() const {
  const int mid = k / 2;
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < k; ++r) {
      for (int col = 0; col < k; ++col) {
        const float expect = (r == mid && col == mid) ? 1.0f : 0.0f;
        if (at(c, r, col) != expect) return false;
      }
    }
  }
  return true;
}

double splat_weight(double r_mm, double sigma_mm) {
  return std::exp(-(r_mm * r_mm) / (2.0 * sigma_mm * sigma_mm)) /
         (std::sqrt(2.0 * std::numbers::pi) * sigma_mm);
}

namespace {

struct PupilSample {
  Vec2 uv;
};

std::vector<PupilSample> pupil_grid(int n) {
  std::vector<PupilSample> out;
  out.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    const double v = -1.0 + (2.0 * i + 1.0) / n;
    for (int j = 0; j < n; ++j) {
      const double u = -1.0 + (2.0 * j + 1.0) / n;
      if (u * u + v * v <= 1.0) out.push_back({Vec2(u, v)});
    }
  }
  return out;
}

void splat(std::vector<double>& buf, int k, const Vec2& offset, const SensorSpec& sensor, double sigma) {
  const int mid = k / 2;
  const int col0 = static_cast<int>(std::lround(offset.x() / sensor.pitch_w)) + mid;
  const int row0 = static_cast<int>(std::lround(offset.y() / sensor.pitch_h)) + mid;
  for (int row = std::max(0, row0 - kSplatRadius); row <= std::min(k - 1, row0 + kSplatRadius); ++row) {
    const double dy = offset.y() - (row - mid) * sensor.pitch_h;
    for (int col = std::max(0, col0 - kSplatRadius); col <= std::min(k - 1, col0 + kSplatRadius); ++col) {
      const double dx = offset.x() - (col - mid) * sensor.pitch_w;
      buf[static_cast<std::size_t>(row) * k + col] += splat_weight(std::hypot(dx, dy), sigma);
    }
  }
}

}  // namespace

MonoTraceResult trace_psf_mono(const LensPrescription& lens, const ObjectPoint& object,
                               double wavelength_nm, const SensorSpec& sensor,
                               const TraceSettings& settings, const MonoTraceOptions& options) {
  sensor.validate();
  if (settings.k <= 0 || settings.k % 2 == 0) throw ValidationError("PSF size k must be odd and positive");
  if (settings.pupil_samples < 1) throw ValidationError("pupil sampling must be positive");

  const PreparedLens prepared(lens, wavelength_nm);
  const int k = settings.k;
  const double sigma = sensor.splat_sigma();

  MonoTraceResult result;
  const AimResult chief = aim_ray(prepared, object, Vec2::Zero());
  if (!chief.converged) throw TraceError("chief ray aiming failed");
  Eigen::Matrix2d chief_jacobian = chief.jacobian;
  if (lens.stop_index != 0 && chief.iterations == 0) {
    // Converged on the first guess; the predictor below still needs a Jacobian.
    const AimResult probe = aim_ray(prepared, object, Vec2(1e-3, 1e-3), chief.launch);
    if (probe.converged) chief_jacobian = probe.jacobian;
  }
  TraceOptions unclipped;
  unclipped.clip = false;
  const Ray chief_img = prepared.trace(chief.ray, unclipped);
  if (!chief_img.alive) throw TraceError("chief ray does not reach the sensor");
  const Vec2 center(chief_img.position.x(), chief_img.position.y());
  const Eigen::Matrix2d inv_j = chief_jacobian.inverse();
  const double stop_sd = lens.surfaces[lens.stop_index].semi_diameter;

  const auto samples = pupil_grid(settings.pupil_samples);
  result.rays_launched = samples.size();

  // Fixed chunking keeps the merge order, and therefore the sums, independent of thread count.
  constexpr std::size_t kChunks = 16;
  struct Partial {
    std::vector<double> buf;
    std::vector<Vec2> landings;
    TraceStats stats;
    std::size_t landed = 0;
  };
  std::vector<Partial> partials(kChunks);
  tbb::parallel_for(std::size_t{0}, kChunks, [&](std::size_t chunk) {
    Partial& part = partials[chunk];
    part.buf.assign(static_cast<std::size_t>(k) * k, 0.0);
    const std::size_t begin = samples.size() * chunk / kChunks;
    const std::size_t end = samples.size() * (chunk + 1) / kChunks;
    for (std::size_t s = begin; s < end; ++s) {
      const Vec2 stop_point = samples[s].uv * stop_sd;
      const Vec2 guess = chief.launch + inv_j * (stop_point - chief.stop_hit);
      const AimResult aimed = aim_ray(prepared, object, samples[s].uv, guess, &chief_jacobian);
      if (!aimed.converged) {
        ++part.stats.aim_failures;
        continue;
      }
      const Ray out = prepared.trace(aimed.ray, {}, &part.stats);
      if (!out.alive) continue;
      const Vec2 offset = Vec2(out.position.x(), out.position.y()) - center;
      ++part.landed;
      if (options.keep_landings) part.landings.push_back(offset);
      splat(part.buf, k, offset, sensor, sigma);
    }
  });

  std::vector<double> total(static_cast<std::size_t>(k) * k, 0.0);
  for (auto& part : partials) {
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += part.buf[i];
    result.stats.merge(part.stats);
    result.rays_landed += part.landed;
    if (options.keep_landings) {
      result.landings.insert(result.landings.end(), part.landings.begin(), part.landings.end());
    }
  }
  if (result.rays_landed == 0) throw TraceError("fully vignetted field point");
  double energy = 0.0;
  for (double v : total) energy += v;
  if (!(energy > 0.0)) throw TraceError("no ray energy fell inside the PSF patch");
  result.raw_energy = energy;
  for (double& v : total) v /= energy;

  result.psf.k = k;
  result.psf.pitch_mm = sensor.pitch_h;
  result.psf.center_mm = center;
  result.psf.data = std::move(total);
  return result;
}

PsfPatch trace_psf_rgb(const LensPrescription& lens, const ObjectPoint& object,
                       const SpectralResponse& spectral, const SensorSpec& sensor,
                       const TraceSettings& settings, TraceStats* stats) {
  spectral.validate();
  struct Job {
    int channel;
    double wavelength;
    double weight;
  };
  std::vector<Job> jobs;
  for (int c = 0; c < 3; ++c) {
    for (const auto& s : spectral.channels[c]) jobs.push_back({c, s.wavelength_nm, s.weight});
  }
  std::vector<MonoTraceResult> traced(jobs.size());
  tbb::parallel_for(std::size_t{0}, jobs.size(), [&](std::size_t i) {
    traced[i] = trace_psf_mono(lens, object, jobs[i].wavelength, sensor, settings);
  });

  const int k = settings.k;
  std::vector<double> acc(3 * static_cast<std::size_t>(k) * k, 0.0);
  PsfPatch out(k, sensor.pitch_h);
  bool center_set = false;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& mono = traced[i].psf;
    const std::size_t base = static_cast<std::size_t>(jobs[i].channel) * k * k;
    for (std::size_t p = 0; p < mono.data.size(); ++p) acc[base + p] += jobs[i].weight * mono.data[p];
    if (!center_set && jobs[i].channel == static_cast<int>(Channel::G)) {
      out.center_mm = mono.center_mm;
      center_set = true;
    }
    if (stats) stats->merge(traced[i].stats);
  }
  for (int c = 0; c < 3; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * k * k;
    double sum = 0.0;
    for (std::size_t p = 0; p < out.channel_size(); ++p) sum += acc[base + p];
    for (std::size_t p = 0; p < out.channel_size(); ++p) {
      out.data[base + p] = static_cast<float>(acc[base + p] / sum);
    }
  }
  return out;
}

ObjectPoint object_at_normalized_field(const LensPrescription& lens, double field, double depth_m,
                                       double azimuth_deg) {
  if (!(field >= 0.0 && field <= 1.0)) throw ValidationError("normalized field must lie in [0, 1]");
  ObjectPoint obj;
  obj.field_angle_deg = field_angle_for_image_height(lens, field * lens.max_image_height());
  obj.azimuth_deg = azimuth_deg;
  obj.depth_m = depth_m;
  return obj;
}

double relative_l1(const PsfPatch& a, const PsfPatch& b) {
  if (a.data.size() != b.data.size()) throw ValidationError("PSF size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    num += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
    den += std::abs(static_cast<double>(a.data[i]));
  }
  return den > 0.0 ? num / den : num;
}

}  // namespace lensforge
