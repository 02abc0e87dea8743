#include <gtest/gtest.h>

#include <cmath>

#include "lensforge/error.hpp"
#include "lensforge/psf.hpp"
#include "lensforge/psflib.hpp"
#include "lensforge/sensor.hpp"
#include "oracles.hpp"

using namespace lensforge;

namespace {

SensorSpec desk_sensor(const LensPrescription& lens) { return SensorSpec::for_lens(lens, 512, 768); }

TraceSettings quick(int k = 21, int pupil = 48) {
  TraceSettings s;
  s.k = k;
  s.pupil_samples = pupil;
  return s;
}

}  // namespace

TEST(Splat, GaussianRatioAtOneSigma) {
  const double sigma = 0.0031;
  EXPECT_NEAR(splat_weight(sigma, sigma) / splat_weight(0.0, sigma), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(splat_weight(0.0, sigma), 1.0 / (std::sqrt(2.0 * M_PI) * sigma), 1e-9);
}

TEST(PsfMono, EveryRayLandsAndEnergyMatchesIndependentSplatSum) {
  const auto lens = bundled_lens("MOS-S1");
  const auto sensor = desk_sensor(lens);
  const auto obj = object_at_normalized_field(lens, 0.6, 2.0);
  MonoTraceOptions opt;
  opt.keep_landings = true;
  const auto r = trace_psf_mono(lens, obj, 550.0, sensor, quick(), opt);
  ASSERT_EQ(r.landings.size(), r.rays_landed);
  ASSERT_GT(r.rays_landed, 0u);

  const int k = r.psf.k;
  const int mid = k / 2;
  const double sigma = sensor.splat_sigma();
  double energy = 0.0;
  for (const Vec2& p : r.landings) {
    const long row0 = std::lround(p.y() / sensor.pitch_h) + mid;
    const long col0 = std::lround(p.x() / sensor.pitch_w) + mid;
    for (int row = 0; row < k; ++row) {
      for (int col = 0; col < k; ++col) {
        if (std::abs(row - row0) > 2 || std::abs(col - col0) > 2) continue;
        const double dx = p.x() - (col - mid) * sensor.pitch_w;
        const double dy = p.y() - (row - mid) * sensor.pitch_h;
        energy += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / (std::sqrt(2 * M_PI) * sigma);
      }
    }
  }
  EXPECT_NEAR(r.raw_energy / energy, 1.0, 1e-12);
  double total = 0.0;
  for (double v : r.psf.data) {
    EXPECT_GE(v, 0.0);
    total += v;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(PsfMono, OnAxisPsfIsPointSymmetric) {
  for (const char* id : {"MOS-S1", "MOS-S2"}) {
    const auto lens = bundled_lens(id);
    const auto r = trace_psf_mono(lens, ObjectPoint{0.0, 0.0, 3.0}, 550.0, desk_sensor(lens), quick(21, 64));
    const int k = r.psf.k;
    for (int row = 0; row < k; ++row) {
      for (int col = 0; col < k; ++col) {
        EXPECT_NEAR(r.psf.data[row * k + col], r.psf.data[(k - 1 - row) * k + (k - 1 - col)], 1e-6) << id;
      }
    }
  }
}

TEST(PsfMono, FullyVignettedFieldThrows) {
  const auto lens = bundled_lens("MOS-S1");
  // Far outside the image circle every ray is clipped.
  EXPECT_THROW(trace_psf_mono(lens, ObjectPoint{60.0, 0.0, INFINITY}, 550.0, desk_sensor(lens), quick()),
               TraceError);
}

TEST(PsfMono, EvenKernelSizeIsRejected) {
  const auto lens = bundled_lens("MOS-S1");
  EXPECT_THROW(trace_psf_mono(lens, ObjectPoint{}, 550.0, desk_sensor(lens), quick(20)), ValidationError);
}

TEST(PsfRgb, SingleWavelengthPerChannelEqualsMono) {
  const auto lens = bundled_lens("MOS-S2");
  const auto sensor = desk_sensor(lens);
  const auto obj = object_at_normalized_field(lens, 0.5, 1.0);
  const auto rgb = trace_psf_rgb(lens, obj, SpectralResponse::single(610, 535, 460), sensor, quick());
  const double wl[3] = {610, 535, 460};
  for (int c = 0; c < 3; ++c) {
    const auto mono = trace_psf_mono(lens, obj, wl[c], sensor, quick());
    for (std::size_t i = 0; i < mono.psf.data.size(); ++i) {
      EXPECT_NEAR(rgb.channel(c)[i], mono.psf.data[i], 1e-7);
    }
  }
}

TEST(PsfRgb, IdenticalChannelsForIdenticalSpectra) {
  const auto lens = bundled_lens("MOS-S1");
  const auto rgb = trace_psf_rgb(lens, object_at_normalized_field(lens, 0.3, 5.0),
                                 SpectralResponse::single(550, 550, 550), desk_sensor(lens), quick());
  for (std::size_t i = 0; i < rgb.channel_size(); ++i) {
    EXPECT_EQ(rgb.channel(0)[i], rgb.channel(1)[i]);
    EXPECT_EQ(rgb.channel(1)[i], rgb.channel(2)[i]);
  }
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(rgb.channel_sum(c), 1.0, 1e-6);
}

TEST(PsfRgb, AzimuthRotationMatchesResampledMeridionalPsf) {
  const auto lens = bundled_lens("MOS-S2");
  const auto sensor = desk_sensor(lens);
  const auto spectral = SpectralResponse::single(550, 550, 550);
  const auto base = trace_psf_rgb(lens, object_at_normalized_field(lens, 0.5, 2.0, 0.0), spectral, sensor,
                                  quick(21, 96));
  for (double phi : {90.0, 180.0}) {
    const auto direct = trace_psf_rgb(lens, object_at_normalized_field(lens, 0.5, 2.0, phi), spectral, sensor,
                                      quick(21, 96));
    const auto rotated = rotate_psf(base, phi * M_PI / 180.0);
    EXPECT_LT(relative_l1(direct, rotated), 0.02) << phi;
  }
}

TEST(PsfPatch, DeltaIsUnitCenterPerChannel) {
  const auto d = PsfPatch::delta(7);
  EXPECT_TRUE(d.is_delta());
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(d.at(c, 3, 3), 1.0f);
    EXPECT_EQ(d.channel_sum(c), 1.0);
  }
}

TEST(DepthVariation, MosS2KernelsDifferBetweenOneAndFiveMetres) {
  const auto lens = bundled_lens("MOS-S2");
  const auto sensor = desk_sensor(lens);
  TraceSettings s;
  s.k = 11;
  s.pupil_samples = 64;
  const auto near = trace_psf_rgb(lens, object_at_normalized_field(lens, 0.5, 1.0), SpectralResponse::default_rgb(),
                                  sensor, s);
  const auto far = trace_psf_rgb(lens, object_at_normalized_field(lens, 0.5, 5.0), SpectralResponse::default_rgb(),
                                 sensor, s);
  EXPECT_GT(relative_l1(near, far), 0.1);
}
