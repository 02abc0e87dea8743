#include <gtest/gtest.h>

#include <cmath>

#include "lensforge/depth_sim.hpp"
#include "lensforge/error.hpp"
#include "oracles.hpp"

using namespace lensforge;
namespace lt = lensforge::testing;

namespace {

PsfLibrary delta_library(int n_h, int n_w, int m, int k, std::vector<double> depths) {
  PsfLibrary lib("MOS-S1", n_h, n_w, m, k, std::move(depths));
  for (std::size_t d = 0; d < lib.depth_count(); ++d) {
    for (int r = 0; r < n_h; ++r) {
      for (int c = 0; c < n_w; ++c) lib.set_patch(d, r, c, PsfPatch::delta(k));
    }
  }
  return lib;
}

}  // namespace

TEST(CircleOfConfusion, InFocusDefocusAndInfinityLimit) {
  EXPECT_EQ(coc_diameter(20.0, 5.0, 2.0, 2.0), 0.0);
  // (20/5) * (2000/4000) * (20/1980)
  EXPECT_NEAR(coc_diameter(20.0, 5.0, 4.0, 2.0), 4.0 * 0.5 * 20.0 / 1980.0, 1e-15);
  EXPECT_NEAR(coc_diameter(20.0, 5.0, 4.0, 2.0), 0.020202, 5e-7);
  EXPECT_NEAR(coc_diameter(20.0, 5.0, INFINITY, 2.0), 0.040404, 5e-7);
  EXPECT_NEAR(coc_diameter(20.0, 5.0, 1e9, 2.0), coc_diameter(20.0, 5.0, INFINITY, 2.0), 1e-9);
  EXPECT_THROW(coc_diameter(20.0, 5.0, 0.0, 2.0), ValidationError);
  EXPECT_THROW(coc_diameter(20.0, 5.0, 1.0, 0.01), ValidationError);
}

TEST(DepthPool, ConstantMeanAndMaskedMean) {
  EXPECT_EQ(avg_depth_pool(DepthMap(4, 4, 2.5f), 2).depth, std::vector<float>(4, 2.5f));

  DepthMap block(2, 2);
  block.at(0, 0) = 1.0f;
  block.at(0, 1) = 2.0f;
  block.at(1, 0) = 3.0f;
  block.at(1, 1) = 4.0f;
  EXPECT_EQ(avg_depth_pool(block, 2).depth[0], 2.5f);

  block.set_missing(0, 1);
  block.set_missing(1, 1);
  EXPECT_EQ(avg_depth_pool(block, 2).depth[0], 2.0f);
}

TEST(DepthPool, EmptyCellsInheritTheNearestValidCell) {
  DepthMap d(2, 6, 1.0f);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) d.at(y, x) = 3.0f;
    for (int x = 2; x < 4; ++x) d.set_missing(y, x);
  }
  const auto p = avg_depth_pool(d, 2);
  ASSERT_EQ(p.width, 3);
  EXPECT_EQ(p.depth[0], 3.0f);
  EXPECT_EQ(p.depth[2], 1.0f);
  EXPECT_TRUE(p.filled[1]);
  EXPECT_FALSE(p.filled[0]);
  EXPECT_TRUE(p.depth[1] == 3.0f || p.depth[1] == 1.0f);
}

TEST(DepthPool, AllHolesIsAnError) {
  DepthMap d(2, 2);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) d.set_missing(y, x);
  }
  EXPECT_THROW(avg_depth_pool(d, 2), ValidationError);
  EXPECT_THROW(avg_depth_pool(DepthMap(3, 4), 2), ValidationError);
}

TEST(DepthPool, OffsetWindowFollowsSensorCells) {
  DepthMap d(4, 4, 1.0f);
  d.at(0, 0) = 5.0f;
  const auto p = avg_depth_pool(d, 4, PixelOffset{3, 3});
  ASSERT_EQ(p.height, 2);
  ASSERT_EQ(p.width, 2);
  EXPECT_EQ(p.depth[0], 5.0f);  // only pixel (0, 0) falls into sensor cell (0, 0)
  EXPECT_EQ(p.depth[3], 1.0f);
}

TEST(Simulation, DeltaLibraryIsIdentity) {
  std::mt19937_64 rng(1);
  const auto img = lt::random_image(64, 64, rng);
  const auto depth = lt::random_depth(64, 64, rng);
  const auto lib = delta_library(4, 4, 16, 7, inverse_uniform_depths(4));
  EXPECT_EQ(simulate_aberration(img, depth, lib), img);
}

TEST(Simulation, ConstantGrayIsPreserved) {
  std::mt19937_64 rng(2);
  const RgbImage gray(64, 64, 0.37f);
  const auto depth = lt::random_depth(64, 64, rng);
  const auto lib = lt::random_library("MOS-S1", 4, 4, 16, 9, inverse_uniform_depths(4), 7);
  const auto out = simulate_aberration(gray, depth, lib);
  for (float v : out.data) EXPECT_NEAR(v, 0.37f, 1e-4);
}

TEST(Simulation, MatchesDenseSpatiallyVaryingOracle) {
  for (int trial = 0; trial < 3; ++trial) {
    std::mt19937_64 rng(100 + trial);
    const auto img = lt::random_image(64, 64, rng);
    const auto depth = lt::random_depth(64, 64, rng);
    const auto lib = lt::random_library("MOS-S1", 4, 4, 16, 7, inverse_uniform_depths(5), 200 + trial);
    const auto pooled = avg_depth_pool(depth, 16);
    const auto out = simulate_aberration(img, depth, lib);
    const auto ref = lt::dense_convolution(img, 16, 7, {}, [&](int row, int col) {
      return lib.patch(lt::nearest_plane_bruteforce(lib.depths(), pooled.depth[row * 4 + col]), row, col);
    });
    for (std::size_t i = 0; i < out.data.size(); ++i) ASSERT_NEAR(out.data[i], ref.data[i], 1e-6) << i;
  }
}

TEST(Simulation, OffsetPlacementMatchesOracle) {
  std::mt19937_64 rng(9);
  const auto img = lt::random_image(40, 50, rng);
  const DepthMap depth(40, 50, 2.0f);
  const auto lib = lt::random_library("MOS-S1", 4, 5, 16, 5, {2.0}, 3);
  SimulationOptions opt;
  opt.offset = {13, 7};
  const auto out = simulate_aberration(img, depth, lib, opt);
  const auto ref = lt::dense_convolution(img, 16, 5, opt.offset,
                                         [&](int row, int col) { return lib.patch(0, row, col); });
  for (std::size_t i = 0; i < out.data.size(); ++i) ASSERT_NEAR(out.data[i], ref.data[i], 1e-6);
  opt.offset = {30, 0};
  EXPECT_THROW(simulate_aberration(img, depth, lib, opt), ValidationError);
}

TEST(Simulation, MismatchedDimensionsRejected) {
  const auto lib = delta_library(1, 1, 16, 3, {1.0});
  EXPECT_THROW(simulate_aberration(RgbImage(16, 16), DepthMap(8, 16), lib), ValidationError);
}

TEST(Noise, DeterministicZeroMeanAndClamped) {
  RgbImage a(32, 32, 0.5f);
  RgbImage b = a;
  add_noise_and_clamp(a, 0.05, 42);
  add_noise_and_clamp(b, 0.05, 42);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a.total() / a.data.size(), 0.5, 0.01);
  RgbImage c(8, 8, 0.99f);
  add_noise_and_clamp(c, 0.5, 1);
  for (float v : c.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(add_noise_and_clamp(c, -1.0, 1), ValidationError);
}

TEST(EmbedResolution, ExactFitBoundsAndDeterminism) {
  EXPECT_EQ(embed_resolution(1280, 1920, 1280, 1920, 5), (PixelOffset{0, 0}));
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto o = embed_resolution(480, 640, 1280, 1920, s);
    EXPECT_GE(o.y, 0);
    EXPECT_LE(o.y, 800);
    EXPECT_GE(o.x, 0);
    EXPECT_LE(o.x, 1280);
    EXPECT_EQ(o, embed_resolution(480, 640, 1280, 1920, s));
  }
  EXPECT_THROW(embed_resolution(1300, 10, 1280, 1920, 1), ValidationError);
}

TEST(CoveredCells, Arithmetic) {
  const auto r = covered_cells(40, 50, 16, {13, 7});
  EXPECT_EQ(r.row0, 0);
  EXPECT_EQ(r.col0, 0);
  EXPECT_EQ(r.rows, 4);  // rows 13..52 -> cells 0..3
  EXPECT_EQ(r.cols, 4);  // cols 7..56 -> cells 0..3
}
