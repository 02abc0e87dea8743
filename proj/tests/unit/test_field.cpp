#include <gtest/gtest.h>

#include <cmath>

#include "lensforge/error.hpp"
#include "lensforge/field.hpp"
#include "oracles.hpp"

using namespace lensforge;
namespace lt = lensforge::testing;

namespace {

FieldConfig small_config() {
  FieldConfig c;
  c.input_width = 8;
  c.hidden_layers = 2;
  c.hidden_width = 6;
  c.k = 3;
  c.lens_count = 2;
  return c;
}

FieldModel::Matrix random_inputs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FieldModel::Matrix x(4, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

FieldModel::Matrix random_targets(int rows, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  FieldModel::Matrix t(rows, n);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

// A peaked, physically traced kernel as the single training target.
PsfLibrary traced_single_cell() {
  const auto lens = bundled_lens("MOS-S2");
  TraceSettings ts;
  ts.k = 11;
  ts.pupil_samples = 32;
  const auto psf = trace_psf_rgb(lens, object_at_normalized_field(lens, 0.5, 1.0), SpectralResponse::default_rgb(),
                                 SensorSpec::for_lens(lens, 512, 768), ts);
  PsfLibrary lib("MOS-S2", 1, 1, 64, 11, {1.0});
  lib.set_patch(0, 0, 0, psf);
  return lib;
}

}  // namespace

TEST(FieldConfig, ParameterCountAndValidation) {
  FieldConfig c = FieldConfig::desk(1);
  c.hidden_layers = 1;
  c.k = 11;
  const FieldModel m(c, 1);
  // 4->64, 64->64, three 64->121 heads
  EXPECT_EQ(m.parameter_count(), 4u * 64 + 64 + 64 * 64 + 64 + 3 * (64 * 121 + 121));
  EXPECT_EQ(m.parameter_count(), 28075u);
  EXPECT_EQ(field_file_size(m), 28075u * 4 + 48);
  c.k = 4;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(FieldInputs, Normalization) {
  FieldConfig c;
  EXPECT_EQ(normalize_depth(c, 0.7), 0.0);
  EXPECT_EQ(normalize_depth(c, 10.0), 1.0);
  EXPECT_EQ(normalize_depth(c, 1e6), 1.0);
  EXPECT_EQ(normalize_depth(c, INFINITY), 1.0);
  EXPECT_EQ(normalize_depth(c, 0.1), 0.0);
  EXPECT_NEAR(normalize_depth(c, 5.35), 0.5, 1e-12);
  c.depth_norm = DepthNormalization::Inverse;
  EXPECT_NEAR(normalize_depth(c, 1.4), 0.5, 1e-12);
  EXPECT_EQ(normalize_depth(c, INFINITY), 1.0);
  EXPECT_EQ(normalize_patch_index(0, 1), 0.0);
  EXPECT_EQ(normalize_patch_index(7, 8), 1.0);
  EXPECT_EQ(normalize_lens_index(0, 1), 0.0);
  EXPECT_EQ(normalize_lens_index(3, 4), 1.0);
}

TEST(FieldForward, OutputsLieStrictlyInsideTheUnitInterval) {
  const FieldModel m(small_config(), 3);
  const auto y = m.forward(random_inputs(50, 1) * 20.0 - FieldModel::Matrix::Constant(4, 50, 10.0));
  EXPECT_GT(y.minCoeff(), 0.0);
  EXPECT_LT(y.maxCoeff(), 1.0);
}

TEST(FieldForward, ZeroWeightsGiveOneHalfAndCallsArePure) {
  const auto z = FieldModel::zeros(small_config());
  const auto x = random_inputs(5, 2);
  EXPECT_TRUE((z.forward(x).array() == 0.5).all());
  const FieldModel m(small_config(), 4);
  EXPECT_EQ(m.forward(x), m.forward(x));
  EXPECT_TRUE(FieldModel(small_config(), 4) == m);
  EXPECT_FALSE(FieldModel(small_config(), 5) == m);
}

TEST(FieldGradients, MatchCentralFiniteDifferencesForEveryParameter) {
  FieldModel m(small_config(), 11);
  const auto x = random_inputs(4, 21);
  const auto t = random_targets(3 * 9, 4, 22);
  const auto g = m.gradients(x, t);
  EXPECT_NEAR(g.loss, m.loss(x, t), 1e-15);
  const double eps = 1e-4;
  std::size_t checked = 0;
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    auto check = [&](double& p, double analytic) {
      const double saved = p;
      p = saved + eps;
      const double up = m.loss(x, t);
      p = saved - eps;
      const double down = m.loss(x, t);
      p = saved;
      const double numeric = (up - down) / (2 * eps);
      if (std::abs(analytic) > 1e-6) {
        EXPECT_NEAR(numeric / analytic, 1.0, 1e-4) << "layer " << l;
        ++checked;
      }
    };
    auto& layer = m.layers()[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) check(layer.weight.data()[i], g.layers[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) check(layer.bias.data()[i], g.layers[l].bias.data()[i]);
  }
  EXPECT_GT(checked, m.parameter_count() / 2);
}

TEST(FieldGradients, ZeroAtExactFitAndMeanOverBatch) {
  const FieldModel m(small_config(), 6);
  const auto x = random_inputs(3, 7);
  const auto g0 = m.gradients(x, m.forward(x));
  EXPECT_EQ(g0.loss, 0.0);
  for (const auto& l : g0.layers) {
    EXPECT_EQ(l.weight.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }

  const auto x1 = random_inputs(1, 8);
  const auto t1 = random_targets(27, 1, 9);
  FieldModel::Matrix x2(4, 2), t2(27, 2);
  x2 << x1, x1;
  t2 << t1, t1;
  const auto a = m.gradients(x1, t1);
  const auto b = m.gradients(x2, t2);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    EXPECT_LT((a.layers[l].weight - b.layers[l].weight).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((a.layers[l].bias - b.layers[l].bias).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(FieldTraining, ZeroLearningRateLeavesTheModelUnchanged) {
  const auto lib = lt::random_library("A", 2, 2, 8, 3, {1.0, 2.0}, 1);
  const PsfLibrary* libs[] = {&lib};
  FieldConfig c = small_config();
  c.lens_count = 1;
  TrainConfig t;
  t.iterations = 50;
  t.learning_rate = 0.0;
  t.weight_decay = 0.01;
  const FieldModel init(c, t.seed);
  const auto r = field_train(libs, c, t);
  EXPECT_TRUE(r.model == init);
}

TEST(FieldTraining, OverfitsASingleCellAndLossDecreasesEarly) {
  const auto lib = traced_single_cell();
  const PsfLibrary* libs[] = {&lib};
  FieldConfig c;
  c.input_width = 64;
  c.hidden_layers = 2;
  c.hidden_width = 64;
  c.k = 11;
  c.lens_count = 1;
  TrainConfig t;
  t.iterations = 2000;
  t.batch_size = 1;
  t.holdout_fraction = 0.0;
  t.weight_decay = 0.0;
  const auto r = field_train(libs, c, t);
  const auto batch = make_batch(c, libs, r.train_cells);
  const double start = FieldModel(c, t.seed).loss(batch.inputs, batch.targets);
  const double fitted = r.model.loss(batch.inputs, batch.targets);
  EXPECT_LT(fitted, 1e-5);
  EXPECT_LT(fitted, 1e-3 * start);

  // 100-iteration moving average over the first half of training.
  const auto& h = r.loss_history;
  double prev = INFINITY;
  for (std::size_t i = 100; i <= h.size() / 2; i += 100) {
    double avg = 0.0;
    for (std::size_t j = i - 100; j < i; ++j) avg += h[j];
    avg /= 100.0;
    EXPECT_LE(avg, prev) << "window ending at " << i;
    prev = avg;
  }
}

TEST(FieldTraining, HoldoutSplitAndRecords) {
  const auto lib = lt::random_library("A", 4, 5, 8, 3, {1.0, 2.0}, 2);
  const PsfLibrary* libs[] = {&lib};
  FieldConfig c = small_config();
  c.lens_count = 1;
  TrainConfig t;
  t.iterations = 40;
  t.eval_every = 10;
  const auto r = field_train(libs, c, t);
  EXPECT_EQ(r.heldout_cells.size(), 4u);
  EXPECT_EQ(r.train_cells.size(), 36u);
  ASSERT_EQ(r.records.size(), 4u);
  EXPECT_EQ(r.records.back().iteration, 40);
  EXPECT_EQ(r.loss_history.size(), 40u);
  FieldConfig wrong = c;
  wrong.lens_count = 2;
  EXPECT_THROW(field_train(libs, wrong, t), ValidationError);
}

TEST(FieldPsfMap, RenormalizedAndDepthClamped) {
  FieldConfig c = small_config();
  const FieldModel m(c, 8);
  DepthMap cells(2, 2, 1e6f);
  const auto far = field_psf_map(m, cells, 1, 4, 4, 1, 1);
  cells.depth.assign(4, 10.0f);
  const auto at_max = field_psf_map(m, cells, 1, 4, 4, 1, 1);
  ASSERT_EQ(far.size(), 4u);
  for (std::size_t i = 0; i < far.size(); ++i) {
    EXPECT_EQ(far[i].data, at_max[i].data);
    for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(far[i].channel_sum(ch), 1.0, 1e-6);
  }
}

TEST(FieldFile, RoundTripIsBitExactAndCorruptionIsDetected) {
  lt::TempDir dir;
  FieldModel m(small_config(), 12);
  m.lens_ids = {"MOS-S1", "MOS-S2"};
  save_field(m, dir / "m.olf");
  EXPECT_EQ(std::filesystem::file_size(dir / "m.olf"), field_file_size(m));
  const auto back = load_field(dir / "m.olf");
  EXPECT_TRUE(back == m);
  EXPECT_EQ(back.lens_ids, m.lens_ids);
  const auto x = random_inputs(7, 3);
  EXPECT_EQ(back.forward(x), m.forward(x));

  auto bytes = encode_field(m);
  bytes[9] ^= 0x01;  // header byte
  EXPECT_THROW(decode_field(bytes), FormatError);
  bytes = encode_field(m);
  bytes.resize(bytes.size() - 10);
  EXPECT_THROW(decode_field(bytes), FormatError);
  bytes = encode_field(m);
  bytes[0] = 'Z';
  EXPECT_THROW(decode_field(bytes), FormatError);
}
