#include "lensforge/field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>
#include <tbb/parallel_for.h>

#include "lensforge/binary_io.hpp"
#include "lensforge/error.hpp"

namespace lensforge {
namespace {

constexpr char kMagic[4] = {'O', 'L', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

using Matrix = FieldModel::Matrix;
using Vector = FieldModel::Vector;

Matrix sigmoid(const Matrix& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

std::vector<int> layer_widths(const FieldConfig& c) {
  std::vector<int> w{4, c.input_width};
  for (int i = 0; i < c.hidden_layers; ++i) w.push_back(c.hidden_width);
  return w;
}

double round_f(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void FieldConfig::validate() const {
  if (input_width <= 0) throw ValidationError("input layer width must be positive");
  if (hidden_layers < 0) throw ValidationError("hidden layer count must be non-negative");
  if (hidden_layers > 0 && hidden_width <= 0) throw ValidationError("hidden layer width must be positive");
  if (k <= 0 || k % 2 == 0) throw ValidationError("PSF size k must be odd and positive");
  if (lens_count <= 0) throw ValidationError("lens count must be positive");
  if (!(d_min > 0.0 && d_max > d_min)) throw ValidationError("depth normalization range is invalid");
}

FieldConfig FieldConfig::full(int lens_count) {
  FieldConfig c;
  c.lens_count = lens_count;
  return c;
}

FieldConfig FieldConfig::desk(int lens_count) {
  FieldConfig c;
  c.input_width = 64;
  c.hidden_layers = 1;
  c.hidden_width = 64;
  c.k = 11;
  c.lens_count = lens_count;
  return c;
}

double normalize_depth(const FieldConfig& config, double depth_m) {
  if (!(depth_m > 0.0)) throw ValidationError("depth must be positive");
  double v = 0.0;
  switch (config.depth_norm) {
    case DepthNormalization::Linear:
      v = std::isinf(depth_m) ? 1.0 : (depth_m - config.d_min) / (config.d_max - config.d_min);
      break;
    case DepthNormalization::Inverse:
      v = std::isinf(depth_m) ? 1.0 : 1.0 - config.d_min / depth_m;
      break;
  }
  return std::clamp(v, 0.0, 1.0);
}

double normalize_lens_index(int lens_index, int lens_count) {
  if (lens_index < 0 || lens_index >= lens_count) throw ValidationError("lens index out of range");
  return lens_count > 1 ? static_cast<double>(lens_index) / (lens_count - 1) : 0.0;
}

double normalize_patch_index(int index, int count) {
  return count > 1 ? static_cast<double>(index) / (count - 1) : 0.0;
}

FieldModel::FieldModel(const FieldConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  std::mt19937_64 rng(seed);
  const auto widths = layer_widths(config);
  // ReLU layers use He-uniform weights and zero bias; head weights use the 1/sqrt(fan_in) range.
  auto make = [&](int in, int out, bool relu) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uw(-(relu ? std::sqrt(6.0) : 1.0) * inv, (relu ? std::sqrt(6.0) : 1.0) * inv);
    std::uniform_real_distribution<double> ub(-inv, inv);
    Layer l;
    l.weight.resize(out, in);
    l.bias.resize(out);
    for (int j = 0; j < in; ++j) {
      for (int i = 0; i < out; ++i) l.weight(i, j) = uw(rng);
    }
    for (int i = 0; i < out; ++i) l.bias(i) = relu ? 0.0 : ub(rng);
    return l;
  };
  for (std::size_t i = 1; i < widths.size(); ++i) layers_.push_back(make(widths[i - 1], widths[i], true));
  // Head biases start at the logit of a uniform unit-sum kernel.
  const double p0 = 1.0 / (config.k * config.k);
  for (int c = 0; c < 3; ++c) {
    layers_.push_back(make(widths.back(), config.k * config.k, false));
    layers_.back().bias.setConstant(std::log(p0 / (1.0 - p0)));
  }
  round_to_float();
}

FieldModel FieldModel::zeros(const FieldConfig& config) {
  FieldModel m(config, 0);
  for (auto& l : m.layers_) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return m;
}

std::size_t FieldModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

void FieldModel::round_to_float() {
  for (auto& l : layers_) {
    l.weight = l.weight.unaryExpr(&round_f);
    l.bias = l.bias.unaryExpr(&round_f);
  }
}

bool FieldModel::operator==(const FieldModel& o) const {
  if (layers_.size() != o.layers_.size() || lens_ids != o.lens_ids) return false;
  const auto& a = config_;
  const auto& b = o.config_;
  if (a.input_width != b.input_width || a.hidden_layers != b.hidden_layers || a.hidden_width != b.hidden_width ||
      a.k != b.k || a.lens_count != b.lens_count || a.depth_norm != b.depth_norm ||
      static_cast<float>(a.d_min) != static_cast<float>(b.d_min) ||
      static_cast<float>(a.d_max) != static_cast<float>(b.d_max)) {
    return false;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].weight != o.layers_[i].weight || layers_[i].bias != o.layers_[i].bias) return false;
  }
  return true;
}

Matrix pack_inputs(std::span<const FieldInput> inputs) {
  Matrix x(4, static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    x(0, i) = inputs[i].h;
    x(1, i) = inputs[i].w;
    x(2, i) = inputs[i].d;
    x(3, i) = inputs[i].lens;
  }
  return x;
}

Matrix FieldModel::forward(const Matrix& inputs) const {
  if (inputs.rows() != 4) throw ValidationError("field inputs must have 4 rows");
  Matrix a = inputs;
  const std::size_t trunk = trunk_depth();
  for (std::size_t l = 0; l < trunk; ++l) {
    a = ((layers_[l].weight * a).colwise() + layers_[l].bias).cwiseMax(0.0);
  }
  const Eigen::Index kk = static_cast<Eigen::Index>(config_.k) * config_.k;
  Matrix out(3 * kk, inputs.cols());
  for (int c = 0; c < 3; ++c) {
    const Layer& h = layers_[trunk + c];
    out.middleRows(c * kk, kk) = sigmoid((h.weight * a).colwise() + h.bias);
  }
  return out;
}

PsfPatch FieldModel::forward(const FieldInput& input) const {
  const Matrix y = forward(pack_inputs({&input, 1}));
  PsfPatch p(config_.k, 0.0);
  for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = static_cast<float>(y(static_cast<Eigen::Index>(i), 0));
  return p;
}

FieldModel::Gradients FieldModel::gradients(const Matrix& inputs, const Matrix& targets) const {
  if (inputs.cols() == 0) throw ValidationError("gradient batch is empty");
  const std::size_t trunk = trunk_depth();
  const Eigen::Index kk = static_cast<Eigen::Index>(config_.k) * config_.k;
  if (targets.rows() != 3 * kk || targets.cols() != inputs.cols()) {
    throw ValidationError("target matrix shape does not match the model");
  }
  // Forward pass keeping pre-activations.
  std::vector<Matrix> acts{inputs};
  std::vector<Matrix> pre;
  for (std::size_t l = 0; l < trunk; ++l) {
    pre.push_back((layers_[l].weight * acts.back()).colwise() + layers_[l].bias);
    acts.push_back(pre.back().cwiseMax(0.0));
  }
  const Matrix& top = acts.back();
  Matrix y(3 * kk, inputs.cols());
  for (int c = 0; c < 3; ++c) {
    const Layer& h = layers_[trunk + c];
    y.middleRows(c * kk, kk) = sigmoid((h.weight * top).colwise() + h.bias);
  }
  const Matrix diff = y - targets;
  const double n = static_cast<double>(diff.size());

  Gradients g;
  g.loss = diff.squaredNorm() / n;
  g.layers.resize(layers_.size());
  // dL/dz at the heads: 2 (y - t) / n * y (1 - y).
  const Matrix dz_out = (2.0 / n) * diff.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  Matrix da = Matrix::Zero(top.rows(), top.cols());
  for (int c = 0; c < 3; ++c) {
    const auto dz = dz_out.middleRows(c * kk, kk);
    g.layers[trunk + c].weight = dz * top.transpose();
    g.layers[trunk + c].bias = dz.rowwise().sum();
    da.noalias() += layers_[trunk + c].weight.transpose() * dz;
  }
  for (std::size_t l = trunk; l-- > 0;) {
    const Matrix dz = da.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    g.layers[l].weight = dz * acts[l].transpose();
    g.layers[l].bias = dz.rowwise().sum();
    if (l > 0) da = layers_[l].weight.transpose() * dz;
  }
  return g;
}

double FieldModel::loss(const Matrix& inputs, const Matrix& targets) const {
  return (forward(inputs) - targets).squaredNorm() / static_cast<double>(targets.size());
}

FieldBatch make_batch(const FieldConfig& config, std::span<const PsfLibrary* const> libs,
                      std::span<const FieldCell> cells) {
  const Eigen::Index kk = static_cast<Eigen::Index>(config.k) * config.k;
  FieldBatch b;
  b.inputs.resize(4, static_cast<Eigen::Index>(cells.size()));
  b.targets.resize(3 * kk, static_cast<Eigen::Index>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const FieldCell& c = cells[i];
    const PsfLibrary& lib = *libs[c.lens];
    b.inputs(0, i) = normalize_patch_index(c.row, lib.n_h());
    b.inputs(1, i) = normalize_patch_index(c.col, lib.n_w());
    b.inputs(2, i) = normalize_depth(config, lib.depths()[c.depth]);
    b.inputs(3, i) = normalize_lens_index(c.lens, config.lens_count);
    const auto p = lib.patch(c.depth, c.row, c.col);
    for (Eigen::Index j = 0; j < 3 * kk; ++j) b.targets(j, i) = p[j];
  }
  return b;
}

double field_psnr(const FieldModel& model, const FieldBatch& batch) {
  if (batch.targets.size() == 0) return 0.0;
  double se = 0.0;
  // Chunked to bound memory on large evaluation sets.
  constexpr Eigen::Index chunk = 512;
  for (Eigen::Index c0 = 0; c0 < batch.inputs.cols(); c0 += chunk) {
    const Eigen::Index n = std::min(chunk, batch.inputs.cols() - c0);
    se += (model.forward(batch.inputs.middleCols(c0, n)) - batch.targets.middleCols(c0, n)).squaredNorm();
  }
  const double mse = se / static_cast<double>(batch.targets.size());
  const double peak = batch.targets.maxCoeff();
  return 10.0 * std::log10(peak * peak / mse);
}

TrainResult field_train(std::span<const PsfLibrary* const> libs, const FieldConfig& config, const TrainConfig& train,
                        const TrainCallback& on_record) {
  return field_train(libs, FieldModel(config, train.seed), train, on_record);
}

TrainResult field_train(std::span<const PsfLibrary* const> libs, FieldModel initial, const TrainConfig& train,
                        const TrainCallback& on_record) {
  const FieldConfig& config = initial.config();
  if (libs.empty()) throw ValidationError("no PSF libraries to fit");
  if (static_cast<int>(libs.size()) != config.lens_count) {
    throw ValidationError("lens count in the field config does not match the number of libraries");
  }
  for (const auto* lib : libs) {
    if (lib->k() != config.k) throw ValidationError("library k does not match the field config");
  }
  if (train.iterations < 0 || train.batch_size <= 0) throw ValidationError("invalid training schedule");
  if (!(train.holdout_fraction >= 0.0 && train.holdout_fraction < 1.0)) {
    throw ValidationError("held-out fraction must lie in [0, 1)");
  }

  std::vector<FieldCell> cells;
  for (int l = 0; l < static_cast<int>(libs.size()); ++l) {
    for (int d = 0; d < static_cast<int>(libs[l]->depth_count()); ++d) {
      for (int r = 0; r < libs[l]->n_h(); ++r) {
        for (int c = 0; c < libs[l]->n_w(); ++c) cells.push_back({l, d, r, c});
      }
    }
  }
  std::mt19937_64 rng(train.seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(cells.begin(), cells.end(), rng);
  std::size_t n_hold = static_cast<std::size_t>(std::lround(train.holdout_fraction * cells.size()));
  if (train.holdout_fraction > 0.0 && n_hold == 0 && cells.size() > 1) n_hold = 1;
  TrainResult result;
  result.heldout_cells.assign(cells.begin(), cells.begin() + n_hold);
  result.train_cells.assign(cells.begin() + n_hold, cells.end());
  std::sort(result.heldout_cells.begin(), result.heldout_cells.end(), [](const FieldCell& a, const FieldCell& b) {
    return std::tie(a.lens, a.depth, a.row, a.col) < std::tie(b.lens, b.depth, b.row, b.col);
  });
  const FieldBatch train_all = make_batch(config, libs, result.train_cells);
  const FieldBatch held_all = make_batch(config, libs, result.heldout_cells);

  FieldModel model = std::move(initial);
  auto& layers = model.layers();
  std::vector<FieldModel::Layer> m1(layers.size());
  std::vector<FieldModel::Layer> m2(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    m1[i].weight = Matrix::Zero(layers[i].weight.rows(), layers[i].weight.cols());
    m1[i].bias = Vector::Zero(layers[i].bias.size());
    m2[i] = m1[i];
  }

  std::uniform_int_distribution<std::size_t> pick(0, result.train_cells.size() - 1);
  const Eigen::Index kk3 = train_all.targets.rows();
  Matrix xb(4, train.batch_size);
  Matrix tb(kk3, train.batch_size);
  double window_loss = 0.0;
  int window_n = 0;
  auto record = [&](int it, double lr) {
    TrainRecord rec;
    rec.iteration = it;
    rec.loss = window_n ? window_loss / window_n : model.loss(train_all.inputs, train_all.targets);
    rec.train_psnr = field_psnr(model, train_all);
    rec.heldout_psnr = held_all.inputs.cols() ? field_psnr(model, held_all) : 0.0;
    rec.learning_rate = lr;
    result.records.push_back(rec);
    if (on_record) on_record(rec);
    window_loss = 0.0;
    window_n = 0;
  };

  result.loss_history.reserve(train.iterations);
  for (int it = 0; it < train.iterations; ++it) {
    const double lr = train.min_learning_rate + 0.5 * (train.learning_rate - train.min_learning_rate) *
                                                    (1.0 + std::cos(std::numbers::pi * it / train.iterations));
    for (int b = 0; b < train.batch_size; ++b) {
      const std::size_t j = pick(rng);
      xb.col(b) = train_all.inputs.col(static_cast<Eigen::Index>(j));
      tb.col(b) = train_all.targets.col(static_cast<Eigen::Index>(j));
    }
    const auto g = model.gradients(xb, tb);
    if (!std::isfinite(g.loss)) {
      throw Error("field training diverged at iteration " + std::to_string(it) + " (loss " +
                  std::to_string(g.loss) + ", learning rate " + std::to_string(lr) + ")");
    }
    result.loss_history.push_back(g.loss);
    window_loss += g.loss;
    ++window_n;

    const double t = it + 1.0;
    const double c1 = 1.0 - std::pow(train.beta1, t);
    const double c2 = 1.0 - std::pow(train.beta2, t);
    auto step = [&](auto& p, auto& mm, auto& vv, const auto& grad) {
      mm = train.beta1 * mm + (1.0 - train.beta1) * grad;
      vv = train.beta2 * vv + (1.0 - train.beta2) * grad.cwiseProduct(grad);
      p *= (1.0 - lr * train.weight_decay);
      p.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + train.epsilon);
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
      step(layers[i].weight, m1[i].weight, m2[i].weight, g.layers[i].weight);
      step(layers[i].bias, m1[i].bias, m2[i].bias, g.layers[i].bias);
    }
    model.round_to_float();
    if (train.eval_every > 0 && (it + 1) % train.eval_every == 0) record(it + 1, lr);
  }
  if (result.records.empty() || result.records.back().iteration != train.iterations) record(train.iterations, 0.0);
  result.final_train_psnr = result.records.back().train_psnr;
  result.final_heldout_psnr = result.records.back().heldout_psnr;
  result.model = std::move(model);
  return result;
}

std::vector<PsfPatch> field_psf_map(const FieldModel& model, const DepthMap& depth_cells, int lens_index, int n_h,
                                    int n_w, int row0, int col0) {
  const FieldConfig& config = model.config();
  const int rows = depth_cells.height;
  const int cols = depth_cells.width;
  std::vector<FieldInput> inputs(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      FieldInput& in = inputs[static_cast<std::size_t>(r) * cols + c];
      in.h = normalize_patch_index(row0 + r, n_h);
      in.w = normalize_patch_index(col0 + c, n_w);
      in.d = normalize_depth(config, depth_cells.at(r, c));
      in.lens = normalize_lens_index(lens_index, config.lens_count);
    }
  }
  const Matrix y = model.forward(pack_inputs(inputs));
  std::vector<PsfPatch> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    PsfPatch p(config.k, 0.0);
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      p.data[j] = static_cast<float>(y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
    }
    p.normalize();
    out[i] = std::move(p);
  }
  return out;
}

std::vector<std::uint8_t> encode_field(const FieldModel& model) {
  const FieldConfig& c = model.config();
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(c.input_width));
  w.u32(static_cast<std::uint32_t>(c.hidden_layers));
  w.u32(static_cast<std::uint32_t>(c.hidden_width));
  w.u32(static_cast<std::uint32_t>(c.k));
  w.u32(static_cast<std::uint32_t>(c.lens_count));
  w.u32(c.depth_norm == DepthNormalization::Linear ? 0u : 1u);
  w.f32(static_cast<float>(c.d_min));
  w.f32(static_cast<float>(c.d_max));
  w.u32(static_cast<std::uint32_t>(model.lens_ids.size()));
  for (const auto& id : model.lens_ids) w.str(id);
  for (const auto& l : model.layers()) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) w.f32(static_cast<float>(l.weight(i, j)));
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) w.f32(static_cast<float>(l.bias(i)));
  }
  w.finish_with_crc();
  return w.take();
}

FieldModel decode_field(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::Magic, "not an OLF1 model file");
  }
  const auto payload = verify_crc_trailer(bytes, 8);
  ByteReader r(payload);
  char magic[4];
  r.bytes(magic, 4);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError(FormatError::Kind::Version, "unsupported OLF1 version");
  FieldConfig c;
  c.input_width = static_cast<int>(r.u32());
  c.hidden_layers = static_cast<int>(r.u32());
  c.hidden_width = static_cast<int>(r.u32());
  c.k = static_cast<int>(r.u32());
  c.lens_count = static_cast<int>(r.u32());
  const std::uint32_t norm = r.u32();
  c.d_min = r.f32();
  c.d_max = r.f32();
  if (norm > 1 || c.input_width <= 0 || c.input_width > (1 << 16) || c.hidden_layers < 0 || c.hidden_layers > 64 ||
      c.hidden_width < 0 || c.hidden_width > (1 << 16) || c.k <= 0 || c.k > 1023 || c.lens_count <= 0 ||
      c.lens_count > (1 << 16)) {
    throw FormatError(FormatError::Kind::Dimensions, "OLF1 dimensions out of range");
  }
  c.depth_norm = norm == 0 ? DepthNormalization::Linear : DepthNormalization::Inverse;
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw FormatError(FormatError::Kind::Dimensions, std::string("OLF1 header: ") + e.what());
  }
  const std::uint32_t n_ids = r.u32();
  if (n_ids > static_cast<std::uint32_t>(c.lens_count)) {
    throw FormatError(FormatError::Kind::Dimensions, "more lens ids than lenses");
  }
  std::vector<std::string> ids;
  for (std::uint32_t i = 0; i < n_ids; ++i) ids.push_back(r.str());
  FieldModel model = FieldModel::zeros(c);
  if (r.remaining() != model.parameter_count() * 4) {
    throw FormatError(FormatError::Kind::Dimensions, "OLF1 weight block does not match its dimensions");
  }
  for (auto& l : model.layers()) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = r.f32();
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = r.f32();
  }
  model.lens_ids = std::move(ids);
  return model;
}

void save_field(const FieldModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_field(model));
}

FieldModel load_field(const std::filesystem::path& path) { return decode_field(read_file_bytes(path)); }

std::size_t field_file_size(const FieldModel& model) {
  std::size_t header = 4 + 4 + 6 * 4 + 2 * 4 + 4;
  for (const auto& id : model.lens_ids) header += 4 + id.size();
  return header + model.parameter_count() * 4 + 4;
}

}  // namespace lensforge
