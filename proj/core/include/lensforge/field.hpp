#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lensforge/image.hpp"
#include "lensforge/psflib.hpp"

namespace lensforge {

enum class DepthNormalization {
  Linear,   // (d - d_min) / (d_max - d_min), clamped
  Inverse,  // 1 - d_min / d; infinity maps to 1
};

struct FieldConfig {
  int input_width = 512;
  int hidden_layers = 5;
  int hidden_width = 2048;
  int k = 41;
  int lens_count = 1;
  DepthNormalization depth_norm = DepthNormalization::Linear;
  double d_min = kMinDepth;
  double d_max = kMaxDepth;

  void validate() const;
  static FieldConfig full(int lens_count);
  static FieldConfig desk(int lens_count);
};

/// Normalized network inputs for one sample.
struct FieldInput {
  double h = 0.0;
  double w = 0.0;
  double d = 0.0;
  double lens = 0.0;
};

double normalize_depth(const FieldConfig& config, double depth_m);
double normalize_lens_index(int lens_index, int lens_count);
/// Normalized coordinate of patch `index` out of `count` (0 for a single patch).
double normalize_patch_index(int index, int count);

class FieldModel {
 public:
  using Matrix = Eigen::MatrixXd;
  using Vector = Eigen::VectorXd;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;
  };

  /// Every parameter `g` of a model-shaped gradient, in the same order as `parameters()`.
  struct Gradients {
    std::vector<Layer> layers;
    double loss = 0.0;
  };

  FieldModel() = default;
  /// He-uniform trunk, fan-in scaled heads with biases at the uniform-kernel logit; rounded to float32.
  FieldModel(const FieldConfig& config, std::uint64_t seed);
  static FieldModel zeros(const FieldConfig& config);

  const FieldConfig& config() const noexcept { return config_; }
  /// Trunk layers followed by the three heads.
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  std::size_t trunk_depth() const noexcept { return layers_.size() - 3; }
  std::size_t parameter_count() const;
  std::vector<std::string> lens_ids;  // optional labels, index = lens input

  /// Output columns: 3 k^2 values per sample, [channel][row][col], each in (0, 1).
  Matrix forward(const Matrix& inputs) const;
  PsfPatch forward(const FieldInput& input) const;

  /// Mean-squared error over all outputs of the batch, and its exact gradient.
  Gradients gradients(const Matrix& inputs, const Matrix& targets) const;
  double loss(const Matrix& inputs, const Matrix& targets) const;

  void round_to_float();
  bool operator==(const FieldModel& other) const;

 private:
  FieldConfig config_;
  std::vector<Layer> layers_;
};

/// Stack samples as columns: rows are (h, w, d, lens).
FieldModel::Matrix pack_inputs(std::span<const FieldInput> inputs);

struct TrainConfig {
  int iterations = 8000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double min_learning_rate = 0.0;  // cosine floor
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  double holdout_fraction = 0.1;
  int eval_every = 500;
  std::uint64_t seed = 1;

  static TrainConfig desk() { return {}; }
  static TrainConfig full() {
    TrainConfig t;
    t.iterations = 600000;
    t.learning_rate = 1e-4;
    t.eval_every = 10000;
    return t;
  }
};

/// One library cell addressed by (lens, depth, row, col).
struct FieldCell {
  int lens = 0;
  int depth = 0;
  int row = 0;
  int col = 0;
};

struct TrainRecord {
  int iteration = 0;
  double loss = 0.0;         // mean over the iterations since the previous record
  double train_psnr = 0.0;
  double heldout_psnr = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  FieldModel model;
  std::vector<double> loss_history;  // per iteration
  std::vector<TrainRecord> records;
  std::vector<FieldCell> train_cells;
  std::vector<FieldCell> heldout_cells;
  double final_train_psnr = 0.0;
  double final_heldout_psnr = 0.0;
};

/// Inputs and targets for a set of library cells.
struct FieldBatch {
  FieldModel::Matrix inputs;
  FieldModel::Matrix targets;
};
FieldBatch make_batch(const FieldConfig& config, std::span<const PsfLibrary* const> libs,
                      std::span<const FieldCell> cells);

/// PSNR with the peak taken as the largest target value.
double field_psnr(const FieldModel& model, const FieldBatch& batch);

using TrainCallback = std::function<void(const TrainRecord&)>;

/// AdamW with cosine annealing on uniformly sampled library cells.
TrainResult field_train(std::span<const PsfLibrary* const> libs, const FieldConfig& config,
                        const TrainConfig& train, const TrainCallback& on_record = {});
TrainResult field_train(std::span<const PsfLibrary* const> libs, FieldModel initial, const TrainConfig& train,
                        const TrainCallback& on_record = {});

/// One renormalized PSF per patch cell of `depth_cells` (patch-resolution depth).
std::vector<PsfPatch> field_psf_map(const FieldModel& model, const DepthMap& depth_cells, int lens_index,
                                    int n_h, int n_w, int row0 = 0, int col0 = 0);

std::vector<std::uint8_t> encode_field(const FieldModel& model);
FieldModel decode_field(std::span<const std::uint8_t> bytes);
void save_field(const FieldModel& model, const std::filesystem::path& path);
FieldModel load_field(const std::filesystem::path& path);
std::size_t field_file_size(const FieldModel& model);

}  // namespace lensforge
