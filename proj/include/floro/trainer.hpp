#pragma once

// AdamW, gradient accumulation over micro-batches, the staged batch and
// masking schedules, the pretraining loop, and checkpoint persistence.

#include <floro/masking.hpp>
#include <floro/net.hpp>
#include <floro/objective.hpp>
#include <floro/synthcorpus.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace floro {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.90;
  double beta2 = 0.95;
  double weight_decay = 0.01;
  double epsilon = 1e-8;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

template <typename S>
struct OptimizerState {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;
  AdamWConfig config;
  std::int64_t step = 0;
  std::vector<Array> m;  // parallel to the parameter list
  std::vector<Array> v;

  static OptimizerState init(const NamedTensors<S>& params, const AdamWConfig& config = {});
};

/// One decoupled-weight-decay Adam update of every parameter in place.
/// Throws NumericError (and changes nothing) if any gradient is non-finite.
template <typename S>
void adamw_step(NamedTensors<S>& params, const std::vector<Eigen::Array<S, Eigen::Dynamic, 1>>& grads,
                OptimizerState<S>& state);

struct BatchStage {
  Index start_epoch = 0;
  Index local_batch = 1;
  Index accumulation = 1;

  Index effective() const { return local_batch * accumulation; }
};

struct BatchSchedule {
  /// Desk-scale counterpart of the 16x4 / 22x3 / 32x2 schedule.
  std::vector<BatchStage> stages = {{0, 4, 4}, {50, 6, 3}, {100, 8, 2}};

  static BatchSchedule paper() { return {{{0, 16, 4}, {50, 22, 3}, {100, 32, 2}}}; }

  void validate() const;
  const BatchStage& at(Index epoch) const;
  BatchSchedule scaled_to(Index total_epochs, Index reference_epochs = 170) const;
};

struct TrainConfig {
  ModelConfig model;
  AdamWConfig optimizer;
  CurriculumSchedule curriculum;  // on the 170-epoch reference horizon
  BatchSchedule batches;          // on the 170-epoch reference horizon
  Index epochs = 30;
  Index reference_epochs = 170;
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  bool augment = true;
  AugmentConfig augmentation;
  double drop_probability = 0.1;
  bool use_geo = true;
};

struct StepLog {
  Index epoch = 0;
  Index step = 0;  // global optimizer step, 1-based
  double ratio = 0.0;
  Index samples = 0;
  LossBreakdown loss;
};

struct EpochSummary {
  Index epoch = 0;
  double ratio = 0.0;
  BatchStage stage;
  Index optimizer_steps = 0;
  double mean_total = 0.0;  // sample-weighted
};

struct StepContext {
  double ratio = 0.0;
  Index epoch = 0;
  std::uint64_t seed = 0;
  bool use_geo = true;
  LossWeights loss_weights;
};

/// Forward/backward over consecutive micro-batches of `samples`, averaging
/// gradients over all of them, then one AdamW update. `keys` seed the masks.
template <typename S>
StepLog accumulate_and_step(Model<S>& model, OptimizerState<S>& optimizer, std::span<const MultimodalSample> samples,
                            std::span<const std::uint64_t> keys, Index micro_batch, const StepContext& context);

// ----------------------------------------------------------------- checkpoints

struct NamedArray {
  std::string name;
  Shape shape;
  Eigen::ArrayXf values;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedArray> params;
  bool encoder_only = false;
  bool has_optimizer = false;
  AdamWConfig adam;
  std::int64_t optimizer_step = 0;
  std::vector<NamedArray> adam_m;  // parallel to params when has_optimizer
  std::vector<NamedArray> adam_v;
  Index epoch = 0;  // completed epochs
  Index global_step = 0;
  std::uint64_t seed = 0;

  const NamedArray* find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
Checkpoint make_checkpoint(const Model<S>& model, const OptimizerState<S>* optimizer, Index epoch, Index global_step,
                           std::uint64_t seed);

/// Drops decoder parameters and optimizer state.
Checkpoint encoder_only(const Checkpoint& full);

/// Throws IoError on unwritable paths.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws FormatError on bad magic/version/content and IoError on truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename S>
Model<S> restore_model(const Checkpoint& checkpoint);
template <typename S>
Encoder<S> restore_encoder(const Checkpoint& checkpoint);
template <typename S>
OptimizerState<S> restore_optimizer(const Checkpoint& checkpoint, const NamedTensors<S>& params);

// ----------------------------------------------------------------- training

template <typename S>
struct TrainResult {
  Model<S> model;
  OptimizerState<S> optimizer;
  std::vector<EpochSummary> epochs;
  std::vector<StepLog> steps;
  Index global_step = 0;
};

/// Per-epoch callback, e.g. for progress output.
using EpochCallback = std::function<void(const EpochSummary&)>;

/// Trains on the corpus train split. With a non-empty out_dir, appends to
/// out_dir/loss.csv and writes out_dir/epoch_NNN.ckpt after every epoch.
/// `resume` continues a run from a full checkpoint of the same config.
template <typename S>
TrainResult<S> train(const Corpus& corpus, const TrainConfig& config, const std::filesystem::path& out_dir = {},
                     const Checkpoint* resume = nullptr, const EpochCallback& on_epoch = {});

std::string loss_csv_header();
std::string loss_csv_line(const StepLog& log);

extern template struct OptimizerState<float>;
extern template struct OptimizerState<double>;

}  // namespace floro
