#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "mavos/data.hpp"
#include "mavos/network.hpp"

namespace mavos {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  NetworkConfig network;  // network.resolution is the square training size
  int batch_size = 16;
  double learning_rate = 1e-5;
  int steps = 1;
  double p_sod = 0.75;
  std::uint64_t seed = 0;
  bool freeze_norm = true;
  AdamConfig adam;
  // Image-only steps run before the collaborative phase (0 disables).
  int pretrain_sod_steps = 0;
  // 0 selects max(steps / 10, 1).
  int checkpoint_every = 0;
  // Where checkpoints and the loss log go; empty keeps everything in memory.
  std::filesystem::path out_dir;

  // Full-scale defaults: 384 px, batch 16, lr 1e-5.
  static TrainConfig full_scale();
  // Desk-scale defaults: 64 px, batch 8, lr 1e-3, 2000 steps.
  static TrainConfig desk_scale();
  void validate() const;
};

// Mean over pixels of -log softmax(logits)[label]. When dlogits is given it
// receives d(loss)/d(logits). Throws UsageError on a non-binary mask or a
// shape mismatch.
template <class T>
double cross_entropy_loss(const FeatureMap<T>& logits, const BinaryMask& mask, FeatureMap<T>* dlogits = nullptr);

template <class T>
struct AdamState {
  std::vector<T> m, v;
  std::int64_t step = 0;
};

// Which entries the optimiser may change: weights and biases always,
// normalisation affine parameters only when not frozen, running statistics
// never.
template <class T>
std::vector<bool> trainable_mask(const ParamStore<T>& params, bool freeze_norm);

// Loss and mean gradient of a batch without touching parameters.
template <class T>
double batch_loss_and_gradient(const Model<T>& model, const TrainingBatch& batch, std::vector<T>& grad);

struct StepOptions {
  double learning_rate = 1e-3;
  AdamConfig adam;
  bool freeze_norm = true;
  std::int64_t step_index = 0;
  double norm_momentum = 0.1;
};

// One adaptive-moment update on a prepared batch. Returns the batch loss.
// Throws NumericError when the loss is not finite.
template <class T>
double train_step(Model<T>& model, const TrainingBatch& batch, AdamState<T>& state, const StepOptions& options);

struct LossLogRow {
  int step;
  double loss;
  double sod_fraction;  // cumulative fraction of image-only samples
};

struct TrainResult {
  Model<float> model;
  std::vector<LossLogRow> log;
  std::filesystem::path final_checkpoint;  // empty when out_dir is empty
};

TrainResult train(const TrainConfig& cfg, const std::vector<Sequence>& vos, const std::vector<Sample>& sod,
                  const std::function<void(const LossLogRow&)>& on_step = {});

void write_loss_log(const std::vector<LossLogRow>& rows, const std::filesystem::path& path);

}  // namespace mavos
