#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fscn/data.hpp"
#include "fscn/loss.hpp"
#include "fscn/model.hpp"

namespace fscn {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 1e-2;

  void validate() const;
  bool operator==(const AdamWParams&) const = default;
};

template <typename T>
struct OptimState {
  AdamWParams hyper;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

template <typename T>
OptimState<T> make_optim_state(std::span<const ParamRef<T>> params, const AdamWParams& hyper);

/// One decoupled-weight-decay Adam update using each parameter's grad
/// buffer. Weight decay applies to ParamKind::kWeight only. Throws
/// NonFiniteError (naming the parameter) before touching anything if a
/// gradient is NaN or infinite.
template <typename T>
void adamw_step(std::span<const ParamRef<T>> params, OptimState<T>& state, double lr);

/// Polynomial decay, power 0.9, from lr0 down to lr0 / 10 at total_steps.
double lr_at(std::int64_t step, double lr0, std::int64_t total_steps);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 8;
  double lr0 = 1e-4;
  /// 0 derives the step budget from epochs and dataset size.
  std::int64_t total_steps = 0;
  std::uint64_t seed = 0;
  LossParams loss;
  AdamWParams optimizer;
  /// 0 writes only the final checkpoint.
  int checkpoint_every = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct LossRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

/// Serialisable snapshot of a training run.
struct Checkpoint {
  std::string config_json;
  std::int64_t step = 0;
  std::vector<std::vector<float>> params;  // declaration order
  OptimState<float> optim;
  std::string rng_state;
  std::vector<std::uint64_t> order;  // current epoch permutation
  std::uint64_t cursor = 0;          // next position in order
};

/// Deterministic trainer: data order, augmentation draws and the update
/// sequence depend only on the seed and the starting checkpoint.
class Trainer {
 public:
  Trainer(FscnModel<float> model, std::vector<DepthSample> dataset, TrainConfig config,
          AugmentConfig augment, double depth_cap_m, std::string config_json = "{}");

  /// Restores model, optimizer, data cursor and rng from ckpt.
  void restore(const Checkpoint& ckpt);

  std::int64_t step() const { return step_; }
  std::int64_t total_steps() const { return total_steps_; }
  std::int64_t steps_per_epoch() const;

  LossRecord train_step();

  using CheckpointSink = std::function<void(const Checkpoint&)>;
  /// Trains until total_steps (or `until` when smaller). Calls sink every
  /// checkpoint_every steps and once at the end. A non-finite loss throws
  /// NonFiniteError without emitting a checkpoint for that step.
  const std::vector<LossRecord>& run(std::int64_t until = -1, const CheckpointSink& sink = {});

  Checkpoint checkpoint() const;

  FscnModel<float>& model() { return model_; }
  const FscnModel<float>& model() const { return model_; }
  const std::vector<LossRecord>& log() const { return log_; }

 private:
  std::vector<std::size_t> next_batch_indices();

  FscnModel<float> model_;
  std::vector<ParamRef<float>> params_;
  std::vector<DepthSample> dataset_;
  TrainConfig config_;
  AugmentConfig augment_;
  double depth_cap_m_;
  std::string config_json_;
  OptimState<float> optim_;
  std::mt19937_64 rng_;
  std::vector<std::uint64_t> order_;
  std::uint64_t cursor_ = 0;
  std::int64_t step_ = 0;
  std::int64_t total_steps_ = 0;
  std::vector<LossRecord> log_;
};

/// Runs predictions for every sample and returns per-sample metrics. Samples
/// larger than the model input are centre-cropped to it.
std::vector<MetricsReport> evaluate(const FscnModel<float>& model,
                                    std::span<const DepthSample> samples, double depth_cap_m,
                                    int batch_size = 4);

/// Model prediction for a single (1,3,H,W) image as (1,1,H,W).
Tensor<float> predict(const FscnModel<float>& model, const Tensor<float>& rgb);

}  // namespace fscn
