#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "meshode/model.hpp"

namespace meshode {

enum class LossMode { kPerNodeMean, kRawSum };

struct TrainConfig {
  ModelKind model = ModelKind::kMeshOde;
  CaseKind case_kind = CaseKind::kRod;
  int epochs = 400;
  double lr0 = 1e-4;
  double lr_decay_factor = 10.0;
  std::vector<int> lr_decay_epochs{100, 200, 300};
  double weight_decay = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Trajectories per optimizer step (meshode) or one-step pairs per
  // minibatch (mgn).
  int batch_size = 1;
  // Samples per training rollout; 0 means the full trajectory. Shorter
  // segments start at a random sample of the trajectory.
  std::size_t rollout_length = 0;
  int substeps = 1;
  std::uint64_t seed = 0;
  int hidden = 128;
  int layers = 1;
  bool residual = true;
  LossMode loss_mode = LossMode::kPerNodeMean;
  // Gaussian noise on mgn input positions, in metres; 0 disables it.
  double noise_std = 0.0;
  // Evaluate every this many epochs (and after the last); 0 disables.
  int eval_every = 1;
  // Fraction of skipped samples in one epoch above which training aborts.
  double max_skip_fraction = 0.1;

  void validate() const;
  GnnConfig gnn() const;
};

// Defaults for each model and case: 400 epochs with decay every 100 for the
// rod, 600 epochs with decay at 200 and 400 for the plate; one message
// passing layer for meshode, 15 (rod) or 30 (plate) for mgn.
TrainConfig default_train_config(ModelKind model, CaseKind kind);

// Learning rate during a zero-based epoch.
double learning_rate(const TrainConfig& cfg, int epoch);

// Mean over samples j = 1..N_p of the per-node mean squared position error
// (or the summed squared error in raw mode). Taped when the inputs are.
Tensor trajectory_loss(std::span<const Tensor> predicted, std::span<const Tensor> truth,
                       LossMode mode = LossMode::kPerNodeMean);
double trajectory_loss(const Trajectory& predicted, const Trajectory& truth,
                       LossMode mode = LossMode::kPerNodeMean);

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState zeros(std::span<const Tensor> params);
};

// theta <- theta * (1 - lr * wd), then one Adam step with bias correction.
void adam_update(std::vector<Tensor>& theta, std::span<const std::vector<double>> grads,
                 AdamState& state, double lr, const TrainConfig& cfg);

struct Checkpoint {
  TrainConfig train;
  Model model;
  AdamState adam;
  int epochs_completed = 0;
};

struct EpochRecord {
  int epoch = 0;  // one-based
  double lr = 0.0;
  double train_loss = 0.0;
  double eval_loss = 0.0;  // NaN when not evaluated
  std::size_t samples = 0;
  std::size_t skipped = 0;
  double seconds = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Fits the normalizer on train_set, initializes from cfg.seed and trains.
// Throws TrainingAbort when too many samples blow up in one epoch.
TrainResult train(const TrainConfig& cfg, std::span<const Trajectory> train_set,
                  std::span<const Trajectory> eval_set, const EpochCallback& on_epoch = {});

// Loss of a model on a data set: mean rollout loss (meshode) or mean
// one-step normalized acceleration loss (mgn). Blown-up rollouts give inf.
double evaluate_loss(const Model& model, const TrainConfig& cfg,
                     std::span<const Trajectory> data);

void write_loss_csv(std::ostream& os, std::span<const EpochRecord> history);

}  // namespace meshode
