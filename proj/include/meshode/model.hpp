#pragma once

#include <optional>
#include <string>

#include "meshode/gnn.hpp"
#include "meshode/integrator.hpp"

namespace meshode {

enum class ModelKind { kMeshOde, kMgn };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

// A trained surrogate: weights, feature statistics and the time stepping it
// was trained with.
struct Model {
  ModelKind kind = ModelKind::kMeshOde;
  GnnParams params;
  Normalizer norm;
  int substeps = 1;  // RK4 steps per sample (MeshODENet only)
};

struct Prediction {
  Trajectory traj;  // samples up to the last finite one
  std::optional<std::size_t> blowup_sample;

  bool ok() const { return !blowup_sample; }
};

// Rolls the model out from `initial` for n_samples samples of dt_sample(config).
Prediction predict_from(const Model& model, const CaseConfig& config, const RestGeometry& rest,
                        const MeshState& initial, std::size_t n_samples);

// Rolls the model out from the initial state of `truth` over n_samples
// samples (all of them when n_samples is 0) on the same time grid. Throws
// RolloutBlowupError when the rollout leaves the finite range.
Trajectory predict(const Model& model, const Trajectory& truth, std::size_t n_samples = 0);

}  // namespace meshode
