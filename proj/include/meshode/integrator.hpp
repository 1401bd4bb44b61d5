#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "meshode/gnn.hpp"

namespace meshode {

// Augmented state z = [x, v], both [n, dim]. May live on a tape.
struct OdeState {
  Tensor x;
  Tensor v;
};

using AccelFn = std::function<Tensor(const Tensor& x, const Tensor& v)>;

struct Dynamics {
  AccelFn accel;
  // [n, dim] 0/1 mask; masked components get zero rates.
  std::optional<Tensor> free_mask;
};

struct OdeConfig {
  double dt_sample = 0.1;
  int substeps = 1;
  std::size_t n_samples = 0;

  double dt_solver() const { return dt_sample / substeps; }
  void validate() const;
};

// dz/dt = [v, a(x, v)].
OdeState derivative(const OdeState& z, const Dynamics& f);

// f.accel(z), with a collapsed mesh edge reported as RolloutBlowupError(step).
Tensor checked_accel(const OdeState& z, const Dynamics& f, std::size_t step);

// Classical RK4. Throws RolloutBlowupError(step) on a non-finite stage.
OdeState rk4_step(const OdeState& z, double dt, const Dynamics& f, std::size_t step = 0);

// States at k * dt_sample for k = 0..n_samples; substeps RK4 steps per sample.
std::vector<OdeState> rollout(const OdeState& z0, const OdeConfig& cfg, const Dynamics& f);

// The learned vector field. The graph is rebuilt from every state it is
// evaluated at. `params` and `norm` must outlive the returned object.
Dynamics gnn_dynamics(const GraphContext& ctx, const GnnConfig& cfg,
                      std::span<const Tensor> params, const Normalizer& norm);

OdeState to_ode_state(const MeshState& s, int dim);
MeshState to_mesh_state(const OdeState& z, double t);

// Untaped copy of a rollout as a trajectory on the sample grid.
Trajectory to_trajectory(std::span<const OdeState> states, const CaseConfig& config,
                         const RestGeometry& rest, double dt_sample);

bool all_finite(const Tensor& t);

}  // namespace meshode
