#pragma once

#include <vector>

#include "meshode/integrator.hpp"

namespace meshode {

// One autoregressive step: v+ = v + a dt, x+ = x + v+ dt (semi-implicit
// Euler). Masked components stay fixed. Throws RolloutBlowupError(step).
OdeState mgn_step(const OdeState& z, double dt, const Dynamics& f, std::size_t step = 0);

std::vector<OdeState> mgn_rollout(const OdeState& z0, double dt, std::size_t n_samples,
                                  const Dynamics& f);

struct OneStepSample {
  GraphFeatures graph;
  Tensor target;  // normalized acceleration, [n, dim]
};

// Supervision pairs (graph of state k, normalized inverse-update acceleration)
// for k = 0..n-2.
std::vector<OneStepSample> mgn_one_step_targets(const Trajectory& traj, const Normalizer& norm);

}  // namespace meshode
