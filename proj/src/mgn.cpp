#include "meshode/mgn.hpp"

#include <string>

#include "meshode/errors.hpp"

namespace meshode {

OdeState mgn_step(const OdeState& z, double dt, const Dynamics& f, std::size_t step) {
  if (!(dt > 0.0)) throw ContractError("mgn_step: dt must be > 0");
  Tensor a = checked_accel(z, f, step);
  if (a.shape() != z.x.shape()) {
    throw DimensionError("mgn_step: acceleration of shape " + shape_str(a.shape()) +
                         " for state of shape " + shape_str(z.x.shape()));
  }
  if (f.free_mask) a = mul(a, *f.free_mask);
  const Tensor v_next = add(z.v, scale(a, dt));
  const Tensor dx = scale(f.free_mask ? mul(v_next, *f.free_mask) : v_next, dt);
  OdeState out{add(z.x, dx), v_next};
  if (!all_finite(out.x) || !all_finite(out.v)) {
    throw RolloutBlowupError("mgn_step: non-finite state at step " + std::to_string(step), step);
  }
  return out;
}

std::vector<OdeState> mgn_rollout(const OdeState& z0, double dt, std::size_t n_samples,
                                  const Dynamics& f) {
  std::vector<OdeState> out;
  out.reserve(n_samples + 1);
  out.push_back(z0);
  for (std::size_t k = 0; k < n_samples; ++k) out.push_back(mgn_step(out.back(), dt, f, k));
  return out;
}

std::vector<OneStepSample> mgn_one_step_targets(const Trajectory& traj, const Normalizer& norm) {
  if (traj.states.size() < 3) {
    throw ContractError("mgn_one_step_targets: trajectory has " +
                        std::to_string(traj.states.size()) + " samples, need at least 3");
  }
  const GraphContext ctx = make_graph_context(traj);
  const std::size_t n = traj.n_nodes(), dim = static_cast<std::size_t>(traj.dim());
  std::vector<OneStepSample> out;
  out.reserve(traj.states.size() - 1);
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    out.push_back({build_graph(traj.states[k], ctx),
                   norm.target.normalize(Tensor({n, dim}, fd_acceleration(traj, k)))});
  }
  return out;
}

}  // namespace meshode
