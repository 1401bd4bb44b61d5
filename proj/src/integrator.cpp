#include "meshode/integrator.hpp"

#include <cmath>
#include <string>

#include "meshode/errors.hpp"

namespace meshode {

void OdeConfig::validate() const {
  if (!(dt_sample > 0.0)) throw ConfigError("ode: dt_sample must be > 0");
  if (substeps < 1) throw ConfigError("ode: substeps must be >= 1");
}

bool all_finite(const Tensor& t) {
  for (double x : t.data()) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tensor checked_accel(const OdeState& z, const Dynamics& f, std::size_t step) {
  try {
    return f.accel(z.x, z.v);
  } catch (const DegenerateEdgeError& e) {
    // A rollout that collapses an edge has left the physical range.
    throw RolloutBlowupError(std::string("degenerate mesh at step ") + std::to_string(step) +
                                 ": " + e.what(),
                             step);
  }
}

OdeState derivative(const OdeState& z, const Dynamics& f) {
  Tensor a = f.accel(z.x, z.v);
  if (a.shape() != z.x.shape()) {
    throw DimensionError("derivative: acceleration of shape " + shape_str(a.shape()) +
                         " for state of shape " + shape_str(z.x.shape()));
  }
  if (f.free_mask) return {mul(z.v, *f.free_mask), mul(a, *f.free_mask)};
  return {z.v, a};
}

OdeState rk4_step(const OdeState& z, double dt, const Dynamics& f, std::size_t step) {
  if (!(dt > 0.0)) throw ContractError("rk4_step: dt must be > 0");
  auto checked = [&](const OdeState& s, int stage) {
    Dynamics guarded{[&](const Tensor& x, const Tensor& v) {
                       return checked_accel(OdeState{x, v}, f, step);
                     },
                     f.free_mask};
    OdeState k = derivative(s, guarded);
    if (!all_finite(k.x) || !all_finite(k.v)) {
      throw RolloutBlowupError("rk4_step: non-finite derivative in stage " +
                                   std::to_string(stage) + " of step " + std::to_string(step),
                               step);
    }
    return k;
  };
  auto advance = [&](const OdeState& k, double h) {
    return OdeState{add(z.x, scale(k.x, h)), add(z.v, scale(k.v, h))};
  };
  const OdeState k1 = checked(z, 1);
  const OdeState k2 = checked(advance(k1, 0.5 * dt), 2);
  const OdeState k3 = checked(advance(k2, 0.5 * dt), 3);
  const OdeState k4 = checked(advance(k3, dt), 4);
  auto combine = [&](const Tensor& base, const Tensor& a, const Tensor& b, const Tensor& c,
                     const Tensor& d) {
    return add(base, scale(add(add(a, scale(add(b, c), 2.0)), d), dt / 6.0));
  };
  OdeState out{combine(z.x, k1.x, k2.x, k3.x, k4.x), combine(z.v, k1.v, k2.v, k3.v, k4.v)};
  if (!all_finite(out.x) || !all_finite(out.v)) {
    throw RolloutBlowupError("rk4_step: non-finite state after step " + std::to_string(step),
                             step);
  }
  return out;
}

std::vector<OdeState> rollout(const OdeState& z0, const OdeConfig& cfg, const Dynamics& f) {
  cfg.validate();
  std::vector<OdeState> out;
  out.reserve(cfg.n_samples + 1);
  out.push_back(z0);
  OdeState z = z0;
  const double dt = cfg.dt_solver();
  std::size_t step = 0;
  for (std::size_t k = 1; k <= cfg.n_samples; ++k) {
    for (int s = 0; s < cfg.substeps; ++s) z = rk4_step(z, dt, f, step++);
    out.push_back(z);
  }
  return out;
}

Dynamics gnn_dynamics(const GraphContext& ctx, const GnnConfig& cfg,
                      std::span<const Tensor> params, const Normalizer& norm) {
  Dynamics d;
  d.accel = [ctx, cfg, params, &norm](const Tensor& x, const Tensor& v) {
    return gnn_forward(build_graph(x, v, ctx), ctx, cfg, params, norm);
  };
  if (ctx.has_clamped()) d.free_mask = ctx.free_mask;
  return d;
}

OdeState to_ode_state(const MeshState& s, int dim) {
  return {positions_tensor(s, dim), velocities_tensor(s, dim)};
}

MeshState to_mesh_state(const OdeState& z, double t) {
  return {t, std::vector<double>(z.x.data().begin(), z.x.data().end()),
          std::vector<double>(z.v.data().begin(), z.v.data().end())};
}

Trajectory to_trajectory(std::span<const OdeState> states, const CaseConfig& config,
                         const RestGeometry& rest, double dt_sample) {
  Trajectory traj{config, rest, {}};
  traj.states.reserve(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    traj.states.push_back(to_mesh_state(states[k], static_cast<double>(k) * dt_sample));
  }
  return traj;
}

}  // namespace meshode
