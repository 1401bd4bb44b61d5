#include "meshode/model.hpp"

#include "meshode/errors.hpp"
#include "meshode/mgn.hpp"

namespace meshode {

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kMeshOde ? "meshode" : "mgn";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "meshode") return ModelKind::kMeshOde;
  if (s == "mgn") return ModelKind::kMgn;
  throw ConfigError("unknown model kind '" + s + "' (expected meshode or mgn)");
}

Prediction predict_from(const Model& model, const CaseConfig& config, const RestGeometry& rest,
                        const MeshState& initial, std::size_t n_samples) {
  if (model.params.config.out_dim != rest.dim) {
    throw SchemaError("predict: model predicts " + std::to_string(model.params.config.out_dim) +
                      "-D accelerations for a " + std::to_string(rest.dim) + "-D mesh");
  }
  if (model.params.config.node_in != node_feature_dim(case_kind(config)) ||
      model.params.config.edge_in != edge_feature_dim(case_kind(config))) {
    throw SchemaError(std::string("predict: model feature widths do not match the ") +
                      case_name(case_kind(config)) + " case");
  }
  const GraphContext ctx = make_graph_context(config, rest);
  const Dynamics f = gnn_dynamics(ctx, model.params.config, model.params.tensors, model.norm);
  const double dt = dt_sample(config);
  const int substeps = model.kind == ModelKind::kMeshOde ? model.substeps : 1;
  if (substeps < 1) throw ConfigError("predict: substeps must be >= 1");
  Prediction out{Trajectory{config, rest, {initial}}, std::nullopt};
  out.traj.states.reserve(n_samples + 1);
  OdeState z = to_ode_state(initial, rest.dim);
  std::size_t step = 0;
  try {
    for (std::size_t k = 1; k <= n_samples; ++k) {
      if (model.kind == ModelKind::kMeshOde) {
        for (int s = 0; s < substeps; ++s) z = rk4_step(z, dt / substeps, f, step++);
      } else {
        z = mgn_step(z, dt, f, step++);
      }
      out.traj.states.push_back(to_mesh_state(z, static_cast<double>(k) * dt));
    }
  } catch (const RolloutBlowupError&) {
    out.blowup_sample = out.traj.states.size();
  }
  return out;
}

Trajectory predict(const Model& model, const Trajectory& truth, std::size_t n_samples) {
  if (truth.states.empty()) throw ContractError("predict: empty trajectory");
  const std::size_t horizon = truth.states.size() - 1;
  if (n_samples == 0 || n_samples > horizon) n_samples = horizon;
  Prediction p = predict_from(model, truth.config, truth.rest, truth.states[0], n_samples);
  if (!p.ok()) {
    throw RolloutBlowupError("predict: non-finite state at sample " +
                                 std::to_string(*p.blowup_sample),
                             *p.blowup_sample);
  }
  return std::move(p.traj);
}

}  // namespace meshode
