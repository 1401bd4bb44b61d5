#pragma once

#include <span>
#include <vector>

#include "meshode/ops.hpp"
#include "meshode/physics.hpp"

namespace meshode {

// Everything about a mesh that stays fixed while its state evolves: directed
// edges, rest edge geometry, external load model and node types.
struct GraphContext {
  CaseKind kind = CaseKind::kRod;
  int dim = 2;
  std::size_t n_nodes = 0;
  double youngs_modulus = 0.0;
  // Undirected edge e expands to directed edges 2e (i -> j) and 2e+1 (j -> i).
  std::vector<Index> senders;
  std::vector<Index> receivers;
  std::vector<std::array<Index, 3>> stencils;  // rod turning-angle triples
  Tensor rest_edge;     // [n_directed, 1 + dim]: l0, d0
  Tensor body;          // [n, dim]
  Tensor neg_drag;      // [n, dim], -drag coefficient repeated per component
  Tensor youngs;        // [n, 1]
  Tensor node_type;     // [n, 2]: (1, 0) clamped, (0, 1) free
  Tensor free_mask;     // [n, dim]: 0 on clamped nodes, 1 elsewhere
  std::vector<NodeType> node_types;

  std::size_t n_edges() const { return senders.size(); }
  int node_dim() const;
  int edge_dim() const;
  bool has_clamped() const;
};

GraphContext make_graph_context(const CaseConfig& cfg, const RestGeometry& rest);
GraphContext make_graph_context(const Trajectory& traj);

int node_feature_dim(CaseKind kind);
int edge_feature_dim(CaseKind kind);

struct GraphFeatures {
  std::vector<Index> senders;
  std::vector<Index> receivers;
  Tensor node_features;  // [n, d_v]
  Tensor edge_features;  // [n_directed, d_e]
};

// Per directed edge s -> r: [|x_r - x_s|, x_r - x_s]. x is [n, dim].
Tensor edge_geometry(const Tensor& x, std::span<const Index> senders,
                     std::span<const Index> receivers);
// Per node (cos a, sin a) of the signed turning angle between the two
// adjacent segments; (1, 0) for nodes without a stencil. x is [n, 2].
Tensor turning_angles(const Tensor& x, std::span<const std::array<Index, 3>> stencils);

// Differentiable in x and v ([n, dim] each).
GraphFeatures build_graph(const Tensor& x, const Tensor& v, const GraphContext& ctx);
GraphFeatures build_graph(const MeshState& state, const GraphContext& ctx);

GraphFeatures build_rod_graph(const MeshState& state, const RestGeometry& rest,
                              const RodConfig& cfg);
GraphFeatures build_plate_graph(const MeshState& state, const RestGeometry& rest,
                                const PlateConfig& cfg);

Tensor positions_tensor(const MeshState& state, int dim);
Tensor velocities_tensor(const MeshState& state, int dim);

// Finite-difference acceleration between samples k and k+1:
// ((x_{k+1} - x_k) / dt - v_k) / dt, zero on clamped nodes. [n, dim].
std::vector<double> fd_acceleration(const Trajectory& traj, std::size_t k);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std;

  Tensor normalize(const Tensor& x) const;
  Tensor denormalize(const Tensor& x) const;
  std::size_t size() const { return mean.size(); }
};

struct Normalizer {
  static constexpr double kStdFloor = 1e-8;
  FeatureStats node;
  FeatureStats edge;
  FeatureStats target;
};

// Statistics over every state of every trajectory; targets use the
// finite-difference accelerations of free nodes.
Normalizer fit_normalizer(std::span<const Trajectory> train_set);

// Zero means and unit deviations.
Normalizer identity_normalizer(CaseKind kind);

}  // namespace meshode
