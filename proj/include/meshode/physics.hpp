#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace meshode {

using Index = std::int32_t;

enum class CaseKind : std::uint32_t { kRod = 0, kPlate = 1 };
enum class NodeType : std::uint8_t { kFree = 0, kClamped = 1 };

const char* case_name(CaseKind kind);
CaseKind parse_case(const std::string& name);

// Straight rod sinking in a viscous fluid, simulated in the vertical plane.
struct RodConfig {
  double length = 0.10;
  int n_vertices = 21;
  double rod_radius = 1e-3;
  double youngs_modulus = 1e9;
  double metal_density = 7850.0;
  double fluid_density = 1000.0;
  double viscosity = 1000.0;
  // <= 0 selects the defaults: segment length / 10 and 5x that for the
  // central node.
  double node_radius = 0.0;
  double mid_node_radius = 0.0;
  Eigen::Vector2d gravity{0.0, -9.81};
  double natural_curvature = 0.0;
  double dt_sample = 0.1;
  double t_end = 20.0;
  int substeps = 10;

  double segment_length() const { return length / (n_vertices - 1); }
  double resolved_node_radius() const;
  double resolved_mid_radius() const;
  std::size_t n_samples() const;
  void validate() const;
};

// Thin cantilever plate clamped along its x = 0 edge, falling under gravity.
struct PlateConfig {
  double length = 1.0;
  double width = 0.1;
  double thickness = 1e-3;
  double density = 1200.0;
  double youngs_modulus = 5e6;
  double damping = 0.01;
  int nx = 21;  // nodes along the length
  int ny = 3;   // nodes across the width
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};
  double dt_sample = 0.003;
  int n_steps = 500;
  int substeps = 1;

  std::size_t n_samples() const { return static_cast<std::size_t>(n_steps); }
  void validate() const;
};

using CaseConfig = std::variant<RodConfig, PlateConfig>;

CaseKind case_kind(const CaseConfig& cfg);
double youngs_modulus(const CaseConfig& cfg);
double dt_sample(const CaseConfig& cfg);
int spatial_dim(CaseKind kind);

// Dihedral bending element: v[1]-v[2] is the shared edge, v[0] and v[3] the
// opposite vertices of the two triangles.
struct Hinge {
  std::array<Index, 4> v{};
  double stiffness = 0.0;
  double rest_angle = 0.0;
};

struct RestGeometry {
  int dim = 2;
  std::vector<double> positions;  // node-major, n x dim
  std::vector<std::array<Index, 2>> edges;
  std::vector<double> rest_lengths;
  std::vector<double> edge_stiffness;  // EA per edge
  std::vector<double> masses;
  std::vector<double> radii;  // drag radii (rod); empty for the plate
  std::vector<NodeType> node_types;
  // Rod bending: interior triples (k-1, k, k+1).
  std::vector<std::array<Index, 3>> stencils;
  double bending_stiffness = 0.0;  // EI
  double natural_curvature = 0.0;
  // Plate bending.
  std::vector<Hinge> hinges;
  std::vector<std::array<Index, 3>> triangles;

  std::size_t n_nodes() const { return masses.size(); }
  std::size_t n_dofs() const { return positions.size(); }
  bool clamped(std::size_t node) const {
    return node_types[node] == NodeType::kClamped;
  }
};

// Affine external force model F = body - drag * v per node; zero on clamped
// nodes.
struct ExternalLoad {
  int dim = 2;
  std::vector<double> body;  // n x dim
  std::vector<double> drag;  // n
};

struct MeshState {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> v;
};

struct Trajectory {
  CaseConfig config;
  RestGeometry rest;
  std::vector<MeshState> states;

  CaseKind kind() const { return case_kind(config); }
  double youngs_modulus() const { return meshode::youngs_modulus(config); }
  double dt_sample() const { return meshode::dt_sample(config); }
  std::size_t n_nodes() const { return rest.n_nodes(); }
  int dim() const { return rest.dim; }
};

// --- elastic energies -------------------------------------------------------

double stretching_energy(std::span<const double> xi, std::span<const double> xj,
                         double rest_length, double ea);

// Signed discrete curvature 2 (e1 x e2) / (|e1||e2| + e1.e2) of a planar
// vertex triple.
double discrete_curvature(const Eigen::Vector2d& prev, const Eigen::Vector2d& mid,
                          const Eigen::Vector2d& next);

// Signed dihedral angle of a hinge; zero when flat.
double hinge_angle(const Eigen::Vector3d& x0, const Eigen::Vector3d& x1,
                   const Eigen::Vector3d& x2, const Eigen::Vector3d& x3);

double elastic_energy(std::span<const double> x, const RestGeometry& rest);
std::vector<double> internal_forces(std::span<const double> x,
                                    const RestGeometry& rest);

// --- loads and energy bookkeeping --------------------------------------------

ExternalLoad make_external_load(const CaseConfig& cfg, const RestGeometry& rest);
std::vector<double> external_forces(const MeshState& state, const ExternalLoad& load);

double kinetic_energy(const MeshState& state, const RestGeometry& rest);
// Potential of the constant body forces, -sum(body . x).
double body_potential(std::span<const double> x, const ExternalLoad& load);

// --- geometry builders ------------------------------------------------------

RestGeometry build_rod_rest(const RodConfig& cfg);
RestGeometry build_plate_mesh(const PlateConfig& cfg);
RestGeometry build_rest(const CaseConfig& cfg);
MeshState rest_state(const RestGeometry& rest);

// --- time integration -------------------------------------------------------

struct NewtonOptions {
  double tolerance = 1e-8;  // max-norm of the force residual, N
  int max_iterations = 50;
  double fd_step = 1e-8;    // Jacobian forward-difference step, m
  int max_halvings = 4;
};

struct StepStats {
  int newton_iterations = 0;
  double residual = 0.0;
};

// One backward-Euler step solved with Newton-Raphson. Throws DivergenceError.
MeshState implicit_step(const MeshState& state, const RestGeometry& rest,
                        const ExternalLoad& load, double dt,
                        const NewtonOptions& opts = {}, StepStats* stats = nullptr);

// implicit_step with up to opts.max_halvings recursive dt halvings on
// divergence.
MeshState implicit_step_adaptive(const MeshState& state, const RestGeometry& rest,
                                 const ExternalLoad& load, double dt,
                                 const NewtonOptions& opts = {});

Trajectory generate_rod_trajectory(const RodConfig& cfg, const NewtonOptions& opts = {});
Trajectory generate_plate_trajectory(const PlateConfig& cfg, const NewtonOptions& opts = {});
Trajectory generate_trajectory(const CaseConfig& cfg, const NewtonOptions& opts = {});

}  // namespace meshode
