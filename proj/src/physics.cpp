#include "meshode/physics.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "meshode/errors.hpp"

namespace meshode {

namespace {

constexpr double kPi = std::numbers::pi;

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

template <int D>
Eigen::Map<const Vec<D>> node(std::span<const double> x, Index i) {
  return Eigen::Map<const Vec<D>>(x.data() + static_cast<std::size_t>(i) * D);
}

template <int D>
Eigen::Map<Vec<D>> node(std::vector<double>& x, Index i) {
  return Eigen::Map<Vec<D>>(x.data() + static_cast<std::size_t>(i) * D);
}

double sphere_volume(double r) { return 4.0 / 3.0 * kPi * r * r * r; }

// Rod bending energy of one stencil and its gradient w.r.t. the two edge
// vectors e1 = x_k - x_{k-1}, e2 = x_{k+1} - x_k.
struct BendTerm {
  double energy;
  Eigen::Vector2d d_e1;
  Eigen::Vector2d d_e2;
};

BendTerm rod_bend(const Eigen::Vector2d& e1, const Eigen::Vector2d& e2, double ei,
                  double kappa0, bool want_grad) {
  const double n1 = e1.norm();
  const double n2 = e2.norm();
  if (n1 == 0.0 || n2 == 0.0) {
    throw DegenerateEdgeError("rod bending: zero-length segment");
  }
  const double cross = e1.x() * e2.y() - e1.y() * e2.x();
  const double denom = n1 * n2 + e1.dot(e2);
  if (denom <= 1e-14 * n1 * n2) {
    throw SingularCurvatureError("rod bending: antiparallel segments");
  }
  const double kappa = 2.0 * cross / denom;
  const double lk = 0.5 * (n1 + n2);
  const double dk = kappa - kappa0;
  BendTerm out{0.5 * ei * dk * dk * lk, Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  if (!want_grad) return out;
  const Eigen::Vector2d dcross_de1(e2.y(), -e2.x());
  const Eigen::Vector2d dcross_de2(-e1.y(), e1.x());
  const Eigen::Vector2d ddenom_de1 = e1 * (n2 / n1) + e2;
  const Eigen::Vector2d ddenom_de2 = e2 * (n1 / n2) + e1;
  const Eigen::Vector2d dk_de1 = (2.0 / denom) * dcross_de1 - (kappa / denom) * ddenom_de1;
  const Eigen::Vector2d dk_de2 = (2.0 / denom) * dcross_de2 - (kappa / denom) * ddenom_de2;
  out.d_e1 = ei * dk * lk * dk_de1 + 0.25 * ei * dk * dk * e1 / n1;
  out.d_e2 = ei * dk * lk * dk_de2 + 0.25 * ei * dk * dk * e2 / n2;
  return out;
}

struct HingeGeom {
  double theta;
  std::array<Eigen::Vector3d, 4> grad;  // d theta / d x_i
};

HingeGeom hinge_geometry(const Eigen::Vector3d& x0, const Eigen::Vector3d& x1,
                         const Eigen::Vector3d& x2, const Eigen::Vector3d& x3,
                         bool want_grad) {
  const Eigen::Vector3d e0 = x2 - x1;
  const Eigen::Vector3d e1 = x0 - x2;
  const Eigen::Vector3d e1t = x3 - x2;
  const Eigen::Vector3d n_raw = e0.cross(e1);
  const Eigen::Vector3d nt_raw = -e0.cross(e1t);
  const double e0_len = e0.norm();
  const double n_len = n_raw.norm();
  const double nt_len = nt_raw.norm();
  if (e0_len == 0.0 || n_len == 0.0 || nt_len == 0.0) {
    throw DegenerateEdgeError("hinge: degenerate triangle");
  }
  const Eigen::Vector3d n = n_raw / n_len;
  const Eigen::Vector3d nt = nt_raw / nt_len;
  const Eigen::Vector3d e0_hat = e0 / e0_len;
  HingeGeom g;
  g.theta = std::atan2(n.cross(nt).dot(e0_hat), n.dot(nt));
  if (!want_grad) return g;
  const Eigen::Vector3d e2 = x0 - x1;
  const Eigen::Vector3d e2t = x3 - x1;
  g.grad[0] = -e0_len / n_len * n;
  g.grad[1] = (-e0_hat.dot(e1)) / n_len * n + (-e0_hat.dot(e1t)) / nt_len * nt;
  g.grad[2] = e0_hat.dot(e2) / n_len * n + e0_hat.dot(e2t) / nt_len * nt;
  g.grad[3] = -e0_len / nt_len * nt;
  return g;
}

template <int D>
double accumulate_elastic(std::span<const double> x, const RestGeometry& rest,
                          std::vector<double>* grad) {
  double energy = 0.0;
  for (std::size_t e = 0; e < rest.edges.size(); ++e) {
    const auto [i, j] = rest.edges[e];
    const Vec<D> d = node<D>(x, j) - node<D>(x, i);
    const double l = d.norm();
    if (l == 0.0) {
      throw DegenerateEdgeError("stretching: coincident nodes " + std::to_string(i) +
                                " and " + std::to_string(j));
    }
    const double l0 = rest.rest_lengths[e];
    const double eps = l / l0 - 1.0;
    energy += 0.5 * rest.edge_stiffness[e] * eps * eps * l0;
    if (grad) {
      const Vec<D> g = (rest.edge_stiffness[e] * eps / l) * d;
      node<D>(*grad, j) += g;
      node<D>(*grad, i) -= g;
    }
  }
  if constexpr (D == 2) {
    for (const auto& s : rest.stencils) {
      const Eigen::Vector2d e1 = node<2>(x, s[1]) - node<2>(x, s[0]);
      const Eigen::Vector2d e2 = node<2>(x, s[2]) - node<2>(x, s[1]);
      const BendTerm b = rod_bend(e1, e2, rest.bending_stiffness,
                                  rest.natural_curvature, grad != nullptr);
      energy += b.energy;
      if (grad) {
        node<2>(*grad, s[0]) -= b.d_e1;
        node<2>(*grad, s[1]) += b.d_e1 - b.d_e2;
        node<2>(*grad, s[2]) += b.d_e2;
      }
    }
  }
  if constexpr (D == 3) {
    for (const Hinge& h : rest.hinges) {
      const HingeGeom g =
          hinge_geometry(node<3>(x, h.v[0]), node<3>(x, h.v[1]), node<3>(x, h.v[2]),
                         node<3>(x, h.v[3]), grad != nullptr);
      const double dtheta = g.theta - h.rest_angle;
      energy += 0.5 * h.stiffness * dtheta * dtheta;
      if (grad) {
        for (int k = 0; k < 4; ++k) node<3>(*grad, h.v[k]) += h.stiffness * dtheta * g.grad[k];
      }
    }
  }
  return energy;
}

double elastic_impl(std::span<const double> x, const RestGeometry& rest,
                    std::vector<double>* grad) {
  if (x.size() != rest.positions.size()) {
    throw DimensionError("elastic energy: position vector has " +
                         std::to_string(x.size()) + " entries, expected " +
                         std::to_string(rest.positions.size()));
  }
  if (rest.dim == 2) return accumulate_elastic<2>(x, rest, grad);
  if (rest.dim == 3) return accumulate_elastic<3>(x, rest, grad);
  throw ConfigError("unsupported spatial dimension " + std::to_string(rest.dim));
}

}  // namespace

const char* case_name(CaseKind kind) {
  return kind == CaseKind::kRod ? "rod" : "plate";
}

CaseKind parse_case(const std::string& name) {
  if (name == "rod") return CaseKind::kRod;
  if (name == "plate") return CaseKind::kPlate;
  throw ConfigError("unknown case '" + name + "' (expected rod or plate)");
}

double RodConfig::resolved_node_radius() const {
  return node_radius > 0.0 ? node_radius : segment_length() / 10.0;
}

double RodConfig::resolved_mid_radius() const {
  return mid_node_radius > 0.0 ? mid_node_radius : 5.0 * resolved_node_radius();
}

std::size_t RodConfig::n_samples() const {
  return static_cast<std::size_t>(std::llround(t_end / dt_sample));
}

void RodConfig::validate() const {
  if (!(length > 0.0)) throw ConfigError("rod: length must be > 0");
  if (n_vertices < 3) throw ConfigError("rod: n_vertices must be >= 3");
  if (!(rod_radius > 0.0)) throw ConfigError("rod: rod_radius must be > 0");
  if (!(youngs_modulus > 0.0)) throw ConfigError("rod: youngs_modulus must be > 0");
  if (!(viscosity >= 0.0)) throw ConfigError("rod: viscosity must be >= 0");
  if (!(metal_density > 0.0)) throw ConfigError("rod: metal_density must be > 0");
  if (!(dt_sample > 0.0)) throw ConfigError("rod: dt_sample must be > 0");
  if (!(t_end >= 0.0)) throw ConfigError("rod: t_end must be >= 0");
  if (substeps < 1) throw ConfigError("rod: substeps must be >= 1");
}

void PlateConfig::validate() const {
  if (!(length > 0.0 && width > 0.0 && thickness > 0.0)) {
    throw ConfigError("plate: length, width and thickness must be > 0");
  }
  if (!(density > 0.0)) throw ConfigError("plate: density must be > 0");
  if (!(youngs_modulus > 0.0)) throw ConfigError("plate: youngs_modulus must be > 0");
  if (!(damping >= 0.0)) throw ConfigError("plate: damping must be >= 0");
  if (nx < 2 || ny < 2) throw ConfigError("plate: resolution must be at least 2x2");
  if (!(dt_sample > 0.0)) throw ConfigError("plate: dt_sample must be > 0");
  if (n_steps < 0) throw ConfigError("plate: n_steps must be >= 0");
  if (substeps < 1) throw ConfigError("plate: substeps must be >= 1");
}

CaseKind case_kind(const CaseConfig& cfg) {
  return std::holds_alternative<RodConfig>(cfg) ? CaseKind::kRod : CaseKind::kPlate;
}

double youngs_modulus(const CaseConfig& cfg) {
  return std::visit([](const auto& c) { return c.youngs_modulus; }, cfg);
}

double dt_sample(const CaseConfig& cfg) {
  return std::visit([](const auto& c) { return c.dt_sample; }, cfg);
}

int spatial_dim(CaseKind kind) { return kind == CaseKind::kRod ? 2 : 3; }

double stretching_energy(std::span<const double> xi, std::span<const double> xj,
                         double rest_length, double ea) {
  if (xi.size() != xj.size()) throw DimensionError("stretching_energy: dimension mismatch");
  if (!(rest_length > 0.0)) throw ContractError("stretching_energy: rest length must be > 0");
  double l2 = 0.0;
  for (std::size_t d = 0; d < xi.size(); ++d) l2 += (xj[d] - xi[d]) * (xj[d] - xi[d]);
  if (l2 == 0.0) throw DegenerateEdgeError("stretching_energy: coincident nodes");
  const double eps = std::sqrt(l2) / rest_length - 1.0;
  return 0.5 * ea * eps * eps * rest_length;
}

double discrete_curvature(const Eigen::Vector2d& prev, const Eigen::Vector2d& mid,
                          const Eigen::Vector2d& next) {
  const Eigen::Vector2d e1 = mid - prev;
  const Eigen::Vector2d e2 = next - mid;
  const double n1 = e1.norm(), n2 = e2.norm();
  if (n1 == 0.0 || n2 == 0.0) {
    throw DegenerateEdgeError("discrete_curvature: zero-length segment");
  }
  const double denom = n1 * n2 + e1.dot(e2);
  if (denom <= 1e-14 * n1 * n2) {
    throw SingularCurvatureError("discrete_curvature: antiparallel segments");
  }
  return 2.0 * (e1.x() * e2.y() - e1.y() * e2.x()) / denom;
}

double hinge_angle(const Eigen::Vector3d& x0, const Eigen::Vector3d& x1,
                   const Eigen::Vector3d& x2, const Eigen::Vector3d& x3) {
  return hinge_geometry(x0, x1, x2, x3, false).theta;
}

double elastic_energy(std::span<const double> x, const RestGeometry& rest) {
  return elastic_impl(x, rest, nullptr);
}

std::vector<double> internal_forces(std::span<const double> x,
                                    const RestGeometry& rest) {
  std::vector<double> grad(x.size(), 0.0);
  elastic_impl(x, rest, &grad);
  for (double& g : grad) g = -g;
  return grad;
}

ExternalLoad make_external_load(const CaseConfig& cfg, const RestGeometry& rest) {
  ExternalLoad load;
  load.dim = rest.dim;
  const std::size_t n = rest.n_nodes();
  load.body.assign(n * rest.dim, 0.0);
  load.drag.assign(n, 0.0);
  if (const auto* rod = std::get_if<RodConfig>(&cfg)) {
    const double drho = rod->metal_density - rod->fluid_density;
    for (std::size_t i = 0; i < n; ++i) {
      if (rest.clamped(i)) continue;
      const double a = rest.radii[i];
      const double vol = sphere_volume(a);
      for (int d = 0; d < 2; ++d) load.body[i * 2 + d] = drho * vol * rod->gravity[d];
      load.drag[i] = 6.0 * kPi * rod->viscosity * a;
    }
  } else {
    const auto& plate = std::get<PlateConfig>(cfg);
    for (std::size_t i = 0; i < n; ++i) {
      if (rest.clamped(i)) continue;
      for (int d = 0; d < 3; ++d) load.body[i * 3 + d] = rest.masses[i] * plate.gravity[d];
      load.drag[i] = plate.damping;
    }
  }
  return load;
}

std::vector<double> external_forces(const MeshState& state, const ExternalLoad& load) {
  std::vector<double> f(load.body.size());
  const std::size_t dim = static_cast<std::size_t>(load.dim);
  for (std::size_t k = 0; k < f.size(); ++k) {
    f[k] = load.body[k] - load.drag[k / dim] * state.v[k];
  }
  return f;
}

double kinetic_energy(const MeshState& state, const RestGeometry& rest) {
  double ke = 0.0;
  const std::size_t dim = static_cast<std::size_t>(rest.dim);
  for (std::size_t k = 0; k < state.v.size(); ++k) {
    ke += 0.5 * rest.masses[k / dim] * state.v[k] * state.v[k];
  }
  return ke;
}

double body_potential(std::span<const double> x, const ExternalLoad& load) {
  double pe = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) pe -= load.body[k] * x[k];
  return pe;
}

RestGeometry build_rod_rest(const RodConfig& cfg) {
  cfg.validate();
  RestGeometry rest;
  rest.dim = 2;
  const int n = cfg.n_vertices;
  const double dl = cfg.segment_length();
  const double ea = cfg.youngs_modulus * kPi * cfg.rod_radius * cfg.rod_radius;
  rest.bending_stiffness =
      0.25 * cfg.youngs_modulus * kPi * std::pow(cfg.rod_radius, 4);
  rest.natural_curvature = cfg.natural_curvature;
  rest.positions.assign(static_cast<std::size_t>(n) * 2, 0.0);
  for (int i = 0; i < n; ++i) rest.positions[i * 2] = i * dl;
  for (int i = 0; i + 1 < n; ++i) {
    rest.edges.push_back({i, i + 1});
    rest.rest_lengths.push_back(dl);
    rest.edge_stiffness.push_back(ea);
  }
  for (int i = 1; i + 1 < n; ++i) rest.stencils.push_back({i - 1, i, i + 1});
  const double r = cfg.resolved_node_radius();
  const double r_mid = cfg.resolved_mid_radius();
  for (int i = 0; i < n; ++i) {
    const double a = (n % 2 == 1 && i == n / 2) ? r_mid : r;
    rest.radii.push_back(a);
    rest.masses.push_back(cfg.metal_density * sphere_volume(a));
    rest.node_types.push_back(NodeType::kFree);
  }
  return rest;
}

RestGeometry build_plate_mesh(const PlateConfig& cfg) {
  cfg.validate();
  RestGeometry rest;
  rest.dim = 3;
  const int nx = cfg.nx, ny = cfg.ny;
  const double dx = cfg.length / (nx - 1);
  const double dy = cfg.width / (ny - 1);
  auto id = [ny](int i, int j) { return static_cast<Index>(i * ny + j); };
  rest.positions.assign(static_cast<std::size_t>(nx * ny) * 3, 0.0);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      rest.positions[id(i, j) * 3 + 0] = i * dx;
      rest.positions[id(i, j) * 3 + 1] = j * dy;
      rest.node_types.push_back(i == 0 ? NodeType::kClamped : NodeType::kFree);
    }
  }
  for (int i = 0; i + 1 < nx; ++i) {
    for (int j = 0; j + 1 < ny; ++j) {
      rest.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      rest.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  const std::span<const double> p(rest.positions);
  std::vector<double> area(rest.triangles.size());
  for (std::size_t t = 0; t < rest.triangles.size(); ++t) {
    const auto& tri = rest.triangles[t];
    const Eigen::Vector3d a = node<3>(p, tri[0]);
    const Eigen::Vector3d b = node<3>(p, tri[1]);
    const Eigen::Vector3d c = node<3>(p, tri[2]);
    area[t] = 0.5 * (b - a).cross(c - a).norm();
  }
  // Unique undirected edges with their adjacent triangles and opposite vertices.
  struct EdgeInfo {
    std::vector<std::size_t> tris;
    std::vector<Index> opposite;
  };
  std::map<std::pair<Index, Index>, EdgeInfo> edge_map;
  for (std::size_t t = 0; t < rest.triangles.size(); ++t) {
    const auto& tri = rest.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const Index a = tri[k], b = tri[(k + 1) % 3], o = tri[(k + 2) % 3];
      auto& info = edge_map[{std::min(a, b), std::max(a, b)}];
      info.tris.push_back(t);
      info.opposite.push_back(o);
    }
  }
  const double membrane = cfg.youngs_modulus * cfg.thickness;
  const double flexural =
      cfg.youngs_modulus * cfg.thickness * cfg.thickness * cfg.thickness / 12.0;
  for (const auto& [key, info] : edge_map) {
    const auto [a, b] = key;
    const double l0 = (node<3>(p, b) - node<3>(p, a)).norm();
    double trib_area = 0.0;
    for (std::size_t t : info.tris) trib_area += area[t] / 3.0;
    rest.edges.push_back({a, b});
    rest.rest_lengths.push_back(l0);
    rest.edge_stiffness.push_back(membrane * trib_area / l0);
    if (info.tris.size() == 2) {
      Hinge h;
      h.v = {info.opposite[0], a, b, info.opposite[1]};
      const double a_sum = area[info.tris[0]] + area[info.tris[1]];
      h.stiffness = flexural * 3.0 * l0 * l0 / a_sum;
      h.rest_angle = hinge_angle(node<3>(p, h.v[0]), node<3>(p, h.v[1]),
                                 node<3>(p, h.v[2]), node<3>(p, h.v[3]));
      rest.hinges.push_back(h);
    }
  }
  rest.masses.assign(static_cast<std::size_t>(nx * ny), 0.0);
  const double areal_density = cfg.density * cfg.thickness;
  for (std::size_t t = 0; t < rest.triangles.size(); ++t) {
    for (Index v : rest.triangles[t]) rest.masses[v] += areal_density * area[t] / 3.0;
  }
  return rest;
}

RestGeometry build_rest(const CaseConfig& cfg) {
  if (const auto* rod = std::get_if<RodConfig>(&cfg)) return build_rod_rest(*rod);
  return build_plate_mesh(std::get<PlateConfig>(cfg));
}

MeshState rest_state(const RestGeometry& rest) {
  MeshState s;
  s.t = 0.0;
  s.x = rest.positions;
  s.v.assign(rest.positions.size(), 0.0);
  return s;
}

MeshState implicit_step(const MeshState& state, const RestGeometry& rest,
                        const ExternalLoad& load, double dt, const NewtonOptions& opts,
                        StepStats* stats) {
  if (!(dt > 0.0)) throw ContractError("implicit_step: dt must be > 0");
  const std::size_t dim = static_cast<std::size_t>(rest.dim);
  std::vector<std::size_t> free_dofs;
  for (std::size_t i = 0; i < rest.n_nodes(); ++i) {
    if (rest.clamped(i)) continue;
    for (std::size_t d = 0; d < dim; ++d) free_dofs.push_back(i * dim + d);
  }
  const std::size_t m = free_dofs.size();
  const double inv_dt = 1.0 / dt;
  const double inv_dt2 = inv_dt * inv_dt;

  auto residual = [&](const std::vector<double>& xn, Eigen::VectorXd& r) {
    const std::vector<double> f_int = internal_forces(xn, rest);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t g = free_dofs[k];
      const std::size_t i = g / dim;
      const double dx = xn[g] - state.x[g];
      const double v_new = dx * inv_dt;
      const double f_ext = load.body[g] - load.drag[i] * v_new;
      r[k] = rest.masses[i] * (dx - dt * state.v[g]) * inv_dt2 - f_int[g] - f_ext;
    }
  };

  std::vector<double> xn = state.x;
  for (std::size_t g : free_dofs) xn[g] += dt * state.v[g];

  Eigen::VectorXd r(m), r_pert(m);
  Eigen::MatrixXd jac(m, m);
  int iter = 0;
  double res = 0.0;
  for (;; ++iter) {
    residual(xn, r);
    res = m ? r.lpNorm<Eigen::Infinity>() : 0.0;
    if (!std::isfinite(res)) {
      throw DivergenceError("implicit_step: non-finite residual", iter, res);
    }
    if (res < opts.tolerance) break;
    if (iter >= opts.max_iterations) {
      throw DivergenceError("implicit_step: Newton did not converge in " +
                                std::to_string(iter) + " iterations (residual " +
                                std::to_string(res) + " N)",
                            iter, res);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t g = free_dofs[j];
      const double saved = xn[g];
      xn[g] = saved + opts.fd_step;
      residual(xn, r_pert);
      xn[g] = saved;
      jac.col(j) = (r_pert - r) / opts.fd_step;
    }
    const Eigen::VectorXd delta = jac.partialPivLu().solve(-r);
    if (!delta.allFinite()) {
      throw DivergenceError("implicit_step: singular Newton system", iter, res);
    }
    for (std::size_t k = 0; k < m; ++k) xn[free_dofs[k]] += delta[k];
  }
  if (stats) {
    stats->newton_iterations = iter;
    stats->residual = res;
  }

  MeshState out;
  out.t = state.t + dt;
  out.x = std::move(xn);
  out.v.assign(out.x.size(), 0.0);
  for (std::size_t g : free_dofs) out.v[g] = (out.x[g] - state.x[g]) * inv_dt;
  for (std::size_t i = 0; i < rest.n_nodes(); ++i) {
    if (!rest.clamped(i)) continue;
    for (std::size_t d = 0; d < dim; ++d) out.x[i * dim + d] = rest.positions[i * dim + d];
  }
  return out;
}

namespace {

MeshState adaptive_impl(const MeshState& state, const RestGeometry& rest,
                        const ExternalLoad& load, double dt, const NewtonOptions& opts,
                        int depth) {
  try {
    return implicit_step(state, rest, load, dt, opts);
  } catch (const DivergenceError&) {
    if (depth >= opts.max_halvings) throw;
  }
  const MeshState half = adaptive_impl(state, rest, load, 0.5 * dt, opts, depth + 1);
  return adaptive_impl(half, rest, load, 0.5 * dt, opts, depth + 1);
}

Trajectory integrate(const CaseConfig& cfg, RestGeometry rest, std::size_t n_samples,
                     int substeps, const NewtonOptions& opts) {
  Trajectory traj;
  traj.config = cfg;
  traj.rest = std::move(rest);
  const ExternalLoad load = make_external_load(cfg, traj.rest);
  const double dts = dt_sample(cfg);
  const double dt = dts / substeps;
  MeshState state = rest_state(traj.rest);
  traj.states.reserve(n_samples + 1);
  traj.states.push_back(state);
  for (std::size_t k = 1; k <= n_samples; ++k) {
    try {
      for (int s = 0; s < substeps; ++s) {
        state = adaptive_impl(state, traj.rest, load, dt, opts, 0);
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(case_name(case_kind(cfg))) +
                                " trajectory (Y = " + std::to_string(youngs_modulus(cfg)) +
                                " Pa) failed at sample " + std::to_string(k) + ": " +
                                e.what(),
                            e.iterations(), e.residual());
    }
    state.t = static_cast<double>(k) * dts;
    traj.states.push_back(state);
  }
  return traj;
}

}  // namespace

MeshState implicit_step_adaptive(const MeshState& state, const RestGeometry& rest,
                                 const ExternalLoad& load, double dt,
                                 const NewtonOptions& opts) {
  return adaptive_impl(state, rest, load, dt, opts, 0);
}

Trajectory generate_rod_trajectory(const RodConfig& cfg, const NewtonOptions& opts) {
  return integrate(cfg, build_rod_rest(cfg), cfg.n_samples(), cfg.substeps, opts);
}

Trajectory generate_plate_trajectory(const PlateConfig& cfg, const NewtonOptions& opts) {
  return integrate(cfg, build_plate_mesh(cfg), cfg.n_samples(), cfg.substeps, opts);
}

Trajectory generate_trajectory(const CaseConfig& cfg, const NewtonOptions& opts) {
  if (const auto* rod = std::get_if<RodConfig>(&cfg)) return generate_rod_trajectory(*rod, opts);
  return generate_plate_trajectory(std::get<PlateConfig>(cfg), opts);
}

}  // namespace meshode
