#include "meshode/graph.hpp"

#include <cmath>
#include <string>

#include "meshode/errors.hpp"

namespace meshode {

namespace {

Tensor column(std::size_t n, double value) { return Tensor::filled({n, 1}, value); }

// Running mean/variance with a shift by the first sample, so a constant
// column yields exactly its value and a zero variance.
class ColumnStats {
 public:
  explicit ColumnStats(std::size_t width)
      : shift_(width, 0.0), sum_(width, 0.0), sq_(width, 0.0) {}

  void add(std::span<const double> rows, std::size_t width) {
    for (std::size_t r = 0; r < rows.size() / width; ++r) add_row(rows.subspan(r * width, width));
  }

  void add_row(std::span<const double> row) {
    if (count_ == 0) shift_.assign(row.begin(), row.end());
    for (std::size_t c = 0; c < row.size(); ++c) {
      const long double d = static_cast<long double>(row[c]) - shift_[c];
      sum_[c] += d;
      sq_[c] += d * d;
    }
    ++count_;
  }

  FeatureStats finish() const {
    FeatureStats s;
    for (std::size_t c = 0; c < shift_.size(); ++c) {
      const long double m = sum_[c] / count_;
      const long double var = std::max(0.0L, sq_[c] / count_ - m * m);
      s.mean.push_back(static_cast<double>(shift_[c] + m));
      s.std.push_back(std::max(static_cast<double>(std::sqrt(var)), Normalizer::kStdFloor));
    }
    return s;
  }

  std::size_t count() const { return count_; }

 private:
  std::vector<double> shift_;
  std::vector<long double> sum_;
  std::vector<long double> sq_;
  std::size_t count_ = 0;
};

}  // namespace

int node_feature_dim(CaseKind kind) { return kind == CaseKind::kRod ? 7 : 9; }
int edge_feature_dim(CaseKind kind) { return kind == CaseKind::kRod ? 6 : 8; }

int GraphContext::node_dim() const { return node_feature_dim(kind); }
int GraphContext::edge_dim() const { return edge_feature_dim(kind); }

bool GraphContext::has_clamped() const {
  for (NodeType t : node_types) {
    if (t == NodeType::kClamped) return true;
  }
  return false;
}

GraphContext make_graph_context(const CaseConfig& cfg, const RestGeometry& rest) {
  GraphContext ctx;
  ctx.kind = case_kind(cfg);
  ctx.dim = rest.dim;
  if (ctx.dim != spatial_dim(ctx.kind)) {
    throw SchemaError(std::string(case_name(ctx.kind)) + " geometry has dimension " +
                      std::to_string(ctx.dim));
  }
  const std::size_t n = rest.n_nodes();
  const std::size_t dim = static_cast<std::size_t>(ctx.dim);
  ctx.n_nodes = n;
  ctx.youngs_modulus = youngs_modulus(cfg);
  ctx.node_types = rest.node_types;
  for (const auto& e : rest.edges) {
    ctx.senders.push_back(e[0]);
    ctx.receivers.push_back(e[1]);
    ctx.senders.push_back(e[1]);
    ctx.receivers.push_back(e[0]);
  }
  if (ctx.kind == CaseKind::kRod) ctx.stencils = rest.stencils;
  ctx.rest_edge = edge_geometry(Tensor({n, dim}, rest.positions), ctx.senders, ctx.receivers);

  const ExternalLoad load = make_external_load(cfg, rest);
  ctx.body = Tensor({n, dim}, load.body);
  std::vector<double> drag(n * dim), one_hot(n * 2), mask(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const bool clamped = rest.clamped(i);
    for (std::size_t d = 0; d < dim; ++d) {
      drag[i * dim + d] = -load.drag[i];
      mask[i * dim + d] = clamped ? 0.0 : 1.0;
    }
    one_hot[i * 2] = clamped ? 1.0 : 0.0;
    one_hot[i * 2 + 1] = clamped ? 0.0 : 1.0;
  }
  ctx.neg_drag = Tensor({n, dim}, std::move(drag));
  ctx.youngs = column(n, ctx.youngs_modulus);
  ctx.node_type = Tensor({n, 2}, std::move(one_hot));
  ctx.free_mask = Tensor({n, dim}, std::move(mask));
  return ctx;
}

GraphContext make_graph_context(const Trajectory& traj) {
  return make_graph_context(traj.config, traj.rest);
}

Tensor edge_geometry(const Tensor& x, std::span<const Index> senders,
                     std::span<const Index> receivers) {
  if (x.rank() != 2) throw DimensionError("edge_geometry: positions must be [n, dim], got " +
                                          shape_str(x.shape()));
  if (senders.size() != receivers.size()) {
    throw DimensionError("edge_geometry: " + std::to_string(senders.size()) + " senders, " +
                         std::to_string(receivers.size()) + " receivers");
  }
  const std::size_t n = x.rows(), dim = x.cols(), m = senders.size(), w = dim + 1;
  const auto p = x.data();
  Buffer out(m * w);
  for (std::size_t e = 0; e < m; ++e) {
    const Index s = senders[e], r = receivers[e];
    if (s < 0 || r < 0 || static_cast<std::size_t>(s) >= n ||
        static_cast<std::size_t>(r) >= n) {
      throw IndexError("edge_geometry: edge " + std::to_string(e) + " references node outside [0, " +
                       std::to_string(n) + ")");
    }
    double l2 = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double dd = p[r * dim + d] - p[s * dim + d];
      out[e * w + 1 + d] = dd;
      l2 += dd * dd;
    }
    if (l2 == 0.0) {
      throw DegenerateEdgeError("edge_geometry: nodes " + std::to_string(s) + " and " +
                                std::to_string(r) + " coincide");
    }
    out[e * w] = std::sqrt(l2);
  }
  Tensor result({m, w}, out);
  Tape* tape = recording_tape({&x});
  if (!tape) return result;
  std::vector<Index> snd(senders.begin(), senders.end()), rcv(receivers.begin(), receivers.end());
  return tape->record(
      OpKind::kCustom, {&x}, result,
      [out = std::move(out), snd = std::move(snd), rcv = std::move(rcv), dim, w](
          std::span<const double> g, std::span<Buffer* const> gin) {
        auto& gx = *gin[0];
        for (std::size_t e = 0; e < snd.size(); ++e) {
          const double l = out[e * w];
          const double gl = g[e * w] / l;
          for (std::size_t d = 0; d < dim; ++d) {
            const double gd = g[e * w + 1 + d] + gl * out[e * w + 1 + d];
            gx[rcv[e] * dim + d] += gd;
            gx[snd[e] * dim + d] -= gd;
          }
        }
      });
}

Tensor turning_angles(const Tensor& x, std::span<const std::array<Index, 3>> stencils) {
  if (x.rank() != 2 || x.cols() != 2) {
    throw DimensionError("turning_angles: positions must be [n, 2], got " + shape_str(x.shape()));
  }
  const std::size_t n = x.rows();
  const auto p = x.data();
  Buffer out(n * 2);
  for (std::size_t i = 0; i < n; ++i) out[i * 2] = 1.0;
  // Unit edge vectors and lengths per stencil, saved for the backward pass.
  std::vector<double> saved(stencils.size() * 6);
  for (std::size_t k = 0; k < stencils.size(); ++k) {
    const auto& s = stencils[k];
    for (Index v : s) {
      if (v < 0 || static_cast<std::size_t>(v) >= n) {
        throw IndexError("turning_angles: stencil references node " + std::to_string(v));
      }
    }
    const double e1x = p[s[1] * 2] - p[s[0] * 2], e1y = p[s[1] * 2 + 1] - p[s[0] * 2 + 1];
    const double e2x = p[s[2] * 2] - p[s[1] * 2], e2y = p[s[2] * 2 + 1] - p[s[1] * 2 + 1];
    const double n1 = std::hypot(e1x, e1y), n2 = std::hypot(e2x, e2y);
    if (n1 == 0.0 || n2 == 0.0) {
      throw DegenerateEdgeError("turning_angles: zero-length segment at node " +
                                std::to_string(s[1]));
    }
    const double ux = e1x / n1, uy = e1y / n1, wx = e2x / n2, wy = e2y / n2;
    out[s[1] * 2] = ux * wx + uy * wy;
    out[s[1] * 2 + 1] = ux * wy - uy * wx;
    saved[k * 6 + 0] = ux;
    saved[k * 6 + 1] = uy;
    saved[k * 6 + 2] = wx;
    saved[k * 6 + 3] = wy;
    saved[k * 6 + 4] = n1;
    saved[k * 6 + 5] = n2;
  }
  Tensor result({n, 2}, out);
  Tape* tape = recording_tape({&x});
  if (!tape) return result;
  std::vector<std::array<Index, 3>> st(stencils.begin(), stencils.end());
  return tape->record(
      OpKind::kCustom, {&x}, result,
      [out = std::move(out), saved = std::move(saved), st = std::move(st)](
          std::span<const double> g, std::span<Buffer* const> gin) {
        auto& gx = *gin[0];
        for (std::size_t k = 0; k < st.size(); ++k) {
          const auto& s = st[k];
          const double* q = &saved[k * 6];
          const double ux = q[0], uy = q[1], wx = q[2], wy = q[3], n1 = q[4], n2 = q[5];
          const double c = out[s[1] * 2], sn = out[s[1] * 2 + 1];
          const double gc = g[s[1] * 2], gs = g[s[1] * 2 + 1];
          const double g1x = (gc * (wx - c * ux) + gs * (wy - sn * ux)) / n1;
          const double g1y = (gc * (wy - c * uy) + gs * (-wx - sn * uy)) / n1;
          const double g2x = (gc * (ux - c * wx) + gs * (-uy - sn * wx)) / n2;
          const double g2y = (gc * (uy - c * wy) + gs * (ux - sn * wy)) / n2;
          gx[s[0] * 2] -= g1x;
          gx[s[0] * 2 + 1] -= g1y;
          gx[s[1] * 2] += g1x - g2x;
          gx[s[1] * 2 + 1] += g1y - g2y;
          gx[s[2] * 2] += g2x;
          gx[s[2] * 2 + 1] += g2y;
        }
      });
}

GraphFeatures build_graph(const Tensor& x, const Tensor& v, const GraphContext& ctx) {
  const Shape want{ctx.n_nodes, static_cast<std::size_t>(ctx.dim)};
  if (x.shape() != want || v.shape() != want) {
    throw DimensionError("build_graph: expected positions and velocities of shape " +
                         shape_str(want) + ", got " + shape_str(x.shape()) + " and " +
                         shape_str(v.shape()));
  }
  GraphFeatures g;
  g.senders = ctx.senders;
  g.receivers = ctx.receivers;
  const Tensor f_ext = add(ctx.body, mul(ctx.neg_drag, v));
  const Tensor shape_feature =
      ctx.kind == CaseKind::kRod ? turning_angles(x, ctx.stencils) : ctx.node_type;
  g.node_features = concat({v, ctx.youngs, shape_feature, f_ext});
  g.edge_features = concat({ctx.rest_edge, edge_geometry(x, ctx.senders, ctx.receivers)});
  return g;
}

Tensor positions_tensor(const MeshState& state, int dim) {
  const std::size_t d = static_cast<std::size_t>(dim);
  return Tensor({state.x.size() / d, d}, state.x);
}

Tensor velocities_tensor(const MeshState& state, int dim) {
  const std::size_t d = static_cast<std::size_t>(dim);
  return Tensor({state.v.size() / d, d}, state.v);
}

GraphFeatures build_graph(const MeshState& state, const GraphContext& ctx) {
  return build_graph(positions_tensor(state, ctx.dim), velocities_tensor(state, ctx.dim), ctx);
}

GraphFeatures build_rod_graph(const MeshState& state, const RestGeometry& rest,
                              const RodConfig& cfg) {
  return build_graph(state, make_graph_context(cfg, rest));
}

GraphFeatures build_plate_graph(const MeshState& state, const RestGeometry& rest,
                                const PlateConfig& cfg) {
  return build_graph(state, make_graph_context(cfg, rest));
}

std::vector<double> fd_acceleration(const Trajectory& traj, std::size_t k) {
  if (k + 1 >= traj.states.size()) {
    throw ContractError("fd_acceleration: sample " + std::to_string(k) +
                        " has no successor in a trajectory of " +
                        std::to_string(traj.states.size()) + " samples");
  }
  const double dt = traj.dt_sample();
  const auto& a = traj.states[k];
  const auto& b = traj.states[k + 1];
  const std::size_t dim = static_cast<std::size_t>(traj.dim());
  std::vector<double> acc(a.x.size(), 0.0);
  for (std::size_t j = 0; j < acc.size(); ++j) {
    if (traj.rest.clamped(j / dim)) continue;
    acc[j] = ((b.x[j] - a.x[j]) / dt - a.v[j]) / dt;
  }
  return acc;
}

Tensor FeatureStats::normalize(const Tensor& x) const {
  std::vector<double> s(size()), b(size());
  for (std::size_t c = 0; c < size(); ++c) {
    s[c] = 1.0 / std[c];
    b[c] = -mean[c] / std[c];
  }
  return affine_cols(x, s, b);
}

Tensor FeatureStats::denormalize(const Tensor& x) const { return affine_cols(x, std, mean); }

Normalizer fit_normalizer(std::span<const Trajectory> train_set) {
  if (train_set.empty()) throw ContractError("fit_normalizer: empty training set");
  const CaseKind kind = train_set.front().kind();
  const std::size_t dim = static_cast<std::size_t>(spatial_dim(kind));
  ColumnStats node(static_cast<std::size_t>(node_feature_dim(kind)));
  ColumnStats edge(static_cast<std::size_t>(edge_feature_dim(kind)));
  ColumnStats target(dim);
  for (const Trajectory& traj : train_set) {
    if (traj.kind() != kind) {
      throw SchemaError("fit_normalizer: training set mixes rod and plate trajectories");
    }
    const GraphContext ctx = make_graph_context(traj);
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
      const GraphFeatures g = build_graph(traj.states[k], ctx);
      node.add(g.node_features.data(), g.node_features.cols());
      edge.add(g.edge_features.data(), g.edge_features.cols());
      if (k + 1 < traj.states.size()) {
        const std::vector<double> acc = fd_acceleration(traj, k);
        for (std::size_t i = 0; i < traj.n_nodes(); ++i) {
          if (traj.rest.clamped(i)) continue;
          target.add_row(std::span<const double>(acc).subspan(i * dim, dim));
        }
      }
    }
  }
  if (target.count() == 0) {
    throw ContractError("fit_normalizer: trajectories need at least two samples");
  }
  return Normalizer{node.finish(), edge.finish(), target.finish()};
}

Normalizer identity_normalizer(CaseKind kind) {
  auto unit = [](int n) {
    const std::size_t k = static_cast<std::size_t>(n);
    return FeatureStats{std::vector<double>(k, 0.0), std::vector<double>(k, 1.0)};
  };
  return Normalizer{unit(node_feature_dim(kind)), unit(edge_feature_dim(kind)),
                    unit(spatial_dim(kind))};
}

}  // namespace meshode
