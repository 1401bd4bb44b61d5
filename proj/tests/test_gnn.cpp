#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "meshode/errors.hpp"
#include "meshode/gnn.hpp"
#include "meshode/gradcheck.hpp"

using namespace meshode;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(r * c);
  for (double& x : v) x = u(rng);
  return Tensor({r, c}, std::move(v));
}

GnnConfig small_config(int layers, int hidden = 8) {
  GnnConfig cfg;
  cfg.node_in = 3;
  cfg.edge_in = 2;
  cfg.out_dim = 2;
  cfg.hidden = hidden;
  cfg.layers = layers;
  return cfg;
}

// Undirected path 0 - 1 - ... - (n-1), both directions.
void path_edges(std::size_t n, std::vector<Index>& s, std::vector<Index>& r) {
  for (std::size_t i = 0; i + 1 < n; ++i) {
    s.push_back(static_cast<Index>(i));
    r.push_back(static_cast<Index>(i + 1));
    s.push_back(static_cast<Index>(i + 1));
    r.push_back(static_cast<Index>(i));
  }
}

Tensor permute_rows(const Tensor& t, const std::vector<Index>& new_of_old) {
  std::vector<double> out(t.numel());
  const std::size_t c = t.cols();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    std::copy_n(t.data().data() + i * c, c, out.data() + new_of_old[i] * c);
  }
  return Tensor(t.shape(), std::move(out));
}

}  // namespace

TEST_CASE("encoder output shapes at the default width") {
  const RodConfig rod;
  const RestGeometry rest = build_rod_rest(rod);
  const GraphContext ctx = make_graph_context(rod, rest);
  const GraphFeatures g = build_graph(rest_state(rest), ctx);
  const GnnConfig cfg = default_gnn_config(CaseKind::kRod, 1);
  CHECK(cfg.hidden == 128);
  const GnnParams p = GnnParams::init(cfg, 1);
  const Latents lat = encode(g.node_features, g.edge_features, cfg, p.tensors);
  CHECK(lat.nodes.shape() == Shape{21, 128});
  CHECK(lat.edges.shape() == Shape{40, 128});
  const Tensor acc = gnn_forward(g, ctx, p, identity_normalizer(CaseKind::kRod));
  CHECK(acc.shape() == Shape{21, 2});
}

TEST_CASE("encoder is pointwise and zero weights give zero latents") {
  std::mt19937_64 rng(1);
  const GnnConfig cfg = small_config(1);
  const GnnParams p = GnnParams::init(cfg, 2);
  std::vector<double> nv(4 * 3);
  for (double& x : nv) x = std::uniform_real_distribution<double>(-1, 1)(rng);
  std::copy_n(nv.begin(), 3, nv.begin() + 6);  // node 2 repeats node 0
  const Tensor nodes({4, 3}, nv);
  const Latents lat = encode(nodes, random_matrix(2, 2, rng), cfg, p.tensors);
  for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(lat.nodes.at(0, c) - lat.nodes.at(2, c)) < 1e-14);

  const GnnParams z = GnnParams::zeros(cfg);
  const Latents zl = encode(nodes, random_matrix(2, 2, rng), cfg, z.tensors);
  for (double v : std::vector<double>(zl.nodes.data().begin(), zl.nodes.data().end())) {
    CHECK(v == 0.0);
  }
  const Tensor dec = decode(random_matrix(4, 8, rng), cfg, z.tensors);
  for (std::size_t k = 0; k < dec.numel(); ++k) CHECK(dec[k] == 0.0);
}

TEST_CASE("parameter layout and validation") {
  const GnnConfig cfg = small_config(2, 4);
  const GnnParams p = GnnParams::init(cfg, 3);
  CHECK(p.tensors.size() == 12 + 2 * 15 + 6);
  CHECK(p.names.size() == p.tensors.size());
  CHECK(p.tensors[p.find("proc1.edge.ws")].shape() == Shape{4, 4});
  CHECK(p.tensors[p.find("decoder.w2")].shape() == Shape{4, 2});
  CHECK(p.tensors[p.find("node_enc.w0")].shape() == Shape{3, 4});
  CHECK_THROWS_AS(p.find("nope"), ContractError);
  std::mt19937_64 rng(4);
  CHECK_THROWS_AS(encode(random_matrix(3, 5, rng), random_matrix(2, 2, rng), cfg, p.tensors),
                  ConfigError);
  GnnConfig bad = cfg;
  bad.layers = 0;
  CHECK_THROWS_AS(GnnParams::init(bad, 1), ConfigError);
  const GnnParams q = GnnParams::init(cfg, 3);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    CHECK(std::equal(p.tensors[i].data().begin(), p.tensors[i].data().end(),
                     q.tensors[i].data().begin()));
  }
}

TEST_CASE("isolated node receives an empty message") {
  std::mt19937_64 rng(5);
  GnnConfig cfg = small_config(1);
  cfg.residual = false;
  const GnnParams p = GnnParams::init(cfg, 6);
  // Node 2 has no edges; with and without its neighbours it evolves the same.
  const std::vector<Index> s{0, 1}, r{1, 0};
  const Tensor nodes = random_matrix(3, 3, rng);
  const Tensor edges = random_matrix(2, 2, rng);
  const Tensor out = gnn_apply(nodes, edges, s, r, cfg, p.tensors);
  const Tensor alone = gnn_apply(Tensor::matrix(1, 3, {nodes.at(2, 0), nodes.at(2, 1), nodes.at(2, 2)}),
                                 Tensor::zeros({0, 2}), std::vector<Index>{},
                                 std::vector<Index>{}, cfg, p.tensors);
  CHECK(std::abs(out.at(2, 0) - alone.at(0, 0)) < 1e-12);
  CHECK(std::abs(out.at(2, 1) - alone.at(0, 1)) < 1e-12);
}

TEST_CASE("node relabeling permutes the outputs") {
  std::mt19937_64 rng(7);
  const GnnConfig cfg = small_config(3, 16);
  const GnnParams p = GnnParams::init(cfg, 8);
  const std::size_t n = 9;
  std::vector<Index> s, r;
  path_edges(n, s, r);
  s.push_back(0), r.push_back(5), s.push_back(5), r.push_back(0);
  const Tensor nodes = random_matrix(n, 3, rng);
  const Tensor edges = random_matrix(s.size(), 2, rng);
  const Tensor out = gnn_apply(nodes, edges, s, r, cfg, p.tensors);

  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> ps, pr;
  for (std::size_t e = 0; e < s.size(); ++e) {
    ps.push_back(perm[s[e]]);
    pr.push_back(perm[r[e]]);
  }
  // Reverse the edge order too; only the aggregation order changes.
  std::reverse(ps.begin(), ps.end());
  std::reverse(pr.begin(), pr.end());
  std::vector<double> ev(edges.numel());
  for (std::size_t e = 0; e < s.size(); ++e) {
    std::copy_n(edges.data().data() + e * 2, 2, ev.data() + (s.size() - 1 - e) * 2);
  }
  const Tensor pout =
      gnn_apply(permute_rows(nodes, perm), Tensor(edges.shape(), ev), ps, pr, cfg, p.tensors);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(std::abs(pout.at(perm[i], c) - out.at(i, c)) < 1e-12);
    }
  }
}

TEST_CASE("disjoint copies of a graph give duplicated outputs") {
  std::mt19937_64 rng(9);
  const GnnConfig cfg = small_config(2, 16);
  const GnnParams p = GnnParams::init(cfg, 10);
  const std::size_t n = 5;
  std::vector<Index> s, r;
  path_edges(n, s, r);
  const Tensor nodes = random_matrix(n, 3, rng);
  const Tensor edges = random_matrix(s.size(), 2, rng);
  const Tensor out = gnn_apply(nodes, edges, s, r, cfg, p.tensors);
  std::vector<Index> s2 = s, r2 = r;
  for (std::size_t e = 0; e < s.size(); ++e) {
    s2.push_back(s[e] + static_cast<Index>(n));
    r2.push_back(r[e] + static_cast<Index>(n));
  }
  std::vector<double> nv(nodes.data().begin(), nodes.data().end());
  nv.insert(nv.end(), nodes.data().begin(), nodes.data().end());
  std::vector<double> ev(edges.data().begin(), edges.data().end());
  ev.insert(ev.end(), edges.data().begin(), edges.data().end());
  const Tensor both =
      gnn_apply(Tensor({2 * n, 3}, nv), Tensor({2 * s.size(), 2}, ev), s2, r2, cfg, p.tensors);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(std::abs(both.at(i, c) - out.at(i, c)) < 1e-12);
      CHECK(both.at(i + n, c) == both.at(i, c));
    }
  }
}

TEST_CASE("influence spreads one hop per layer") {
  std::mt19937_64 rng(11);
  const std::size_t n = 10;
  std::vector<Index> s, r;
  path_edges(n, s, r);
  const Tensor nodes = random_matrix(n, 3, rng);
  const Tensor edges = random_matrix(s.size(), 2, rng);
  for (int layers : {1, 2, 3}) {
    const GnnConfig cfg = small_config(layers, 16);
    const GnnParams p = GnnParams::init(cfg, 12);
    const Tensor base = gnn_apply(nodes, edges, s, r, cfg, p.tensors);
    std::vector<double> nv(nodes.data().begin(), nodes.data().end());
    const std::size_t u = 0;
    for (std::size_t c = 0; c < 3; ++c) nv[u * 3 + c] += 0.5;
    const Tensor moved = gnn_apply(Tensor(nodes.shape(), nv), edges, s, r, cfg, p.tensors);
    for (std::size_t i = 0; i < n; ++i) {
      const bool changed = moved.at(i, 0) != base.at(i, 0) || moved.at(i, 1) != base.at(i, 1);
      if (i <= static_cast<std::size_t>(layers)) {
        CHECK(changed);
      } else {
        CHECK_FALSE(changed);
      }
    }
  }
}

TEST_CASE("gnn_forward is deterministic, finite and masks clamped nodes") {
  std::mt19937_64 rng(13);
  PlateConfig plate;
  plate.nx = 6;
  const RestGeometry rest = build_plate_mesh(plate);
  const GraphContext ctx = make_graph_context(plate, rest);
  MeshState st = rest_state(rest);
  for (std::size_t k = 0; k < st.x.size(); ++k) {
    if (rest.clamped(k / 3)) continue;
    st.x[k] += std::uniform_real_distribution<double>(-0.01, 0.01)(rng);
    st.v[k] = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  }
  const GraphFeatures g = build_graph(st, ctx);
  const Normalizer norm = identity_normalizer(CaseKind::kPlate);
  const GnnConfig cfg = default_gnn_config(CaseKind::kPlate, 2, 16);
  bool finite = true;
  for (int draw = 0; draw < 1000; ++draw) {
    const GnnParams p = GnnParams::init(cfg, static_cast<std::uint64_t>(draw));
    const Tensor acc = gnn_forward(g, ctx, p, norm);
    for (std::size_t k = 0; k < acc.numel(); ++k) finite = finite && std::isfinite(acc[k]);
    if (draw == 0) {
      const Tensor again = gnn_forward(g, ctx, p, norm);
      CHECK(std::equal(acc.data().begin(), acc.data().end(), again.data().begin()));
      for (std::size_t i = 0; i < rest.n_nodes(); ++i) {
        for (int d = 0; d < 3; ++d) {
          if (rest.clamped(i)) CHECK(acc.at(i, d) == 0.0);
        }
      }
    }
  }
  CHECK(finite);
  const GnnParams rod_model = GnnParams::init(default_gnn_config(CaseKind::kRod, 1, 8), 1);
  CHECK_THROWS_AS(gnn_forward(g, ctx, rod_model, norm), SchemaError);
}

TEST_CASE("gradients with respect to every parameter tensor pass gradcheck") {
  std::mt19937_64 rng(15);
  const GnnConfig cfg = small_config(2, 16);
  const GnnParams p = GnnParams::init(cfg, 16);
  const std::size_t n = 5;
  std::vector<Index> s, r;
  path_edges(n, s, r);
  const Tensor nodes = random_matrix(n, 3, rng);
  const Tensor edges = random_matrix(s.size(), 2, rng);
  const Tensor readout = random_matrix(n, 2, rng);
  double worst = 0.0;
  for (std::size_t k = 0; k < p.tensors.size(); ++k) {
    auto f = [&](const Tensor& t) {
      std::vector<Tensor> ps = p.tensors;
      ps[k] = t;
      return sum(mul(gnn_apply(nodes, edges, s, r, cfg, ps), readout));
    };
    const double err = gradcheck(f, p.tensors[k]);
    if (err >= 1e-5) MESSAGE(p.names[k] << " err " << err);
    worst = std::max(worst, err);
  }
  CHECK(worst < 1e-5);
}
