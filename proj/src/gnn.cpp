#include "meshode/gnn.hpp"

#include <cmath>
#include <random>

#include "meshode/errors.hpp"

namespace meshode {

namespace {

constexpr std::size_t kMlpSize = 6;
constexpr std::size_t kSplitMlpEdge = 8;
constexpr std::size_t kSplitMlpNode = 7;

std::size_t layer_offset(int layer) {
  return 2 * kMlpSize + static_cast<std::size_t>(layer) * (kSplitMlpEdge + kSplitMlpNode);
}

std::size_t decoder_offset(const GnnConfig& cfg) { return layer_offset(cfg.layers); }

std::size_t tensor_count(const GnnConfig& cfg) { return decoder_offset(cfg) + kMlpSize; }

struct Slot {
  std::string name;
  Shape shape;
  std::size_t fan_in;  // 0 for biases
};

std::vector<Slot> layout(const GnnConfig& cfg) {
  const std::size_t h = static_cast<std::size_t>(cfg.hidden);
  std::vector<Slot> s;
  auto mlp = [&](const std::string& p, std::size_t in, std::size_t out) {
    s.push_back({p + ".w0", {in, h}, in});
    s.push_back({p + ".b0", {h}, 0});
    s.push_back({p + ".w1", {h, h}, h});
    s.push_back({p + ".b1", {h}, 0});
    s.push_back({p + ".w2", {h, out}, h});
    s.push_back({p + ".b2", {out}, 0});
  };
  mlp("node_enc", static_cast<std::size_t>(cfg.node_in), h);
  mlp("edge_enc", static_cast<std::size_t>(cfg.edge_in), h);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string e = "proc" + std::to_string(l) + ".edge";
    s.push_back({e + ".we", {h, h}, 3 * h});
    s.push_back({e + ".ws", {h, h}, 3 * h});
    s.push_back({e + ".wr", {h, h}, 3 * h});
    s.push_back({e + ".b0", {h}, 0});
    s.push_back({e + ".w1", {h, h}, h});
    s.push_back({e + ".b1", {h}, 0});
    s.push_back({e + ".w2", {h, h}, h});
    s.push_back({e + ".b2", {h}, 0});
    const std::string v = "proc" + std::to_string(l) + ".node";
    s.push_back({v + ".wa", {h, h}, 2 * h});
    s.push_back({v + ".wv", {h, h}, 2 * h});
    s.push_back({v + ".b0", {h}, 0});
    s.push_back({v + ".w1", {h, h}, h});
    s.push_back({v + ".b1", {h}, 0});
    s.push_back({v + ".w2", {h, h}, h});
    s.push_back({v + ".b2", {h}, 0});
  }
  mlp("decoder", h, static_cast<std::size_t>(cfg.out_dim));
  return s;
}

void check_params(const GnnConfig& cfg, std::span<const Tensor> p) {
  if (p.size() != tensor_count(cfg)) {
    throw ConfigError("gnn: expected " + std::to_string(tensor_count(cfg)) +
                      " parameter tensors for " + std::to_string(cfg.layers) +
                      " layers, got " + std::to_string(p.size()));
  }
}

// Hidden part shared by all MLPs: relu(first) -> linear -> relu -> linear.
Tensor mlp_tail(const Tensor& first, const Tensor* p) {
  Tensor h = relu(first);
  h = relu(linear(h, p[0], p[1]));
  return linear(h, p[2], p[3]);
}

Tensor mlp(const Tensor& x, const Tensor* p, bool norm_out) {
  Tensor out = mlp_tail(linear(x, p[0], p[1]), p + 2);
  return norm_out ? layer_norm(out) : out;
}

void check_width(const char* what, const Tensor& t, int want) {
  if (t.rank() != 2 || t.cols() != static_cast<std::size_t>(want)) {
    throw ConfigError(std::string("gnn: ") + what + " features have shape " +
                      shape_str(t.shape()) + ", model expects width " + std::to_string(want));
  }
}

}  // namespace

void GnnConfig::validate() const {
  if (node_in <= 0 || edge_in <= 0 || out_dim <= 0) {
    throw ConfigError("gnn: input and output widths must be positive");
  }
  if (hidden <= 0) throw ConfigError("gnn: hidden width must be positive");
  if (layers < 1) throw ConfigError("gnn: at least one message-passing layer is required");
}

GnnConfig default_gnn_config(CaseKind kind, int layers, int hidden) {
  GnnConfig cfg;
  cfg.node_in = node_feature_dim(kind);
  cfg.edge_in = edge_feature_dim(kind);
  cfg.out_dim = spatial_dim(kind);
  cfg.hidden = hidden;
  cfg.layers = layers;
  return cfg;
}

GnnParams GnnParams::zeros(const GnnConfig& cfg) {
  cfg.validate();
  GnnParams p;
  p.config = cfg;
  for (const Slot& s : layout(cfg)) {
    p.names.push_back(s.name);
    p.tensors.push_back(Tensor::zeros(s.shape));
  }
  return p;
}

GnnParams GnnParams::init(const GnnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  GnnParams p;
  p.config = cfg;
  std::mt19937_64 rng(seed);
  for (const Slot& s : layout(cfg)) {
    std::vector<double> v(shape_numel(s.shape), 0.0);
    if (s.fan_in > 0) {
      const double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& x : v) x = u(rng);
    }
    p.names.push_back(s.name);
    p.tensors.emplace_back(s.shape, std::move(v));
  }
  return p;
}

std::size_t GnnParams::count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors) n += t.numel();
  return n;
}

std::size_t GnnParams::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ContractError("gnn: no parameter named " + name);
}

Latents encode(const Tensor& node_features, const Tensor& edge_features, const GnnConfig& cfg,
               std::span<const Tensor> params) {
  check_params(cfg, params);
  check_width("node", node_features, cfg.node_in);
  check_width("edge", edge_features, cfg.edge_in);
  return {mlp(node_features, params.data(), true),
          mlp(edge_features, params.data() + kMlpSize, true)};
}

Tensor process(const Latents& latents, std::span<const Index> senders,
               std::span<const Index> receivers, const GnnConfig& cfg,
               std::span<const Tensor> params) {
  check_params(cfg, params);
  const std::size_t n = latents.nodes.rows();
  Tensor hv = latents.nodes;
  Tensor he = latents.edges;
  for (int l = 0; l < cfg.layers; ++l) {
    const Tensor* pe = params.data() + layer_offset(l);
    const Tensor* pv = pe + kSplitMlpEdge;
    // Concat-then-linear over [h_e, h_sender, h_receiver], with the sender and
    // receiver projections applied per node before gathering.
    const Tensor from_edge = linear(he, pe[0], pe[3]);
    const Tensor from_sender = index_select(matmul(hv, pe[1]), senders);
    const Tensor from_receiver = index_select(matmul(hv, pe[2]), receivers);
    const Tensor msg =
        layer_norm(mlp_tail(add(add(from_edge, from_sender), from_receiver), pe + 4));
    const Tensor agg = scatter_sum(msg, receivers, n);
    const Tensor node_in = add(matmul(agg, pv[0]), linear(hv, pv[1], pv[2]));
    const Tensor update = layer_norm(mlp_tail(node_in, pv + 3));
    he = cfg.residual ? add(he, msg) : msg;
    hv = cfg.residual ? add(hv, update) : update;
  }
  return hv;
}

Tensor decode(const Tensor& node_latents, const GnnConfig& cfg, std::span<const Tensor> params) {
  check_params(cfg, params);
  return mlp(node_latents, params.data() + decoder_offset(cfg), false);
}

Tensor gnn_apply(const Tensor& node_features, const Tensor& edge_features,
                 std::span<const Index> senders, std::span<const Index> receivers,
                 const GnnConfig& cfg, std::span<const Tensor> params) {
  const Latents lat = encode(node_features, edge_features, cfg, params);
  return decode(process(lat, senders, receivers, cfg, params), cfg, params);
}

Tensor gnn_forward(const GraphFeatures& g, const GraphContext& ctx, const GnnConfig& cfg,
                   std::span<const Tensor> params, const Normalizer& norm) {
  if (cfg.out_dim != ctx.dim) {
    throw SchemaError("gnn: model predicts " + std::to_string(cfg.out_dim) +
                      "-D accelerations for a " + std::to_string(ctx.dim) + "-D mesh");
  }
  const Tensor out = gnn_apply(norm.node.normalize(g.node_features),
                               norm.edge.normalize(g.edge_features), g.senders, g.receivers,
                               cfg, params);
  const Tensor acc = norm.target.denormalize(out);
  return ctx.has_clamped() ? mul(acc, ctx.free_mask) : acc;
}

Tensor gnn_forward(const GraphFeatures& g, const GraphContext& ctx, const GnnParams& params,
                   const Normalizer& norm) {
  return gnn_forward(g, ctx, params.config, params.tensors, norm);
}

}  // namespace meshode
