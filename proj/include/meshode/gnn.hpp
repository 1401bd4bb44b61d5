#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "meshode/graph.hpp"

namespace meshode {

struct GnnConfig {
  int node_in = 7;
  int edge_in = 6;
  int out_dim = 2;
  int hidden = 128;
  int layers = 1;
  bool residual = true;

  void validate() const;
  bool operator==(const GnnConfig&) const = default;
};

GnnConfig default_gnn_config(CaseKind kind, int layers, int hidden = 128);

// Flat list of named weight tensors. Layout (6 or 7 tensors per MLP):
//   node_enc, edge_enc: w0 b0 w1 b1 w2 b2
//   layer l edge MLP:   we ws wr b0 w1 b1 w2 b2   (first layer split by input)
//   layer l node MLP:   wa wv b0 w1 b1 w2 b2
//   decoder:            w0 b0 w1 b1 w2 b2
struct GnnParams {
  GnnConfig config;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  // He-uniform weights drawn from the seed, zero biases.
  static GnnParams init(const GnnConfig& cfg, std::uint64_t seed);
  static GnnParams zeros(const GnnConfig& cfg);

  std::size_t count() const;  // total scalar parameters
  std::size_t find(const std::string& name) const;
};

struct Latents {
  Tensor nodes;  // [n, hidden]
  Tensor edges;  // [n_directed, hidden]
};

// Normalized features in, normalized accelerations out. `params` must follow
// the GnnParams layout for `cfg` (it may hold taped copies).
Latents encode(const Tensor& node_features, const Tensor& edge_features, const GnnConfig& cfg,
               std::span<const Tensor> params);
Tensor process(const Latents& latents, std::span<const Index> senders,
               std::span<const Index> receivers, const GnnConfig& cfg,
               std::span<const Tensor> params);
Tensor decode(const Tensor& node_latents, const GnnConfig& cfg, std::span<const Tensor> params);

Tensor gnn_apply(const Tensor& node_features, const Tensor& edge_features,
                 std::span<const Index> senders, std::span<const Index> receivers,
                 const GnnConfig& cfg, std::span<const Tensor> params);

// Raw features in, accelerations in m/s^2 out; clamped nodes get zero.
Tensor gnn_forward(const GraphFeatures& g, const GraphContext& ctx, const GnnConfig& cfg,
                   std::span<const Tensor> params, const Normalizer& norm);
Tensor gnn_forward(const GraphFeatures& g, const GraphContext& ctx, const GnnParams& params,
                   const Normalizer& norm);

}  // namespace meshode
