#include "meshode/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "meshode/errors.hpp"
#include "meshode/mgn.hpp"

namespace meshode {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using GradList = std::vector<std::vector<double>>;

GradList zero_grads(std::span<const Tensor> params) {
  GradList g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g[i].assign(params[i].numel(), 0.0);
  return g;
}

void accumulate(GradList& acc, const Gradients& grads, std::span<const Tensor> watched) {
  for (std::size_t i = 0; i < watched.size(); ++i) {
    const Tensor g = grads.of(watched[i]);
    for (std::size_t k = 0; k < acc[i].size(); ++k) acc[i][k] += g[k];
  }
}

void scale_grads(GradList& g, double s) {
  for (auto& row : g) {
    for (double& x : row) x *= s;
  }
}

std::size_t rollout_samples(const TrainConfig& cfg, const Trajectory& traj) {
  const std::size_t full = traj.states.size() - 1;
  return cfg.rollout_length == 0 ? full : std::min(cfg.rollout_length, full);
}

Tensor free_rows_mask(const GraphContext& ctx) {
  return ctx.has_clamped() ? ctx.free_mask
                           : Tensor::filled({ctx.n_nodes, static_cast<std::size_t>(ctx.dim)}, 1.0);
}

// One-step supervision with the features already normalized.
struct MgnSample {
  std::size_t traj = 0;
  std::size_t step = 0;
  Tensor node;
  Tensor edge;
  Tensor target;
};

MgnSample make_mgn_sample(const Trajectory& traj, const GraphContext& ctx, std::size_t t_index,
                          std::size_t k, const Normalizer& norm, double noise_std,
                          std::mt19937_64* rng) {
  const std::size_t n = traj.n_nodes(), dim = static_cast<std::size_t>(traj.dim());
  MeshState s = traj.states[k];
  std::vector<double> a = fd_acceleration(traj, k);
  if (noise_std > 0.0 && rng != nullptr) {
    // Keep the target consistent with the update from the perturbed state.
    std::normal_distribution<double> noise(0.0, noise_std);
    const double dt = traj.dt_sample();
    for (std::size_t i = 0; i < n; ++i) {
      if (traj.rest.clamped(i)) continue;
      for (std::size_t c = 0; c < dim; ++c) {
        const double e = noise(*rng);
        s.x[i * dim + c] += e;
        a[i * dim + c] -= e / (dt * dt);
      }
    }
  }
  const GraphFeatures g = build_graph(s, ctx);
  return {t_index, k, norm.node.normalize(g.node_features), norm.edge.normalize(g.edge_features),
          norm.target.normalize(Tensor({n, dim}, std::move(a)))};
}

Tensor stack_rows(const std::vector<const Tensor*>& parts) {
  std::size_t rows = 0;
  const std::size_t cols = parts.front()->shape()[1];
  for (const Tensor* p : parts) rows += p->shape()[0];
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const Tensor* p : parts) data.insert(data.end(), p->data().begin(), p->data().end());
  return Tensor({rows, cols}, std::move(data));
}

// Masked mean squared error of the normalized prediction over a minibatch
// merged into one disjoint graph.
Tensor mgn_batch_loss(std::span<const MgnSample* const> batch,
                      std::span<const GraphContext> contexts, std::span<const Tensor> masks,
                      const GnnConfig& gcfg, std::span<const Tensor> params) {
  std::vector<const Tensor*> nodes, edges, targets, mask_parts;
  std::vector<Index> senders, receivers;
  Index offset = 0;
  for (const MgnSample* s : batch) {
    const GraphContext& ctx = contexts[s->traj];
    nodes.push_back(&s->node);
    edges.push_back(&s->edge);
    targets.push_back(&s->target);
    mask_parts.push_back(&masks[s->traj]);
    for (std::size_t e = 0; e < ctx.n_edges(); ++e) {
      senders.push_back(ctx.senders[e] + offset);
      receivers.push_back(ctx.receivers[e] + offset);
    }
    offset += static_cast<Index>(ctx.n_nodes);
  }
  const Tensor mask = stack_rows(mask_parts);
  const Tensor target = stack_rows(targets);
  const Tensor out =
      gnn_apply(stack_rows(nodes), stack_rows(edges), senders, receivers, gcfg, params);
  double n_free = 0.0;
  for (double m : mask.data()) n_free += m;
  return scale(squared_diff(mul(out, mask), mul(target, mask)), 1.0 / std::max(n_free, 1.0));
}

void check_set(const TrainConfig& cfg, std::span<const Trajectory> set, const char* what) {
  for (const Trajectory& t : set) {
    if (t.kind() != cfg.case_kind) {
      throw SchemaError(std::string("train: ") + what + " set holds a " +
                        case_name(t.kind()) + " trajectory for a " + case_name(cfg.case_kind) +
                        " run");
    }
    if (t.states.size() < 3) {
      throw ContractError(std::string("train: ") + what + " trajectory with " +
                          std::to_string(t.states.size()) + " samples (need at least 3)");
    }
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train: epochs must be > 0");
  if (!(lr0 > 0.0)) throw ConfigError("train: lr0 must be > 0");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("train: lr_decay_factor must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (substeps < 1) throw ConfigError("train: substeps must be >= 1");
  if (noise_std < 0.0) throw ConfigError("train: noise_std must be >= 0");
  if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
  if (!(max_skip_fraction >= 0.0 && max_skip_fraction <= 1.0)) {
    throw ConfigError("train: max_skip_fraction must lie in [0, 1]");
  }
  gnn().validate();
}

GnnConfig TrainConfig::gnn() const {
  GnnConfig g = default_gnn_config(case_kind, layers, hidden);
  g.residual = residual;
  return g;
}

TrainConfig default_train_config(ModelKind model, CaseKind kind) {
  TrainConfig cfg;
  cfg.model = model;
  cfg.case_kind = kind;
  if (kind == CaseKind::kRod) {
    cfg.epochs = 400;
    cfg.lr_decay_epochs = {100, 200, 300};
    cfg.layers = model == ModelKind::kMeshOde ? 1 : 15;
  } else {
    cfg.epochs = 600;
    cfg.lr_decay_epochs = {200, 400};
    cfg.layers = model == ModelKind::kMeshOde ? 1 : 30;
  }
  cfg.batch_size = model == ModelKind::kMeshOde ? 1 : 16;
  return cfg;
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr0;
  for (int e : cfg.lr_decay_epochs) {
    if (epoch >= e) lr /= cfg.lr_decay_factor;
  }
  return lr;
}

Tensor trajectory_loss(std::span<const Tensor> predicted, std::span<const Tensor> truth,
                       LossMode mode) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw ContractError("trajectory_loss: " + std::to_string(predicted.size()) +
                        " predicted samples vs " + std::to_string(truth.size()) + " true");
  }
  Tensor total;
  for (std::size_t j = 0; j < predicted.size(); ++j) {
    if (predicted[j].shape() != truth[j].shape()) {
      throw ContractError("trajectory_loss: shape " + shape_str(predicted[j].shape()) +
                          " vs " + shape_str(truth[j].shape()) + " at sample " +
                          std::to_string(j));
    }
    const Tensor term = squared_diff(predicted[j], truth[j]);
    total = j == 0 ? term : add(total, term);
  }
  double denom = static_cast<double>(predicted.size());
  if (mode == LossMode::kPerNodeMean) denom *= static_cast<double>(predicted[0].shape()[0]);
  return scale(total, 1.0 / denom);
}

double trajectory_loss(const Trajectory& predicted, const Trajectory& truth, LossMode mode) {
  if (predicted.states.size() != truth.states.size() || predicted.states.size() < 2 ||
      predicted.n_nodes() != truth.n_nodes() || predicted.dim() != truth.dim()) {
    throw ContractError("trajectory_loss: trajectories differ in grid or mesh");
  }
  const int dim = truth.dim();
  std::vector<Tensor> p, t;
  for (std::size_t j = 1; j < truth.states.size(); ++j) {
    if (std::abs(predicted.states[j].t - truth.states[j].t) > 1e-9 * (1.0 + truth.states[j].t)) {
      throw ContractError("trajectory_loss: time grids differ at sample " + std::to_string(j));
    }
    p.push_back(positions_tensor(predicted.states[j], dim));
    t.push_back(positions_tensor(truth.states[j], dim));
  }
  return trajectory_loss(p, t, mode).item();
}

AdamState AdamState::zeros(std::span<const Tensor> params) {
  AdamState s;
  s.m = zero_grads(params);
  s.v = zero_grads(params);
  return s;
}

void adam_update(std::vector<Tensor>& theta, std::span<const std::vector<double>> grads,
                 AdamState& state, double lr, const TrainConfig& cfg) {
  if (grads.size() != theta.size() || state.m.size() != theta.size() ||
      state.v.size() != theta.size()) {
    throw DimensionError("adam_update: parameter, gradient and moment counts differ");
  }
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const std::size_t n = theta[i].numel();
    if (grads[i].size() != n || state.m[i].size() != n || state.v[i].size() != n) {
      throw DimensionError("adam_update: size mismatch for parameter " + std::to_string(i));
    }
    std::vector<double> w(theta[i].data().begin(), theta[i].data().end());
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < n; ++k) {
      const double g = grads[i][k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      w[k] = w[k] * decay - lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.adam_eps);
    }
    theta[i] = Tensor(theta[i].shape(), std::move(w));
  }
}

double evaluate_loss(const Model& model, const TrainConfig& cfg,
                     std::span<const Trajectory> data) {
  if (data.empty()) return kNaN;
  double total = 0.0;
  if (model.kind == ModelKind::kMeshOde) {
    for (const Trajectory& t : data) {
      try {
        total += trajectory_loss(predict(model, t), t, cfg.loss_mode);
      } catch (const RolloutBlowupError&) {
        return std::numeric_limits<double>::infinity();
      }
    }
    return total / static_cast<double>(data.size());
  }
  std::size_t count = 0;
  const GnnConfig& gcfg = model.params.config;
  for (const Trajectory& t : data) {
    const GraphContext ctx = make_graph_context(t);
    const std::vector<GraphContext> contexts{ctx};
    const std::vector<Tensor> masks{free_rows_mask(ctx)};
    for (std::size_t k = 0; k + 1 < t.states.size(); ++k) {
      const MgnSample s = make_mgn_sample(t, ctx, 0, k, model.norm, 0.0, nullptr);
      const MgnSample* one[] = {&s};
      total += mgn_batch_loss(one, contexts, masks, gcfg, model.params.tensors).item();
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

TrainResult train(const TrainConfig& cfg, std::span<const Trajectory> train_set,
                  std::span<const Trajectory> eval_set, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  check_set(cfg, train_set, "training");
  check_set(cfg, eval_set, "evaluation");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.train = cfg;
  ck.model.kind = cfg.model;
  ck.model.norm = fit_normalizer(train_set);
  ck.model.params = GnnParams::init(cfg.gnn(), cfg.seed);
  ck.model.substeps = cfg.substeps;
  ck.adam = AdamState::zeros(ck.model.params.tensors);
  const GnnConfig gcfg = ck.model.params.config;
  const Normalizer& norm = ck.model.norm;
  std::vector<Tensor>& theta = ck.model.params.tensors;

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<GraphContext> contexts;
  std::vector<Tensor> masks;
  for (const Trajectory& t : train_set) {
    contexts.push_back(make_graph_context(t));
    masks.push_back(free_rows_mask(contexts.back()));
  }

  std::vector<MgnSample> mgn_samples;
  if (cfg.model == ModelKind::kMgn && cfg.noise_std == 0.0) {
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      for (std::size_t k = 0; k + 1 < train_set[i].states.size(); ++k) {
        mgn_samples.push_back(make_mgn_sample(train_set[i], contexts[i], i, k, norm, 0.0, nullptr));
      }
    }
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = learning_rate(cfg, epoch);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;

    if (cfg.model == ModelKind::kMeshOde) {
      std::vector<std::size_t> order(train_set.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t b_end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
        GradList acc = zero_grads(theta);
        std::size_t ok = 0;
        for (std::size_t q = b; q < b_end; ++q) {
          const Trajectory& traj = train_set[order[q]];
          const std::size_t n_p = rollout_samples(cfg, traj);
          const std::size_t full = traj.states.size() - 1;
          std::size_t k0 = 0;
          if (n_p < full) k0 = std::uniform_int_distribution<std::size_t>(0, full - n_p)(rng);
          ++rec.samples;
          try {
            Tape tape;
            TapeScope scope(tape);
            const std::vector<Tensor> watched = tape.watch(theta);
            OdeConfig ode;
            ode.dt_sample = traj.dt_sample();
            ode.substeps = cfg.substeps;
            ode.n_samples = n_p;
            const auto states = rollout(to_ode_state(traj.states[k0], traj.dim()), ode,
                                        gnn_dynamics(contexts[order[q]], gcfg, watched, norm));
            std::vector<Tensor> pred, truth;
            for (std::size_t j = 1; j <= n_p; ++j) {
              pred.push_back(states[j].x);
              truth.push_back(positions_tensor(traj.states[k0 + j], traj.dim()));
            }
            const Tensor loss = trajectory_loss(pred, truth, cfg.loss_mode);
            if (!std::isfinite(loss.item())) throw RolloutBlowupError("non-finite loss", n_p);
            accumulate(acc, tape.backward(loss), watched);
            loss_sum += loss.item();
            ++loss_count;
            ++ok;
          } catch (const RolloutBlowupError&) {
            ++rec.skipped;
          }
        }
        if (ok == 0) continue;
        scale_grads(acc, 1.0 / static_cast<double>(ok));
        adam_update(theta, acc, ck.adam, lr, cfg);
      }
    } else {
      if (cfg.noise_std > 0.0) {
        mgn_samples.clear();
        for (std::size_t i = 0; i < train_set.size(); ++i) {
          for (std::size_t k = 0; k + 1 < train_set[i].states.size(); ++k) {
            mgn_samples.push_back(
                make_mgn_sample(train_set[i], contexts[i], i, k, norm, cfg.noise_std, &rng));
          }
        }
      }
      std::vector<std::size_t> order(mgn_samples.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t b_end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
        std::vector<const MgnSample*> batch;
        for (std::size_t q = b; q < b_end; ++q) batch.push_back(&mgn_samples[order[q]]);
        rec.samples += batch.size();
        Tape tape;
        TapeScope scope(tape);
        const std::vector<Tensor> watched = tape.watch(theta);
        const Tensor loss = mgn_batch_loss(batch, contexts, masks, gcfg, watched);
        if (!std::isfinite(loss.item())) {
          rec.skipped += batch.size();
          continue;
        }
        GradList acc = zero_grads(theta);
        accumulate(acc, tape.backward(loss), watched);
        adam_update(theta, acc, ck.adam, lr, cfg);
        loss_sum += loss.item() * static_cast<double>(batch.size());
        loss_count += batch.size();
      }
    }

    if (static_cast<double>(rec.skipped) >
        cfg.max_skip_fraction * static_cast<double>(rec.samples)) {
      throw TrainingAbort("train: epoch " + std::to_string(rec.epoch) + " skipped " +
                          std::to_string(rec.skipped) + " of " + std::to_string(rec.samples) +
                          " samples after non-finite rollouts (limit " +
                          std::to_string(cfg.max_skip_fraction * 100.0) + "%)");
    }
    rec.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : kNaN;
    const bool last = epoch + 1 == cfg.epochs;
    rec.eval_loss = kNaN;
    if (!eval_set.empty() && cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      rec.eval_loss = evaluate_loss(ck.model, cfg, eval_set);
    }
    ck.epochs_completed = epoch + 1;
    rec.seconds = seconds_since(t0);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

void write_loss_csv(std::ostream& os, std::span<const EpochRecord> history) {
  os << "epoch,lr,train_loss,eval_loss,samples,skipped,seconds\n";
  const auto old_precision = os.precision(17);
  for (const EpochRecord& r : history) {
    os << r.epoch << ',' << r.lr << ',' << r.train_loss << ',';
    if (!std::isnan(r.eval_loss)) os << r.eval_loss;
    os << ',' << r.samples << ',' << r.skipped << ',' << r.seconds << '\n';
  }
  os.precision(old_precision);
}

}  // namespace meshode
