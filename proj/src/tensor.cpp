#include "meshode/tensor.hpp"

#include <atomic>
#include <numeric>
#include <sstream>

#include "meshode/errors.hpp"

namespace meshode {

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_tape_id{1};

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : data_(std::make_shared<const Buffer>(1, 0.0)) {}

Tensor::Tensor(Shape shape, const std::vector<double>& data)
    : Tensor(std::move(shape), Buffer(data.begin(), data.end())) {}

Tensor::Tensor(Shape shape, std::initializer_list<double> data)
    : Tensor(std::move(shape), Buffer(data)) {}

Tensor::Tensor(Shape shape, Buffer data) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != data.size()) {
    throw DimensionError("Tensor: shape " + shape_str(shape_) + " holds " +
                         std::to_string(shape_numel(shape_)) +
                         " values, got " + std::to_string(data.size()));
  }
  data_ = std::make_shared<const Buffer>(std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, Buffer{value}); }

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), Buffer(n, value));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) {
    throw DimensionError("rows() on tensor of shape " + shape_str(shape_));
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() == 0) throw DimensionError("cols() on a scalar tensor");
  return shape_.back();
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return (*data_)[r * cols() + c];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape_));
  }
  return (*data_)[0];
}

bool Tensor::requires_grad() const {
  const Tape* tape = Tape::active();
  return tape != nullptr && tape->tracks(*this);
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.node_ = -1;
  t.tape_id_ = 0;
  return t;
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kLinear: return "linear";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAffineCols: return "affine_cols";
    case OpKind::kConcat: return "concat";
    case OpKind::kRelu: return "relu";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kIndexSelect: return "index_select";
    case OpKind::kScatterSum: return "scatter_sum";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSquaredDiff: return "squared_diff";
    case OpKind::kCustom: return "custom";
  }
  return "?";
}

bool Gradients::has(const Tensor& t) const {
  return t.tape_id() == tape_id_ && t.node_id() >= 0 &&
         static_cast<std::size_t>(t.node_id()) < grads_.size() &&
         !grads_[t.node_id()].empty();
}

Tensor Gradients::of(const Tensor& t) const {
  if (!has(t)) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), grads_[t.node_id()]);
}

std::span<const double> Gradients::raw(std::int64_t node_id) const {
  return grads_.at(node_id);
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

Tensor Tape::watch(const Tensor& t) {
  if (consumed_) throw ContractError("watch() on a consumed tape");
  Tensor out = t.detach();
  out.node_ = static_cast<std::int64_t>(nodes_.size());
  out.tape_id_ = id_;
  nodes_.push_back(TapeNode{OpKind::kLeaf, {}, t.shape(), {}});
  return out;
}

std::vector<Tensor> Tape::watch(std::span<const Tensor> ts) {
  std::vector<Tensor> out;
  out.reserve(ts.size());
  for (const Tensor& t : ts) out.push_back(watch(t));
  return out;
}

Tensor Tape::record(OpKind op, std::initializer_list<const Tensor*> inputs,
                    Tensor output, BackwardFn backward) {
  return record(op, std::vector<const Tensor*>(inputs), std::move(output),
                std::move(backward));
}

Tensor Tape::record(OpKind op, const std::vector<const Tensor*>& inputs,
                    Tensor output, BackwardFn backward) {
  if (consumed_) throw ContractError("record() on a consumed tape");
  TapeNode node;
  node.op = op;
  node.shape = output.shape();
  node.inputs.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    node.inputs.push_back(tracks(*in) ? in->node_ : -1);
  }
  node.backward = std::move(backward);
  output.node_ = static_cast<std::int64_t>(nodes_.size());
  output.tape_id_ = id_;
  nodes_.push_back(std::move(node));
  return output;
}

Gradients Tape::backward(const Tensor& root, bool retain_all) {
  if (root.rank() != 0) {
    throw ContractError("backward: root must be a scalar, got shape " +
                        shape_str(root.shape()));
  }
  if (!tracks(root)) {
    throw ContractError("backward: root is not recorded on this tape");
  }
  if (consumed_) throw ContractError("backward: tape already consumed");
  consumed_ = true;

  Gradients result;
  result.tape_id_ = id_;
  result.grads_.resize(nodes_.size());
  result.shapes_.resize(nodes_.size());
  auto& grads = result.grads_;
  grads[root.node_] = {1.0};

  std::vector<Buffer*> grad_in;
  for (std::int64_t k = root.node_; k >= 0; --k) {
    TapeNode& node = nodes_[k];
    result.shapes_[k] = node.shape;
    if (grads[k].empty() || node.op == OpKind::kLeaf) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const std::int64_t in = node.inputs[i];
      if (in < 0) continue;
      if (grads[in].empty()) {
        grads[in].assign(shape_numel(nodes_[in].shape), 0.0);
      }
      grad_in[i] = &grads[in];
    }
    node.backward(grads[k], grad_in);
    node.backward = nullptr;
    if (!retain_all) {
      grads[k].clear();
      grads[k].shrink_to_fit();
    }
  }
  // Any node beyond the root cannot influence it.
  nodes_.clear();
  return result;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr || tape->consumed()) return nullptr;
  for (const Tensor* t : inputs) {
    if (tape->tracks(*t)) return tape;
  }
  return nullptr;
}

}  // namespace meshode
