#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace meshode {

using Shape = std::vector<std::size_t>;

// Every buffer starts on a 64-byte boundary. Eigen's vectorized kernels peel
// differently depending on alignment, so a fixed alignment keeps results
// bit-identical regardless of heap layout.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Dense row-major float64 tensor. The payload is immutable and shared, so
// copies are cheap and untaped tensors can be shared across threads.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, Buffer data);
  Tensor(Shape shape, const std::vector<double>& data);
  Tensor(Shape shape, std::initializer_list<double> data);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_->size(); }
  std::size_t rows() const;  // leading dimension of a rank-2 tensor
  std::size_t cols() const;  // trailing dimension

  std::span<const double> data() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  // True when this tensor is a node of the currently active tape.
  bool requires_grad() const;
  std::int64_t node_id() const { return node_; }
  std::uint64_t tape_id() const { return tape_id_; }

  // Same payload, no tape attachment.
  Tensor detach() const;

  std::shared_ptr<const Buffer> storage() const { return data_; }

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const Buffer> data_;
  std::int64_t node_ = -1;
  std::uint64_t tape_id_ = 0;
};

enum class OpKind {
  kLeaf,
  kMatmul,
  kLinear,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAffineCols,
  kConcat,
  kRelu,
  kLayerNorm,
  kIndexSelect,
  kScatterSum,
  kSum,
  kMean,
  kSquaredDiff,
  kCustom,
};

const char* op_name(OpKind op);

// Vector-Jacobian product of one recorded op. grad_in[k] is null when input k
// does not need a gradient; otherwise it is a zero-initialized (or partially
// accumulated) buffer of the input's size to which the op adds its share.
using BackwardFn = std::function<void(std::span<const double> grad_out,
                                      std::span<Buffer* const> grad_in)>;

struct TapeNode {
  OpKind op = OpKind::kLeaf;
  std::vector<std::int64_t> inputs;  // -1 for untracked constants
  Shape shape;
  BackwardFn backward;
};

// Gradients produced by Tape::backward, keyed by tape node id.
class Gradients {
 public:
  bool has(const Tensor& t) const;
  // Gradient with the same shape as t; zeros if t did not influence the root.
  Tensor of(const Tensor& t) const;
  std::span<const double> raw(std::int64_t node_id) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::uint64_t tape_id_ = 0;
  std::vector<Buffer> grads_;
  std::vector<Shape> shapes_;
};

// Define-by-run reverse-mode tape. Single-threaded; activate with TapeScope.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers t as a leaf requiring a gradient.
  Tensor watch(const Tensor& t);
  std::vector<Tensor> watch(std::span<const Tensor> ts);

  // Reverse sweep from a rank-0 root. Consumes the tape. Only leaf gradients
  // are kept unless retain_all is set.
  Gradients backward(const Tensor& root, bool retain_all = false);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  std::uint64_t id() const { return id_; }
  const TapeNode& node(std::size_t i) const { return nodes_[i]; }

  // Appends an op node whose value is `output`. Inputs not tracked on this
  // tape are recorded as constants.
  Tensor record(OpKind op, std::initializer_list<const Tensor*> inputs,
                Tensor output, BackwardFn backward);
  Tensor record(OpKind op, const std::vector<const Tensor*>& inputs,
                Tensor output, BackwardFn backward);

  bool tracks(const Tensor& t) const {
    return t.tape_id_ == id_ && t.node_ >= 0;
  }

  static Tape* active();

 private:
  friend class TapeScope;

  std::uint64_t id_;
  bool consumed_ = false;
  std::vector<TapeNode> nodes_;
};

// Makes a tape the active one on this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Returns the active tape if any of the inputs lives on it, else null.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);

}  // namespace meshode
