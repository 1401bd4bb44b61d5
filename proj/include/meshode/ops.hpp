#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "meshode/tensor.hpp"

// Differentiable tensor ops. Every op records itself on the active tape when
// at least one input is tracked there; otherwise it is a plain evaluation.
namespace meshode {

using Index = std::int32_t;

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x W + b with x [m,k], W [k,n], b [n]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// y[r,c] = x[r,c] * col_scale[c] + col_shift[c]; scale and shift are constants.
Tensor affine_cols(const Tensor& x, std::span<const double> col_scale,
                   std::span<const double> col_shift);

// Concatenation along the last axis of rank-2 tensors with equal row counts.
Tensor concat(const std::vector<Tensor>& parts);

Tensor relu(const Tensor& x);

// While alive, every relu on this thread appends its activation signs to
// pattern(). Used to keep finite-difference stencils off relu kinks.
class ReluTrace {
 public:
  ReluTrace();
  ~ReluTrace();
  ReluTrace(const ReluTrace&) = delete;
  ReluTrace& operator=(const ReluTrace&) = delete;

  const std::vector<bool>& pattern() const { return bits_; }

 private:
  friend Tensor relu(const Tensor& x);
  std::vector<bool> bits_;
  ReluTrace* prev_;
};
// Normalizes each row (last axis) to zero mean and unit variance.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);

// out[i] = x[index[i]] (rows).
Tensor index_select(const Tensor& x, std::span<const Index> index);
// out[targets[i]] += x[i] (rows), accumulated in increasing i.
Tensor scatter_sum(const Tensor& x, std::span<const Index> targets,
                   std::size_t n_out);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum((a - b)^2) as a scalar.
Tensor squared_diff(const Tensor& a, const Tensor& b);

}  // namespace meshode
