#include "meshode/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "meshode/errors.hpp"

namespace meshode {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

[[noreturn]] void dim_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

[[noreturn]] void dim_error(const char* op, const Tensor& a, const char* need) {
  throw DimensionError(std::string(op) + ": expected " + need + ", got shape " +
                       shape_str(a.shape()));
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) dim_error(op, t, "a rank-2 tensor");
}

#ifndef NDEBUG
bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}
void check_finite(const char* op, std::initializer_list<const Tensor*> inputs,
                  const Buffer& out) {
  for (const Tensor* t : inputs) {
    if (!all_finite(t->data())) return;
  }
  if (!all_finite(out)) {
    throw std::runtime_error(std::string(op) + ": non-finite output from finite inputs");
  }
}
#define MESHODE_CHECK_FINITE(op, out, ...) check_finite(op, {__VA_ARGS__}, out)
#else
#define MESHODE_CHECK_FINITE(op, out, ...) ((void)0)
#endif

ConstMatMap view(const Tensor& t) {
  return ConstMatMap(t.data().data(), t.shape()[0], t.shape()[1]);
}

ConstMatMap view(std::span<const double> d, std::size_t r, std::size_t c) {
  return ConstMatMap(d.data(), r, c);
}

MatMap view(Buffer& d, std::size_t r, std::size_t c) {
  return MatMap(d.data(), r, c);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.shape()[1] != b.shape()[0]) dim_error("matmul", a, b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Buffer out(m * n);
  view(out, m, n).noalias() = view(a) * view(b);
  MESHODE_CHECK_FINITE("matmul", out, &a, &b);
  Tensor result({m, n}, std::move(out));
  Tape* tape = recording_tape({&a, &b});
  if (!tape) return result;
  auto a_data = a.storage();
  auto b_data = b.storage();
  return tape->record(
      OpKind::kMatmul, {&a, &b}, result,
      [a_data, b_data, m, k, n](std::span<const double> g,
                                std::span<Buffer* const> gin) {
        const auto G = view(g, m, n);
        if (gin[0]) view(*gin[0], m, k).noalias() += G * view(*b_data, k, n).transpose();
        if (gin[1]) view(*gin[1], k, n).noalias() += view(*a_data, m, k).transpose() * G;
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank2("linear", x);
  require_rank2("linear", w);
  if (x.shape()[1] != w.shape()[0]) dim_error("linear", x, w);
  if (b.rank() != 1 || b.shape()[0] != w.shape()[1]) dim_error("linear", w, b);
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
  Buffer out(m * n);
  auto O = view(out, m, n);
  O.noalias() = view(x) * view(w);
  O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), n);
  MESHODE_CHECK_FINITE("linear", out, &x, &w, &b);
  Tensor result({m, n}, std::move(out));
  Tape* tape = recording_tape({&x, &w, &b});
  if (!tape) return result;
  auto x_data = x.storage();
  auto w_data = w.storage();
  return tape->record(
      OpKind::kLinear, {&x, &w, &b}, result,
      [x_data, w_data, m, k, n](std::span<const double> g,
                                std::span<Buffer* const> gin) {
        const auto G = view(g, m, n);
        if (gin[0]) view(*gin[0], m, k).noalias() += G * view(*w_data, k, n).transpose();
        if (gin[1]) view(*gin[1], k, n).noalias() += view(*x_data, m, k).transpose() * G;
        if (gin[2]) {
          Eigen::Map<Eigen::RowVectorXd>(gin[2]->data(), n) += G.colwise().sum();
        }
      });
}

namespace {

template <typename F>
Buffer zip(const Tensor& a, const Tensor& b, F f) {
  Buffer out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("add", a, b);
  auto out = zip(a, b, [](double x, double y) { return x + y; });
  Tensor result(a.shape(), std::move(out));
  Tape* tape = recording_tape({&a, &b});
  if (!tape) return result;
  return tape->record(OpKind::kAdd, {&a, &b}, result,
                      [](std::span<const double> g,
                         std::span<Buffer* const> gin) {
                        for (auto* gi : gin) {
                          if (!gi) continue;
                          for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
                        }
                      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("sub", a, b);
  auto out = zip(a, b, [](double x, double y) { return x - y; });
  Tensor result(a.shape(), std::move(out));
  Tape* tape = recording_tape({&a, &b});
  if (!tape) return result;
  return tape->record(OpKind::kSub, {&a, &b}, result,
                      [](std::span<const double> g,
                         std::span<Buffer* const> gin) {
                        if (gin[0]) {
                          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                        }
                        if (gin[1]) {
                          for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
                        }
                      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("mul", a, b);
  auto out = zip(a, b, [](double x, double y) { return x * y; });
  MESHODE_CHECK_FINITE("mul", out, &a, &b);
  Tensor result(a.shape(), std::move(out));
  Tape* tape = recording_tape({&a, &b});
  if (!tape) return result;
  auto a_data = a.storage();
  auto b_data = b.storage();
  return tape->record(OpKind::kMul, {&a, &b}, result,
                      [a_data, b_data](std::span<const double> g,
                                       std::span<Buffer* const> gin) {
                        if (gin[0]) {
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*gin[0])[i] += g[i] * (*b_data)[i];
                        }
                        if (gin[1]) {
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*gin[1])[i] += g[i] * (*a_data)[i];
                        }
                      });
}

Tensor scale(const Tensor& a, double s) {
  Buffer out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  Tensor result(a.shape(), std::move(out));
  Tape* tape = recording_tape({&a});
  if (!tape) return result;
  return tape->record(OpKind::kScale, {&a}, result,
                      [s](std::span<const double> g,
                          std::span<Buffer* const> gin) {
                        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += s * g[i];
                      });
}

Tensor affine_cols(const Tensor& x, std::span<const double> col_scale,
                   std::span<const double> col_shift) {
  require_rank2("affine_cols", x);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (col_scale.size() != n || col_shift.size() != n) {
    throw DimensionError("affine_cols: " + std::to_string(n) + " columns, " +
                         std::to_string(col_scale.size()) + " scales, " +
                         std::to_string(col_shift.size()) + " shifts");
  }
  Buffer out(m * n);
  const auto d = x.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = d[r * n + c] * col_scale[c] + col_shift[c];
    }
  }
  Tensor result(x.shape(), std::move(out));
  Tape* tape = recording_tape({&x});
  if (!tape) return result;
  Buffer s(col_scale.begin(), col_scale.end());
  return tape->record(OpKind::kAffineCols, {&x}, result,
                      [s = std::move(s), m, n](std::span<const double> g,
                                               std::span<Buffer* const> gin) {
                        auto& gi = *gin[0];
                        for (std::size_t r = 0; r < m; ++r)
                          for (std::size_t c = 0; c < n; ++c) gi[r * n + c] += g[r * n + c] * s[c];
                      });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  for (const Tensor& p : parts) require_rank2("concat", p);
  const std::size_t m = parts[0].shape()[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.shape()[0] != m) dim_error("concat", parts[0], p);
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Buffer out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto d = parts[k].data();
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(d.data() + r * w, w, out.data() + r * total + offset);
    }
    offset += w;
  }
  Tensor result({m, total}, std::move(out));
  Tape* tape = Tape::active();
  bool any = false;
  if (tape && !tape->consumed()) {
    for (const Tensor& p : parts) any = any || tape->tracks(p);
  }
  if (!any) return result;
  std::vector<const Tensor*> inputs;
  for (const Tensor& p : parts) inputs.push_back(&p);
  return tape->record(OpKind::kConcat, inputs, result,
                      [widths, m, total](std::span<const double> g,
                                         std::span<Buffer* const> gin) {
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < widths.size(); ++k) {
                          const std::size_t w = widths[k];
                          if (gin[k]) {
                            auto& gi = *gin[k];
                            for (std::size_t r = 0; r < m; ++r)
                              for (std::size_t c = 0; c < w; ++c)
                                gi[r * w + c] += g[r * total + off + c];
                          }
                          off += w;
                        }
                      });
}

namespace {
thread_local ReluTrace* active_relu_trace = nullptr;
}  // namespace

ReluTrace::ReluTrace() : prev_(active_relu_trace) { active_relu_trace = this; }

ReluTrace::~ReluTrace() { active_relu_trace = prev_; }

Tensor relu(const Tensor& x) {
  Buffer out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  if (active_relu_trace) {
    auto& bits = active_relu_trace->bits_;
    for (double v : x.data()) bits.push_back(v > 0.0);
  }
  Tensor result(x.shape(), std::move(out));
  Tape* tape = recording_tape({&x});
  if (!tape) return result;
  auto y = result.storage();
  return tape->record(OpKind::kRelu, {&x}, result,
                      [y](std::span<const double> g,
                          std::span<Buffer* const> gin) {
                        auto& gi = *gin[0];
                        for (std::size_t i = 0; i < g.size(); ++i)
                          if ((*y)[i] > 0.0) gi[i] += g[i];
                      });
}

Tensor layer_norm(const Tensor& x, double eps) {
  if (x.rank() == 0) dim_error("layer_norm", x, "rank >= 1");
  const std::size_t n = x.shape().back();
  const std::size_t m = x.numel() / n;
  Buffer out(x.numel());
  Buffer inv_std(m);
  const auto d = x.data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = d.data() + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = (row[c] - mu) * is;
  }
  Tensor result(x.shape(), std::move(out));
  Tape* tape = recording_tape({&x});
  if (!tape) return result;
  auto y = result.storage();
  return tape->record(
      OpKind::kLayerNorm, {&x}, result,
      [y, inv_std = std::move(inv_std), m, n](std::span<const double> g,
                                              std::span<Buffer* const> gin) {
        auto& gi = *gin[0];
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          const double* gr = g.data() + r * n;
          const double* yr = y->data() + r * n;
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            g_mean += gr[c];
            gy_mean += gr[c] * yr[c];
          }
          g_mean *= inv_n;
          gy_mean *= inv_n;
          for (std::size_t c = 0; c < n; ++c) {
            gi[r * n + c] += inv_std[r] * (gr[c] - g_mean - yr[c] * gy_mean);
          }
        }
      });
}

Tensor index_select(const Tensor& x, std::span<const Index> index) {
  require_rank2("index_select", x);
  const std::size_t rows = x.shape()[0], n = x.shape()[1];
  Buffer out(index.size() * n);
  const auto d = x.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Index r = index[i];
    if (r < 0 || static_cast<std::size_t>(r) >= rows) {
      throw IndexError("index_select: index " + std::to_string(r) +
                       " out of range [0, " + std::to_string(rows) + ")");
    }
    std::copy_n(d.data() + r * n, n, out.data() + i * n);
  }
  Tensor result({index.size(), n}, std::move(out));
  Tape* tape = recording_tape({&x});
  if (!tape) return result;
  std::vector<Index> idx(index.begin(), index.end());
  return tape->record(OpKind::kIndexSelect, {&x}, result,
                      [idx = std::move(idx), n](std::span<const double> g,
                                                std::span<Buffer* const> gin) {
                        auto& gi = *gin[0];
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                          double* dst = gi.data() + idx[i] * n;
                          const double* src = g.data() + i * n;
                          for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
                        }
                      });
}

Tensor scatter_sum(const Tensor& x, std::span<const Index> targets,
                   std::size_t n_out) {
  require_rank2("scatter_sum", x);
  const std::size_t rows = x.shape()[0], n = x.shape()[1];
  if (targets.size() != rows) {
    throw DimensionError("scatter_sum: " + std::to_string(rows) + " rows but " +
                         std::to_string(targets.size()) + " targets");
  }
  Buffer out(n_out * n, 0.0);
  const auto d = x.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const Index t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= n_out) {
      throw IndexError("scatter_sum: target " + std::to_string(t) +
                       " out of range [0, " + std::to_string(n_out) + ")");
    }
    double* dst = out.data() + t * n;
    const double* src = d.data() + i * n;
    for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
  }
  Tensor result({n_out, n}, std::move(out));
  Tape* tape = recording_tape({&x});
  if (!tape) return result;
  std::vector<Index> tgt(targets.begin(), targets.end());
  return tape->record(OpKind::kScatterSum, {&x}, result,
                      [tgt = std::move(tgt), n](std::span<const double> g,
                                                std::span<Buffer* const> gin) {
                        auto& gi = *gin[0];
                        for (std::size_t i = 0; i < tgt.size(); ++i) {
                          const double* src = g.data() + tgt[i] * n;
                          double* dst = gi.data() + i * n;
                          for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
                        }
                      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor result = Tensor::scalar(s);
  Tape* tape = recording_tape({&x});
  if (!tape) return result;
  return tape->record(OpKind::kSum, {&x}, result,
                      [](std::span<const double> g,
                         std::span<Buffer* const> gin) {
                        for (double& v : *gin[0]) v += g[0];
                      });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  Tensor result = Tensor::scalar(s * inv);
  Tape* tape = recording_tape({&x});
  if (!tape) return result;
  return tape->record(OpKind::kMean, {&x}, result,
                      [inv](std::span<const double> g,
                            std::span<Buffer* const> gin) {
                        for (double& v : *gin[0]) v += g[0] * inv;
                      });
}

Tensor squared_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("squared_diff", a, b);
  const auto x = a.data();
  const auto y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  Tensor result = Tensor::scalar(s);
  Tape* tape = recording_tape({&a, &b});
  if (!tape) return result;
  auto a_data = a.storage();
  auto b_data = b.storage();
  return tape->record(OpKind::kSquaredDiff, {&a, &b}, result,
                      [a_data, b_data](std::span<const double> g,
                                       std::span<Buffer* const> gin) {
                        const auto& x = *a_data;
                        const auto& y = *b_data;
                        for (std::size_t i = 0; i < x.size(); ++i) {
                          const double d = 2.0 * g[0] * (x[i] - y[i]);
                          if (gin[0]) (*gin[0])[i] += d;
                          if (gin[1]) (*gin[1])[i] -= d;
                        }
                      });
}

}  // namespace meshode
