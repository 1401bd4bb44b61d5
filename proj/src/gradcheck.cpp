#include "meshode/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "meshode/errors.hpp"
#include "meshode/ops.hpp"

namespace meshode {

std::vector<double> central_difference(const ScalarFn& f, const Tensor& x,
                                       double h) {
  std::vector<double> base(x.data().begin(), x.data().end());
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(Tensor(x.shape(), std::move(plus))).item();
    const double fm = f(Tensor(x.shape(), std::move(minus))).item();
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

std::vector<double> taped_gradient(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Gradients grads;
  Tensor leaf;
  {
    TapeScope scope(tape);
    leaf = tape.watch(x.detach());
    Tensor root = f(leaf);
    if (root.rank() != 0) {
      throw ContractError("gradcheck: function must return a scalar");
    }
    // An untracked root is a constant function with zero gradient.
    if (tape.tracks(root)) grads = tape.backward(root);
  }
  const Tensor g = grads.of(leaf);
  return std::vector<double>(g.data().begin(), g.data().end());
}

double gradcheck(const ScalarFn& f, const Tensor& x, double h) {
  const std::vector<double> analytic = taped_gradient(f, x);
  const std::vector<double> numeric = central_difference(f, x.detach(), h);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-12});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

namespace {

double norm_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    ref += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

std::pair<double, std::vector<bool>> traced(const ScalarFn& f, const Tensor& x) {
  ReluTrace trace;
  const double v = f(x).item();
  return {v, trace.pattern()};
}

}  // namespace

double gradcheck_norm(const ScalarFn& f, const Tensor& x, double h) {
  return norm_rel_err(taped_gradient(f, x), central_difference(f, x.detach(), h));
}

KinkAwareDifference kink_aware_difference(const ScalarFn& f, const Tensor& x, double h,
                                          int max_shrink) {
  const Tensor x0 = x.detach();
  const std::vector<bool> base = traced(f, x0).second;
  const std::vector<double> start(x0.data().begin(), x0.data().end());
  KinkAwareDifference out;
  out.grad.resize(start.size());
  auto eval = [&](std::size_t i, double offset, bool& clean) {
    std::vector<double> p = start;
    p[i] += offset;
    const auto [v, pattern] = traced(f, Tensor(x0.shape(), std::move(p)));
    clean = clean && pattern == base;
    return v;
  };
  for (std::size_t i = 0; i < start.size(); ++i) {
    double step = h;
    for (int attempt = 0;; ++attempt) {
      bool clean = true;
      const double fp1 = eval(i, step, clean), fm1 = eval(i, -step, clean);
      const double fp2 = eval(i, 2.0 * step, clean), fm2 = eval(i, -2.0 * step, clean);
      out.grad[i] = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * step);
      if (clean || attempt == max_shrink) {
        if (attempt > 0) ++out.shrunk;
        if (!clean) ++out.unresolved;
        break;
      }
      step /= 4.0;
    }
  }
  return out;
}

KinkAwareCheck gradcheck_kink_aware(const ScalarFn& f, const Tensor& x, double h) {
  const KinkAwareDifference fd = kink_aware_difference(f, x, h);
  return {norm_rel_err(taped_gradient(f, x), fd.grad), fd.shrunk, fd.unresolved};
}

}  // namespace meshode
