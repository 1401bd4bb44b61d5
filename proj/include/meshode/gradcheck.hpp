#pragma once

#include <functional>

#include "meshode/tensor.hpp"

namespace meshode {

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Largest componentwise relative disagreement between the taped gradient of
// f at x and central differences with step h:
//   |analytic - cd| / max(|analytic|, |cd|, 1e-12).
double gradcheck(const ScalarFn& f, const Tensor& x, double h = 1e-5);

// ||analytic - cd||_2 / max(||cd||_2, 1e-12).
double gradcheck_norm(const ScalarFn& f, const Tensor& x, double h = 1e-5);

// Taped gradient of a scalar function.
std::vector<double> taped_gradient(const ScalarFn& f, const Tensor& x);

// Central-difference gradient of a scalar function (no tape involved).
std::vector<double> central_difference(const ScalarFn& f, const Tensor& x,
                                       double h = 1e-5);

struct KinkAwareDifference {
  std::vector<double> grad;
  std::size_t shrunk = 0;      // coordinates that needed a smaller step
  std::size_t unresolved = 0;  // coordinates still straddling a kink at the smallest step
};

// Five-point central differences whose step is divided by 4 (at most
// max_shrink times) for every coordinate where a stencil point sees a
// different relu activation pattern than f(x).
KinkAwareDifference kink_aware_difference(const ScalarFn& f, const Tensor& x, double h = 1e-5,
                                          int max_shrink = 5);

// gradcheck_norm against kink_aware_difference.
struct KinkAwareCheck {
  double rel_err = 0.0;
  std::size_t shrunk = 0;
  std::size_t unresolved = 0;
};
KinkAwareCheck gradcheck_kink_aware(const ScalarFn& f, const Tensor& x, double h = 1e-5);

}  // namespace meshode
