#pragma once

#include <functional>

#include "fgd/autograd.hpp"

namespace fgd {

/// Scalar objective evaluated without a tape.
template <typename T>
using ScalarFn = std::function<T(const Tensor<T>&)>;

/// Differentiable objective: builds a scalar on the tape of its argument.
template <typename T>
using DiffFn = std::function<Var<T>(const Var<T>&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
/// Throws NumericError naming the coordinate if f is non-finite there.
template <typename T>
Tensor<T> finite_diff_grad(const ScalarFn<T>& f, const Tensor<T>& x, T h);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<bool> coordinate_pass;
  bool pass = true;
};

/// Relative error |a-b| / max(|a|, |b|, 1e-8) per coordinate; pass iff the
/// maximum is <= tol.
template <typename T>
GradCheckReport compare_gradients(const Tensor<T>& analytic, const Tensor<T>& numeric, double tol);

/// Backward through `f` at x against central differences with step h.
template <typename T>
GradCheckReport grad_check(const DiffFn<T>& f, const Tensor<T>& x, double tol, T h = T(1e-6));

/// Same check for parameters: `loss` records a scalar on the given tape using
/// tape.param() for each entry of `params`. Reports the worst parameter.
template <typename T>
struct ParamCheckReport {
  bool pass = true;
  double max_rel_error = 0.0;
  std::string worst_param;
};

template <typename T>
ParamCheckReport<T> grad_check_params(const std::function<Var<T>(Tape<T>&)>& loss,
                                      const std::vector<Parameter<T>*>& params, double tol, T h = T(1e-6));

}  // namespace fgd
