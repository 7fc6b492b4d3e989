#include "fgd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace fgd {

template <typename T>
Tensor<T> finite_diff_grad(const ScalarFn<T>& f, const Tensor<T>& x, T h) {
  if (!(h > T{0})) throw ContractError("finite_diff_grad: step must be positive");
  Tensor<T> probe = x;
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + h;
    const T fp = f(probe);
    probe[i] = orig - h;
    const T fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite objective at coordinate " + std::to_string(i));
    }
    g[i] = (fp - fm) / (T{2} * h);
  }
  return g;
}

template <typename T>
GradCheckReport compare_gradients(const Tensor<T>& analytic, const Tensor<T>& numeric, double tol) {
  if (analytic.size() != numeric.size()) throw ContractError("compare_gradients: size mismatch");
  GradCheckReport r;
  r.coordinate_pass.resize(analytic.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = numeric[i];
    const double rel = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
    r.coordinate_pass[i] = rel <= tol;
    if (rel > r.max_rel_error || !std::isfinite(rel)) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
  }
  r.pass = r.max_rel_error <= tol;
  return r;
}

template <typename T>
GradCheckReport grad_check(const DiffFn<T>& f, const Tensor<T>& x, double tol, T h) {
  Tensor<T> analytic;
  {
    Tape<T> tape;
    auto in = tape.input(x);
    auto out = f(in);
    auto grads = tape.backward(out);
    analytic = grads.contains(in) ? grads.of(in) : Tensor<T>(x.shape());
  }
  ScalarFn<T> scalar = [&f](const Tensor<T>& v) {
    Tape<T> tape;
    return f(tape.constant(v)).value().item();
  };
  return compare_gradients(analytic, finite_diff_grad(scalar, x, h), tol);
}

template <typename T>
ParamCheckReport<T> grad_check_params(const std::function<Var<T>(Tape<T>&)>& loss,
                                      const std::vector<Parameter<T>*>& params, double tol, T h) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<T> tape;
    tape.backward(loss(tape));
  }
  ParamCheckReport<T> report;
  for (auto* p : params) {
    Tensor<T> analytic = p->grad;
    ScalarFn<T> f = [&](const Tensor<T>& v) {
      Tensor<T> saved = p->value;
      p->value = v;
      Tape<T> tape;
      const T out = loss(tape).value().item();
      p->value = std::move(saved);
      return out;
    };
    auto r = compare_gradients(analytic, finite_diff_grad(f, p->value, h), tol);
    if (report.worst_param.empty() || r.max_rel_error > report.max_rel_error) {
      report.max_rel_error = r.max_rel_error;
      report.worst_param = p->name + "[" + std::to_string(r.worst_index) + "]";
    }
    report.pass = report.pass && r.pass;
  }
  return report;
}

template Tensor<float> finite_diff_grad(const ScalarFn<float>&, const Tensor<float>&, float);
template Tensor<double> finite_diff_grad(const ScalarFn<double>&, const Tensor<double>&, double);
template GradCheckReport compare_gradients(const Tensor<float>&, const Tensor<float>&, double);
template GradCheckReport compare_gradients(const Tensor<double>&, const Tensor<double>&, double);
template GradCheckReport grad_check(const DiffFn<float>&, const Tensor<float>&, double, float);
template GradCheckReport grad_check(const DiffFn<double>&, const Tensor<double>&, double, double);
template ParamCheckReport<float> grad_check_params(const std::function<Var<float>(Tape<float>&)>&,
                                                   const std::vector<Parameter<float>*>&, double, float);
template ParamCheckReport<double> grad_check_params(const std::function<Var<double>(Tape<double>&)>&,
                                                    const std::vector<Parameter<double>*>&, double, double);

}  // namespace fgd
