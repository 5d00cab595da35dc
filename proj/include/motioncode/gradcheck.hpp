#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "motioncode/tensor.hpp"

namespace motioncode {

/// Scalar-valued function of whatever tensors it closes over. It must build
/// its result on the supplied tape.
using ScalarFunction = std::function<Tensor<double>(Tape<double>&)>;

/// Compares reverse-mode gradients of `f` against central differences for
/// every coordinate of every tensor in `params`. Returns the largest
/// |analytic - numeric| / max(1, |numeric|).
inline double check_gradients_over(const ScalarFunction& f, std::vector<Tensor<double>> params,
                                   double h = 1e-5) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tape<double> tape;
  auto loss = f(tape);
  if (!std::isfinite(loss.item())) throw NumericalError("check_gradients: non-finite function value");
  tape.backward(loss);

  auto evaluate = [&f]() {
    Tape<double> probe(false);
    const double v = f(probe).item();
    if (!std::isfinite(v)) throw NumericalError("check_gradients: non-finite value at perturbed point");
    return v;
  };

  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = evaluate();
      values[i] = saved - h;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

/// Single-point convenience form: `f` receives the point as its argument.
inline double check_gradients(const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>& f,
                              Tensor<double> point, double h = 1e-5) {
  return check_gradients_over([&](Tape<double>& tape) { return f(tape, point); },
                              std::vector<Tensor<double>>{point}, h);
}

}  // namespace motioncode
