#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ascent/ops.hpp"
#include "ascent/tensor.hpp"

namespace testutil {

using ascent::Tensor;

inline double rel_err(double a, double b, double floor = 1e-6) {
  const double scale = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) / scale;
}

// Central finite-difference check of d(loss)/d(inputs[i]) for a scalar-valued
// graph builder. Returns the worst relative error over all input elements.
inline double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& build,
                         std::vector<Tensor> inputs, double h = 1e-6) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = build(inputs);
  ascent::backward(loss);

  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic = t.grad();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double up = [&] {
        ascent::NoGradGuard guard;
        return build(inputs).value();
      }();
      t.data()[i] = orig - h;
      const double down = [&] {
        ascent::NoGradGuard guard;
        return build(inputs).value();
      }();
      t.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[i], numeric));
    }
  }
  return worst;
}

inline Tensor random_tensor(ascent::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(ascent::numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(data));
}

}  // namespace testutil
