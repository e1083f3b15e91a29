#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "strucdec/autodiff.hpp"

namespace strucdec::testing {

/// Builds a scalar loss from the tape leaves bound to `inputs`.
using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero entries from
/// turning roundoff into large relative errors.
inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double eval_loss(const ScalarFn& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value()[0];
}

/// Max relative error between backward() and central differences over every
/// entry of every input, with absolute step h.
inline double gradcheck(const ScalarFn& f, std::vector<Tensor<double>> inputs, double h = 1e-4) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  auto loss = f(tape, vars);
  tape.backward(loss);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto analytic = tape.grad_of(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double up = eval_loss(f, inputs);
      inputs[k][i] = orig - h;
      const double down = eval_loss(f, inputs);
      inputs[k][i] = orig;
      worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

/// Distinct values in random order, spaced far wider than the FD step so
/// max-pool argmaxes never flip under perturbation.
inline Tensor<double> spaced_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(t.size());
  rng.shuffle(t.vec().begin(), t.vec().end());
  return t;
}

/// sum(y * w) with a fixed random weight, so every output entry matters
/// with a distinct coefficient.
inline Var<double> weighted_sum(Var<double> y, std::uint64_t seed) {
  Rng rng(seed);
  auto w = random_tensor(y.shape(), rng);
  return sum(mul(y, y.tape->constant(std::move(w))));
}

}  // namespace strucdec::testing
