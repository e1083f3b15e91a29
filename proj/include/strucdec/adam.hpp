#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "strucdec/autodiff.hpp"

namespace strucdec {

struct AdamHyper {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments for one parameter list. m and v mirror the parameter shapes.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t t = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

/// Predicate selecting which parameters an optimizer step may touch.
using UpdateFilter = std::function<bool(const std::string& name)>;

template <typename T>
AdamState<T> make_adam_state(const std::vector<Parameter<T>>& params, AdamHyper hyper = {});

/// One bias-corrected Adam step using each parameter's accumulated grad.
/// Parameters rejected by `filter` are skipped entirely, moments included;
/// the step counter advances regardless.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state, const UpdateFilter& filter = {});

extern template AdamState<float> make_adam_state(const std::vector<Parameter<float>>&, AdamHyper);
extern template AdamState<double> make_adam_state(const std::vector<Parameter<double>>&, AdamHyper);
extern template void adam_step(std::vector<Parameter<float>>&, AdamState<float>&, const UpdateFilter&);
extern template void adam_step(std::vector<Parameter<double>>&, AdamState<double>&, const UpdateFilter&);

}  // namespace strucdec
