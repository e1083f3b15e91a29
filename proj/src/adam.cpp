#include "strucdec/adam.hpp"

#include <cmath>

namespace strucdec {

template <typename T>
AdamState<T> make_adam_state(const std::vector<Parameter<T>>& params, AdamHyper hyper) {
  AdamState<T> s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state, const UpdateFilter& filter) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) + " parameters, model has " +
                     std::to_string(params.size()));
  }
  state.t += 1;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (filter && !filter(p.name)) continue;
    if (p.grad.shape() != p.value.shape() || state.m[k].shape() != p.value.shape()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + p.name);
    }
    auto& val = p.value.vec();
    const auto& g = p.grad.vec();
    auto& m = state.m[k].vec();
    auto& v = state.v[k].vec();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double gi = g[i];
      const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      val[i] = static_cast<T>(val[i] - h.lr * (mi / c1) / (std::sqrt(vi / c2) + h.eps));
    }
  }
}

template AdamState<float> make_adam_state(const std::vector<Parameter<float>>&, AdamHyper);
template AdamState<double> make_adam_state(const std::vector<Parameter<double>>&, AdamHyper);
template void adam_step(std::vector<Parameter<float>>&, AdamState<float>&, const UpdateFilter&);
template void adam_step(std::vector<Parameter<double>>&, AdamState<double>&, const UpdateFilter&);

}  // namespace strucdec
