#include "elastic/errors.hpp"
#include "elastic/gradnet.hpp"

#include <cmath>

namespace elastic::gradnet {

double Schedule::rate_at(std::uint64_t step) const {
  if (kind == Kind::Constant) return base_rate;
  return base_rate / (1.0 + static_cast<double>(step) / k_decay);
}

void opt_step(OptimState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ContractViolation("opt_step: params, grads and optimizer state differ in length");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw TrainingDiverged("opt_step: non-finite gradient at index " + std::to_string(i));

  const double rate = state.schedule.rate_at(state.step);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= rate * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace elastic::gradnet
