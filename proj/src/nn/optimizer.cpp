#include "mfinv/nn/optimizer.hpp"

#include <cmath>
#include <string>

#include "mfinv/errors.hpp"

namespace mfinv::nn {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

AdamState::AdamState(AdamConfig cfg, std::size_t parameter_count)
    : config(cfg), first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0) {
  config.validate();
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw InvalidInput("adam_step: parameter/gradient/state sizes disagree");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("non-finite gradient at parameter index " + std::to_string(i) + " (optimizer step " +
                           std::to_string(state.step + 1) + ")");
    }
  }
  const auto& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i] * grads[i];
    params[i] -= c.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + c.epsilon);
  }
}

}  // namespace mfinv::nn
