#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mfinv::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::size_t parameter_count);
};

/// One Adam descent step on `params` (minimizes). Throws NumericalError naming
/// the first non-finite gradient entry; params and state are untouched then.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace mfinv::nn
