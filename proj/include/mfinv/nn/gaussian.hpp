#pragma once

#include "mfinv/nn/mlp.hpp"

namespace mfinv::nn {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Diagonal Gaussian parameterized by mean and log-variance.
struct DiagGaussian {
  Vector mean;
  Vector log_var;

  Eigen::Index dim() const { return mean.size(); }
  void validate() const;
};

/// Splits the network output into mean (first half) and clipped log-variance
/// (second half). Throws ConfigError when the output width is odd.
DiagGaussian gaussian_head(const MlpParams& params, const Vector& input);

/// mean + exp(log_var / 2) * eps with eps ~ N(0, I) drawn from `rng`.
Vector reparam_sample(const DiagGaussian& g, RngStream& rng);

/// Same transform with caller-supplied noise.
Vector reparam_with_noise(const DiagGaussian& g, const Vector& eps);

/// KL(q || p), closed form.
double kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p);

/// log N(x; mean, diag(exp(log_var))) including normalization.
double gaussian_log_likelihood(const DiagGaussian& g, const Vector& x);

}  // namespace mfinv::nn
