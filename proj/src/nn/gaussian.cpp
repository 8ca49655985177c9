#include "mfinv/nn/gaussian.hpp"

#include <cmath>
#include <numbers>

#include "mfinv/errors.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::nn {

void DiagGaussian::validate() const {
  if (mean.size() != log_var.size()) throw InvalidInput("DiagGaussian mean/log_var length mismatch");
  if (!mean.allFinite() || !log_var.allFinite()) throw InvalidInput("DiagGaussian has non-finite moments");
}

DiagGaussian gaussian_head(const MlpParams& params, const Vector& input) {
  const int out = params.spec().output_width();
  if (out % 2 != 0) throw ConfigError("Gaussian head needs an even output width, got " + std::to_string(out));
  const Vector raw = mlp_forward(params, input);
  const Eigen::Index d = out / 2;
  return {raw.head(d), raw.tail(d).cwiseMax(kLogVarMin).cwiseMin(kLogVarMax)};
}

Vector reparam_with_noise(const DiagGaussian& g, const Vector& eps) {
  if (eps.size() != g.dim()) throw InvalidInput("reparam noise length mismatch");
  return g.mean.array() + (0.5 * g.log_var.array()).exp() * eps.array();
}

Vector reparam_sample(const DiagGaussian& g, RngStream& rng) {
  Vector eps(g.dim());
  rng.fill_normal({eps.data(), static_cast<std::size_t>(eps.size())});
  return reparam_with_noise(g, eps);
}

double kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.dim() != p.dim()) throw InvalidInput("kl_diag_gaussians: dimension mismatch");
  const auto diff = (q.mean - p.mean).array();
  // exp(q_lv - p_lv) rather than exp(q_lv) * exp(-p_lv): identical inputs give exactly 0.
  const auto terms = p.log_var.array() - q.log_var.array() + (q.log_var - p.log_var).array().exp() +
                     diff.square() * (-p.log_var.array()).exp() - 1.0;
  return 0.5 * terms.sum();
}

double gaussian_log_likelihood(const DiagGaussian& g, const Vector& x) {
  if (x.size() != g.dim()) throw InvalidInput("gaussian_log_likelihood: dimension mismatch");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const auto r = (x - g.mean).array();
  return -0.5 * (g.log_var.array() + log2pi + r.square() * (-g.log_var.array()).exp()).sum();
}

}  // namespace mfinv::nn
