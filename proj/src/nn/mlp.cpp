#include "mfinv/nn/mlp.hpp"

#include <cmath>

#include "mfinv/errors.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::nn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("MLP needs at least an input and an output width");
  for (int w : widths) {
    if (w < 1) throw ConfigError("MLP widths must be positive");
  }
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    n += static_cast<std::size_t>(widths[l + 1]) * (widths[l] + 1);
  }
  return n;
}

MlpParams::MlpParams(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  values_.assign(spec_.parameter_count(), 0.0);
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(spec_.widths[l + 1]) * (spec_.widths[l] + 1);
  }
}

MlpParams MlpParams::glorot(MlpSpec spec, RngStream& rng) {
  MlpParams p(std::move(spec));
  for (std::size_t l = 0; l < p.spec_.layer_count(); ++l) {
    const double fan_in = p.spec_.widths[l];
    const double fan_out = p.spec_.widths[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    auto w = p.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
    }
  }
  return p;
}

std::size_t MlpParams::bias_offset(std::size_t layer) const {
  return offsets_[layer] + static_cast<std::size_t>(spec_.widths[layer + 1]) * spec_.widths[layer];
}

Eigen::Map<Matrix> MlpParams::weight(std::size_t layer) {
  return {values_.data() + offsets_[layer], spec_.widths[layer + 1], spec_.widths[layer]};
}

Eigen::Map<const Matrix> MlpParams::weight(std::size_t layer) const {
  return {values_.data() + offsets_[layer], spec_.widths[layer + 1], spec_.widths[layer]};
}

Eigen::Map<Vector> MlpParams::bias(std::size_t layer) {
  return {values_.data() + bias_offset(layer), spec_.widths[layer + 1]};
}

Eigen::Map<const Vector> MlpParams::bias(std::size_t layer) const {
  return {values_.data() + bias_offset(layer), spec_.widths[layer + 1]};
}

bool MlpParams::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix mlp_forward_batch(const MlpParams& params, const Matrix& input) {
  const auto& spec = params.spec();
  if (input.rows() != spec.input_width()) {
    throw InvalidInput("mlp input has " + std::to_string(input.rows()) + " rows, expected " +
                       std::to_string(spec.input_width()));
  }
  Matrix h = input;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    Matrix z = params.weight(l) * h;
    z.colwise() += params.bias(l);
    if (l + 1 < spec.layer_count()) {
      if (spec.activation == Activation::relu) {
        z = z.cwiseMax(0.0);
      } else {
        z = z.array().tanh();
      }
    }
    h = std::move(z);
  }
  return h;
}

Vector mlp_forward(const MlpParams& params, const Vector& input) {
  return mlp_forward_batch(params, input);
}

}  // namespace mfinv::nn
