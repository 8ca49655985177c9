#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mfinv::nn {

class RngStream;

/// Column-major batches: one example per column.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Layer widths of a fully-connected network, input first and output last.
/// The activation applies to hidden layers only; the output layer is affine.
struct MlpSpec {
  std::vector<int> widths;
  Activation activation = Activation::relu;

  void validate() const;
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }
  std::size_t parameter_count() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Weights and biases of an MLP stored in one flat array.
///
/// Layer l occupies [weight_offset(l), weight_offset(l) + out*in) for its
/// column-major (out x in) weight matrix, followed by `out` bias entries.
class MlpParams {
 public:
  MlpParams() = default;
  explicit MlpParams(MlpSpec spec);  // all zeros

  /// Uniform in +-sqrt(6/(fan_in+fan_out)) for weights, zero biases.
  static MlpParams glorot(MlpSpec spec, RngStream& rng);

  const MlpSpec& spec() const noexcept { return spec_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const;

  Eigen::Map<Matrix> weight(std::size_t layer);
  Eigen::Map<const Matrix> weight(std::size_t layer) const;
  Eigen::Map<Vector> bias(std::size_t layer);
  Eigen::Map<const Vector> bias(std::size_t layer) const;

  bool all_finite() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;

 private:
  MlpSpec spec_;
  std::vector<double> values_;
  std::vector<std::size_t> offsets_;
};

/// Evaluates the network on one input vector. Throws InvalidInput when the
/// input length does not match the first width.
Vector mlp_forward(const MlpParams& params, const Vector& input);

/// Evaluates the network on a batch (input width x batch).
Matrix mlp_forward_batch(const MlpParams& params, const Matrix& input);

}  // namespace mfinv::nn
