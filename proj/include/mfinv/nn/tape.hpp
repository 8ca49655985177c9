#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mfinv/nn/mlp.hpp"

namespace mfinv::nn {

/// Gradient accumulator laid out exactly like an MlpParams value array.
using GradBuffer = std::vector<double>;

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Outputs of a Gaussian head recorded on a tape.
struct GaussianVars {
  Var mean;
  Var log_var;
};

/// Reverse-mode recorder for the handful of batched operations the training
/// objectives are built from.
///
/// Values are (features x batch) matrices. Nodes are appended in evaluation
/// order, so backward() walks them in reverse. Parameter gradients are
/// accumulated into caller-owned GradBuffers registered through mlp().
class Tape {
 public:
  /// Constant input; receives no gradient.
  Var constant(Matrix value);
  /// Differentiable leaf; its gradient is readable after backward().
  Var leaf(Matrix value);

  /// Full MLP forward pass. Gradients w.r.t. the weights are added to
  /// `grads` (which must match params.size()) during backward().
  Var mlp(const MlpParams& params, GradBuffer* grads, Var input);

  /// Network output split into mean and clipped log-variance halves.
  GaussianVars gaussian_head(const MlpParams& params, GradBuffer* grads, Var input);

  Var concat_rows(std::span<const Var> parts);
  Var rows(Var x, Eigen::Index begin, Eigen::Index count);
  Var clip(Var x, double lo, double hi);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var x, double factor);

  /// mean + exp(log_var/2) * eps for fixed noise `eps`.
  Var reparam(GaussianVars g, Matrix eps);
  /// Per-column KL(q || p) as a (1 x batch) row.
  Var kl_diag(GaussianVars q, GaussianVars p);
  /// Per-column Gaussian log density of `target` as a (1 x batch) row.
  Var gaussian_loglik(GaussianVars g, Var target);

  Var mean_all(Var x);
  Var sum_all(Var x);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() loss w.r.t. v (zero-sized if none).
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

  /// Reverse pass from a scalar (1 x 1) node. Throws InvalidInput otherwise.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, std::size_t)> back;
  };

  Var push(Matrix value, bool needs_grad, std::function<void(Tape&, std::size_t)> back);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  void accumulate(Var v, const Matrix& g);

  std::vector<Node> nodes_;
};

}  // namespace mfinv::nn
