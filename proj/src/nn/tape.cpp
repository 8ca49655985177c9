#include "mfinv/nn/tape.hpp"

#include <cmath>
#include <numbers>

#include "mfinv/errors.hpp"

namespace mfinv::nn {

Var Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, std::size_t)> back) {
  nodes_.push_back(Node{std::move(value), Matrix(), needs_grad, std::move(back)});
  return Var{nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::mlp(const MlpParams& params, GradBuffer* grads, Var input) {
  const auto& spec = params.spec();
  if (value(input).rows() != spec.input_width()) {
    throw InvalidInput("tape mlp: input has " + std::to_string(value(input).rows()) + " rows, expected " +
                       std::to_string(spec.input_width()));
  }
  if (grads != nullptr && grads->size() != params.size()) {
    throw InvalidInput("tape mlp: gradient buffer does not match parameter layout");
  }
  const bool track = grads != nullptr;
  Var h = input;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    Matrix z = params.weight(l) * value(h);
    z.colwise() += params.bias(l);
    const bool ng = track || needs_grad(h);
    h = push(std::move(z), ng, [&params, grads, l, in = h](Tape& t, std::size_t self) {
      const Matrix& g = t.nodes_[self].grad;
      if (grads != nullptr) {
        const auto out_w = params.spec().widths[l + 1];
        const auto in_w = params.spec().widths[l];
        Eigen::Map<Matrix> dw(grads->data() + params.weight_offset(l), out_w, in_w);
        Eigen::Map<Vector> db(grads->data() + params.bias_offset(l), out_w);
        dw.noalias() += g * t.value(in).transpose();
        // Reduce into an aligned temporary: summing straight into the
        // (arbitrarily aligned) buffer lets Eigen's peeling change the
        // accumulation order from run to run.
        const Vector row_sums = g.rowwise().sum();
        db += row_sums;
      }
      if (t.needs_grad(in)) t.accumulate(in, params.weight(l).transpose() * g);
    });
    if (l + 1 < spec.layer_count()) {
      Matrix a;
      if (spec.activation == Activation::relu) {
        a = value(h).cwiseMax(0.0);
        h = push(std::move(a), ng, [pre = h](Tape& t, std::size_t self) {
          const Matrix& g = t.nodes_[self].grad;
          t.accumulate(pre, (t.value(pre).array() > 0.0).select(g, 0.0));
        });
      } else {
        a = value(h).array().tanh();
        h = push(std::move(a), ng, [pre = h](Tape& t, std::size_t self) {
          const Matrix& g = t.nodes_[self].grad;
          const Matrix& y = t.nodes_[self].value;
          t.accumulate(pre, (g.array() * (1.0 - y.array().square())).matrix());
        });
      }
    }
  }
  return h;
}

GaussianVars Tape::gaussian_head(const MlpParams& params, GradBuffer* grads, Var input) {
  const int out = params.spec().output_width();
  if (out % 2 != 0) throw ConfigError("Gaussian head needs an even output width, got " + std::to_string(out));
  const Var raw = mlp(params, grads, input);
  const Eigen::Index d = out / 2;
  return {rows(raw, 0, d), clip(rows(raw, d, d), -10.0, 10.0)};
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat_rows of nothing");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index total = 0;
  bool ng = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw InvalidInput("concat_rows: batch size mismatch");
    total += value(p).rows();
    ng = ng || needs_grad(p);
  }
  Matrix out(total, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), ng, [ps](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Eigen::Index r = 0;
    for (Var p : ps) {
      const Eigen::Index n = t.value(p).rows();
      if (t.needs_grad(p)) t.accumulate(p, g.middleRows(r, n));
      r += n;
    }
  });
}

Var Tape::rows(Var x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > value(x).rows()) throw InvalidInput("rows: range out of bounds");
  return push(value(x).middleRows(begin, count), needs_grad(x), [x, begin, count](Tape& t, std::size_t self) {
    Matrix full = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
    full.middleRows(begin, count) = t.nodes_[self].grad;
    t.accumulate(x, full);
  });
}

Var Tape::clip(Var x, double lo, double hi) {
  Matrix out = value(x).cwiseMax(lo).cwiseMin(hi);
  return push(std::move(out), needs_grad(x), [x, lo, hi](Tape& t, std::size_t self) {
    const auto& v = t.value(x).array();
    t.accumulate(x, ((v > lo) && (v < hi)).select(t.nodes_[self].grad, 0.0));
  });
}

Var Tape::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) throw InvalidInput("add: shape mismatch");
  return push(value(a) + value(b), needs_grad(a) || needs_grad(b), [a, b](Tape& t, std::size_t self) {
    t.accumulate(a, t.nodes_[self].grad);
    t.accumulate(b, t.nodes_[self].grad);
  });
}

Var Tape::sub(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) throw InvalidInput("sub: shape mismatch");
  return push(value(a) - value(b), needs_grad(a) || needs_grad(b), [a, b](Tape& t, std::size_t self) {
    t.accumulate(a, t.nodes_[self].grad);
    t.accumulate(b, -t.nodes_[self].grad);
  });
}

Var Tape::scale(Var x, double factor) {
  return push(value(x) * factor, needs_grad(x), [x, factor](Tape& t, std::size_t self) {
    t.accumulate(x, t.nodes_[self].grad * factor);
  });
}

Var Tape::reparam(GaussianVars g, Matrix eps) {
  const Matrix& m = value(g.mean);
  const Matrix& lv = value(g.log_var);
  if (eps.rows() != m.rows() || eps.cols() != m.cols() || lv.rows() != m.rows() || lv.cols() != m.cols()) {
    throw InvalidInput("reparam: shape mismatch");
  }
  Matrix sd_eps = ((0.5 * lv.array()).exp() * eps.array()).matrix();
  Matrix out = m + sd_eps;
  return push(std::move(out), needs_grad(g.mean) || needs_grad(g.log_var),
              [g, sd_eps = std::move(sd_eps)](Tape& t, std::size_t self) {
                const Matrix& gr = t.nodes_[self].grad;
                t.accumulate(g.mean, gr);
                t.accumulate(g.log_var, (0.5 * gr.array() * sd_eps.array()).matrix());
              });
}

Var Tape::kl_diag(GaussianVars q, GaussianVars p) {
  const auto& qm = value(q.mean).array();
  const auto& qlv = value(q.log_var).array();
  const auto& pm = value(p.mean).array();
  const auto& plv = value(p.log_var).array();
  if (value(q.mean).rows() != value(p.mean).rows() || value(q.mean).cols() != value(p.mean).cols()) {
    throw InvalidInput("kl_diag: shape mismatch");
  }
  Matrix ratio = (qlv - plv).exp().matrix();
  Matrix diff2_prec = ((qm - pm).square() * (-plv).exp()).matrix();
  Matrix terms = (plv - qlv + ratio.array() + diff2_prec.array() - 1.0).matrix();
  Matrix out = 0.5 * terms.colwise().sum();
  const bool ng = needs_grad(q.mean) || needs_grad(q.log_var) || needs_grad(p.mean) || needs_grad(p.log_var);
  return push(std::move(out), ng, [q, p, ratio = std::move(ratio), diff2_prec = std::move(diff2_prec)](Tape& t,
                                                                                                     std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;  // 1 x B
    const auto gb = g.replicate(ratio.rows(), 1).array();
    const auto& qm = t.value(q.mean).array();
    const auto& pm = t.value(p.mean).array();
    const auto& plv = t.value(p.log_var).array();
    Matrix dqm = (gb * (qm - pm) * (-plv).exp()).matrix();
    if (t.needs_grad(q.mean)) t.accumulate(q.mean, dqm);
    if (t.needs_grad(p.mean)) t.accumulate(p.mean, -dqm);
    if (t.needs_grad(q.log_var)) t.accumulate(q.log_var, (gb * 0.5 * (ratio.array() - 1.0)).matrix());
    if (t.needs_grad(p.log_var)) {
      t.accumulate(p.log_var, (gb * 0.5 * (1.0 - ratio.array() - diff2_prec.array())).matrix());
    }
  });
}

Var Tape::gaussian_loglik(GaussianVars g, Var target) {
  const Matrix& m = value(g.mean);
  const Matrix& lv = value(g.log_var);
  const Matrix& x = value(target);
  if (x.rows() != m.rows() || x.cols() != m.cols()) throw InvalidInput("gaussian_loglik: shape mismatch");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Matrix resid_prec = ((x - m).array() * (-lv.array()).exp()).matrix();  // (x - m) / var
  Matrix out = -0.5 * (lv.array() + log2pi + (x - m).array() * resid_prec.array()).matrix().colwise().sum();
  const bool ng = needs_grad(g.mean) || needs_grad(g.log_var) || needs_grad(target);
  return push(std::move(out), ng, [g, target, resid_prec = std::move(resid_prec)](Tape& t, std::size_t self) {
    const Matrix& gr = t.nodes_[self].grad;
    const auto gb = gr.replicate(resid_prec.rows(), 1).array();
    const auto r = (t.value(target) - t.value(g.mean)).array();
    Matrix dm = (gb * resid_prec.array()).matrix();
    if (t.needs_grad(g.mean)) t.accumulate(g.mean, dm);
    if (t.needs_grad(target)) t.accumulate(target, -dm);
    if (t.needs_grad(g.log_var)) t.accumulate(g.log_var, (gb * -0.5 * (1.0 - r * resid_prec.array())).matrix());
  });
}

Var Tape::mean_all(Var x) {
  const double n = static_cast<double>(value(x).size());
  Matrix out(1, 1);
  out(0, 0) = value(x).sum() / n;
  return push(std::move(out), needs_grad(x), [x, n](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad(0, 0) / n;
    t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(), g));
  });
}

Var Tape::sum_all(Var x) {
  Matrix out(1, 1);
  out(0, 0) = value(x).sum();
  return push(std::move(out), needs_grad(x), [x](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad(0, 0);
    t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(), g));
  });
}

void Tape::backward(Var loss) {
  if (value(loss).rows() != 1 || value(loss).cols() != 1) {
    throw InvalidInput("backward needs a scalar loss, got " + std::to_string(value(loss).rows()) + "x" +
                       std::to_string(value(loss).cols()));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!needs_grad(loss)) return;
  nodes_[loss.id].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.back && n.grad.size() != 0) n.back(*this, i);
  }
}

}  // namespace mfinv::nn
