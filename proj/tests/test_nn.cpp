#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "mfinv/errors.hpp"
#include "mfinv/nn/gaussian.hpp"
#include "mfinv/nn/mlp.hpp"
#include "mfinv/nn/optimizer.hpp"
#include "mfinv/nn/rng.hpp"
#include "support/oracles.hpp"

using namespace mfinv;
using namespace mfinv::nn;

namespace {

Vector random_vector(RngStream& rng, int n, double scale = 1.0) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

}  // namespace

TEST(Rng, SameKeySameDraws) {
  RngStream a(7, 3), b(7, 3), c(7, 4);
  for (int i = 0; i < 10; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    EXPECT_NE(x, c.normal());
  }
}

TEST(Rng, ForkDependsOnlyOnKeyAndTag) {
  RngStream a(1, 2);
  RngStream b(1, 2);
  a.normal();  // advancing the parent must not change its children
  EXPECT_EQ(a.fork(5).normal(), b.fork(5).normal());
  EXPECT_NE(a.fork(5).normal(), a.fork(6).normal());
}

TEST(Rng, BelowStaysInRange) {
  RngStream r(0, 0);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
  EXPECT_NE(derive_stream({1, 2}), derive_stream({2, 1}));
}

TEST(Mlp, MatchesDenseLoopOracle) {
  RngStream rng(11, 0);
  for (auto act : {Activation::relu, Activation::tanh}) {
    MlpSpec spec{{5, 7, 6, 4}, act};
    auto p = MlpParams::glorot(spec, rng);
    for (auto& v : p.values()) v += 0.1 * rng.normal();  // non-zero biases too
    for (int trial = 0; trial < 5; ++trial) {
      const Vector x = random_vector(rng, 5);
      const Vector expected = oracle::dense_mlp(p, x);
      const Vector got = mlp_forward(p, x);
      ASSERT_EQ(got.size(), 4);
      for (int i = 0; i < 4; ++i) EXPECT_NEAR(got(i), expected(i), 1e-12);
    }
  }
}

TEST(Mlp, BatchEqualsPerColumn) {
  RngStream rng(12, 0);
  auto p = MlpParams::glorot({{3, 8, 2}, Activation::relu}, rng);
  Matrix x(3, 6);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const Matrix y = mlp_forward_batch(p, x);
  for (int c = 0; c < 6; ++c) {
    const Vector yc = mlp_forward(p, x.col(c));
    for (int r = 0; r < 2; ++r) EXPECT_NEAR(y(r, c), yc(r), 1e-13);
  }
}

TEST(Mlp, GlorotBoundsAndZeroBias) {
  RngStream rng(13, 0);
  MlpSpec spec{{20, 30, 10}, Activation::relu};
  auto p = MlpParams::glorot(spec, rng);
  EXPECT_EQ(p.size(), spec.parameter_count());
  EXPECT_EQ(p.size(), 20u * 30 + 30 + 30 * 10 + 10);
  const double b0 = std::sqrt(6.0 / 50.0);
  EXPECT_LE(p.weight(0).cwiseAbs().maxCoeff(), b0);
  EXPECT_EQ(p.bias(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(p.bias(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, RejectsWrongInputWidth) {
  MlpParams p({{4, 3, 2}, Activation::relu});
  EXPECT_THROW(mlp_forward(p, Vector::Zero(5)), InvalidInput);
  EXPECT_THROW(MlpParams({{4}, Activation::relu}), ConfigError);
  EXPECT_THROW(activation_from_string("gelu"), ConfigError);
}

TEST(Gaussian, HeadSplitsAndClips) {
  MlpParams p({{1, 4}, Activation::relu});
  // Affine single layer: output = W x + b with W = 0, b = (1, 2, 50, -50).
  p.bias(0) << 1.0, 2.0, 50.0, -50.0;
  const auto g = gaussian_head(p, Vector::Ones(1));
  EXPECT_EQ(g.mean(0), 1.0);
  EXPECT_EQ(g.mean(1), 2.0);
  EXPECT_EQ(g.log_var(0), kLogVarMax);
  EXPECT_EQ(g.log_var(1), kLogVarMin);
  EXPECT_THROW(gaussian_head(MlpParams({{1, 3}, Activation::relu}), Vector::Ones(1)), ConfigError);
}

TEST(Gaussian, KlZeroOnIdenticalInputs) {
  RngStream rng(21, 0);
  for (int d = 1; d <= 8; ++d) {
    DiagGaussian q{random_vector(rng, d, 3.0), random_vector(rng, d, 4.0)};
    EXPECT_EQ(kl_diag_gaussians(q, q), 0.0);
  }
}

TEST(Gaussian, KlMatchesMonteCarlo) {
  RngStream rng(22, 0);
  RngStream mc(23, 0);
  constexpr int kSamples = 100000;
  for (int inst = 0; inst < 10; ++inst) {
    const int d = 1 + static_cast<int>(rng.below(8));
    DiagGaussian q{random_vector(rng, d), random_vector(rng, d, 0.5)};
    DiagGaussian p{random_vector(rng, d), random_vector(rng, d, 0.5)};
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < kSamples; ++s) {
      const Vector x = reparam_sample(q, mc);
      const double v = gaussian_log_likelihood(q, x) - gaussian_log_likelihood(p, x);
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / kSamples;
    const double se = std::sqrt((sum2 / kSamples - mean * mean) / kSamples);
    EXPECT_NEAR(kl_diag_gaussians(q, p), mean, 3.0 * se + 1e-12) << "instance " << inst;
  }
}

TEST(Gaussian, KlRejectsDimensionMismatch) {
  DiagGaussian a{Vector::Zero(2), Vector::Zero(2)};
  DiagGaussian b{Vector::Zero(3), Vector::Zero(3)};
  EXPECT_THROW(kl_diag_gaussians(a, b), InvalidInput);
}

TEST(Gaussian, LogLikelihoodMatchesScalarFormula) {
  RngStream rng(24, 0);
  DiagGaussian g{random_vector(rng, 5), random_vector(rng, 5)};
  const Vector x = random_vector(rng, 5);
  double expected = 0.0;
  for (int i = 0; i < 5; ++i) expected += oracle::log_normal(x(i), g.mean(i), g.log_var(i));
  EXPECT_NEAR(gaussian_log_likelihood(g, x), expected, 1e-12);
  // Unit variance, zero residual: -(d/2) ln(2 pi).
  DiagGaussian unit{x, Vector::Zero(5)};
  EXPECT_NEAR(gaussian_log_likelihood(unit, x), -2.5 * std::log(2.0 * std::numbers::pi), 1e-12);
}

TEST(Gaussian, ReparamMoments) {
  DiagGaussian g{Vector::Constant(1, 2.0), Vector::Constant(1, std::log(0.25))};
  RngStream rng(25, 0);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = reparam_sample(g, rng)(0);
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 2.0, 3.0 * 0.5 / std::sqrt(n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 0.25, 0.02);
  EXPECT_EQ(reparam_with_noise(g, Vector::Constant(1, 2.0))(0), 3.0);
}

TEST(Adam, FirstStepMatchesHandComputation) {
  AdamState st(AdamConfig{}, 3);
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -0.1, 0.0};
  adam_step(st, p, g);
  // With bias correction the first step is lr * g / (|g| + eps).
  EXPECT_NEAR(p[0], 1.0 - 1e-3 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 1e-3 * 0.1 / (0.1 + 1e-8), 1e-15);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, SecondStepMatchesRecurrence) {
  AdamConfig c;
  AdamState st(c, 1);
  std::vector<double> p{0.0};
  adam_step(st, p, std::vector<double>{1.0});
  adam_step(st, p, std::vector<double>{-2.0});
  const double m = 0.9 * 0.1 + 0.1 * -2.0;
  const double v = 0.999 * 0.001 + 0.001 * 4.0;
  const double step2 = c.learning_rate * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + c.epsilon);
  EXPECT_NEAR(p[0], -1e-3 / (1.0 + 1e-8) - step2, 1e-15);
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
  AdamState st(AdamConfig{}, 2);
  std::vector<double> p{1.0, 2.0};
  try {
    adam_step(st, p, std::vector<double>{0.1, std::nan("")});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(st.step, 0);
  EXPECT_THROW(AdamState(AdamConfig{-1.0}, 1), ConfigError);
}
