#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfinv/nn/checkpoint.hpp"
#include "mfinv/nn/mlp.hpp"
#include "mfinv/nn/optimizer.hpp"
#include "mfinv/nn/tape.hpp"

namespace mfinv::nn {
class RngStream;
}

namespace mfinv::models {

using nn::Matrix;
using nn::Vector;

/// Shape of a conditional latent variable model t | c with latent u.
///
/// Three Gaussian-head networks:
///   prior        c            -> N(u)
///   recognition  c[:at] t c[at:] -> N(u)
///   decoder      c u  (or u c when latent_first) -> N(t)
struct CvaeSpec {
  int target_dim = 0;
  int cond_dim = 0;
  int latent_dim = 1;
  std::vector<int> hidden{300};
  nn::Activation activation = nn::Activation::relu;
  int recog_target_at = 0;  // row in the condition where the target is spliced in
  bool latent_first = false;

  void validate() const;
  nn::MlpSpec prior_spec() const;
  nn::MlpSpec recognition_spec() const;
  nn::MlpSpec decoder_spec() const;

  friend bool operator==(const CvaeSpec&, const CvaeSpec&) = default;
};

struct CvaeParams {
  CvaeSpec spec;
  nn::MlpParams prior;
  nn::MlpParams recognition;
  nn::MlpParams decoder;

  static CvaeParams init(const CvaeSpec& spec, nn::RngStream& rng);
  bool all_finite() const;
  friend bool operator==(const CvaeParams&, const CvaeParams&) = default;
};

struct CvaeGrads {
  nn::GradBuffer prior;
  nn::GradBuffer recognition;
  nn::GradBuffer decoder;

  explicit CvaeGrads(const CvaeParams& p);
  void zero();
};

/// Per-column ELBO pieces, each 1 x batch.
struct ElboColumns {
  Eigen::RowVectorXd elbo;
  Eigen::RowVectorXd kl;
  Eigen::RowVectorXd recon_loglik;
};

/// Single-sample ELBO log N(t; decoder) - KL(q || prior) per column using the
/// supplied standard-normal noise (latent_dim x batch). When `grads` is given
/// the gradient of -mean(elbo) is accumulated into it.
ElboColumns cvae_elbo(const CvaeParams& p, const Matrix& target, const Matrix& cond, const Matrix& eps,
                      CvaeGrads* grads = nullptr);

/// Prior mean/log-variance for each column of `cond`.
void cvae_prior(const CvaeParams& p, const Matrix& cond, Matrix& mean, Matrix& log_var);

/// Decoder mean/log-variance given condition and latent.
void cvae_decode(const CvaeParams& p, const Matrix& cond, const Matrix& latent, Matrix& mean, Matrix& log_var);

/// Two-stage ancestral draw with explicit noise: u = mu_u + s_u * eps_latent,
/// t = mu_t + s_t * eps_target.
Matrix cvae_sample(const CvaeParams& p, const Matrix& cond, const Matrix& eps_latent, const Matrix& eps_target);

/// Decoder mean at the prior mean.
Matrix cvae_pseudo_max(const CvaeParams& p, const Matrix& cond);

struct TrainConfig {
  std::int64_t iterations = 20000;
  int batch_size = 64;
  int repeats = 1;  // fresh conditioning draws per picked example and step
  nn::AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TraceRow {
  std::int64_t iteration = 0;
  double elbo = 0.0;
  double kl = 0.0;
  double recon_loglik = 0.0;
};
using Trace = std::vector<TraceRow>;

void write_trace_csv(const std::filesystem::path& path, const Trace& trace);
Trace read_trace_csv(const std::filesystem::path& path);

/// Fills one training example. `pick` is private to (iteration, batch slot)
/// and shared by that slot's repeats, so it should choose the example; `draw`
/// is private to (iteration, slot, repeat) and drives any sampling.
using ExampleFn = std::function<void(nn::RngStream& pick, nn::RngStream& draw, Eigen::Ref<Vector> target,
                                     Eigen::Ref<Vector> cond)>;

/// Stream purposes used when deriving per-example randomness.
enum class StreamPurpose : std::uint64_t { pick = 1, draw = 2, latent_noise = 3 };

/// Adam ascent on the mean ELBO over batch_size * repeats columns. Columns are
/// filled in parallel; each draws from its own streams so results do not
/// depend on the thread count. Throws NumericalError naming the iteration on
/// a non-finite loss or gradient.
Trace train_cvae(CvaeParams& params, const TrainConfig& config, const ExampleFn& example);

/// Stores the three networks plus `meta` (which gains the CvaeSpec layout) under `stem`.
void save_cvae(const std::filesystem::path& stem, const CvaeParams& p, nlohmann::json meta,
               nn::DType dtype = nn::DType::f64);
CvaeParams load_cvae(const std::filesystem::path& stem, nlohmann::json* meta = nullptr);

nlohmann::json to_json(const CvaeSpec& s);
CvaeSpec cvae_spec_from_json(const nlohmann::json& j);

}  // namespace mfinv::models
