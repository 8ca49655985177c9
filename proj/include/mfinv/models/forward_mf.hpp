#pragma once

#include <vector>

#include "mfinv/imaging/degradations.hpp"
#include "mfinv/imaging/image.hpp"
#include "mfinv/models/cvae.hpp"

namespace mfinv::models {

using imaging::Image;
using imaging::Measurement;
using imaging::MeasurementShape;

/// Latent size and hidden layers for one three-network model.
struct NetConfig {
  int latent_dim = 50;
  std::vector<int> hidden{300};
  nn::Activation activation = nn::Activation::relu;

  void validate() const;
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Ground truths with their true-process measurements.
struct PairedDataset {
  std::vector<Image> targets;
  std::vector<Measurement> measurements;

  std::size_t size() const noexcept { return targets.size(); }
  /// Equal lengths and consistent shapes (an empty set is allowed).
  void validate() const;
};

/// Multi-fidelity forward model p(y | x, ytilde) with latent w.
///
/// Condition = x || ytilde, recognition input = x || y || ytilde, decoder
/// input = x || ytilde || w.
struct ForwardModelParams {
  CvaeParams net;
  int height = 0;
  int width = 0;
  MeasurementShape measurement;

  static ForwardModelParams init(int height, int width, MeasurementShape measurement, const NetConfig& cfg,
                                 nn::RngStream& rng);
  int latent_dim() const { return net.spec.latent_dim; }
  friend bool operator==(const ForwardModelParams&, const ForwardModelParams&) = default;
};

/// Concatenates x || ytilde into one condition column.
Vector forward_condition(const ForwardModelParams& p, const Image& x, const Measurement& ytilde);

/// Single-sample ELBO log p(y | x, ytilde, w) - KL(q(w|x,y,ytilde) || p(w|x,ytilde)),
/// w drawn from q with noise from `rng`.
double mf_elbo(const ForwardModelParams& p, const Image& x, const Measurement& y, const Measurement& ytilde,
               nn::RngStream& rng);
/// Same with explicit latent noise (length latent_dim).
ElboColumns mf_elbo_terms(const ForwardModelParams& p, const Image& x, const Measurement& y, const Measurement& ytilde,
                          const Vector& eps);

struct ForwardTrainResult {
  ForwardModelParams params;
  Trace trace;
};

/// Trains from scratch (initialization seeded from config.seed). Each step
/// picks batch_size pairs and draws config.repeats fresh lowfid samples for
/// each. Throws ConfigError when K < batch_size.
ForwardTrainResult train_forward(const PairedDataset& data, const imaging::DegradationSpec& lowfid,
                                 const NetConfig& net, const TrainConfig& config);

/// Continues training existing parameters.
Trace train_forward(ForwardModelParams& params, const PairedDataset& data, const imaging::DegradationSpec& lowfid,
                    const TrainConfig& config);

/// ytilde ~ lowfid(x), w ~ p(w | x, ytilde), y ~ p(y | x, ytilde, w).
Measurement sample_measurement(const ForwardModelParams& p, const imaging::DegradationSpec& lowfid, const Image& x,
                               nn::RngStream& rng);
/// Last two steps only, for a fixed ytilde.
Measurement sample_measurement_given(const ForwardModelParams& p, const Image& x, const Measurement& ytilde,
                                     nn::RngStream& rng);

void save_forward(const std::filesystem::path& stem, const ForwardModelParams& p, nlohmann::json meta = {},
                  nn::DType dtype = nn::DType::f64);
ForwardModelParams load_forward(const std::filesystem::path& stem, nlohmann::json* meta = nullptr);

/// Wraps an image as a column vector view-copy.
Vector to_vector(const Image& x);
Vector to_vector(const Measurement& y);

}  // namespace mfinv::models
