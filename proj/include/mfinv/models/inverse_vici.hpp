#pragma once

#include <vector>

#include "mfinv/models/forward_mf.hpp"

namespace mfinv::models {

/// Inverse model r(x | y) with latent z.
///
/// Condition = y, recognition input = x || y, decoder input = z || y.
struct InverseModelParams {
  CvaeParams net;
  int height = 0;
  int width = 0;
  MeasurementShape measurement;

  static InverseModelParams init(int height, int width, MeasurementShape measurement, const NetConfig& cfg,
                                 nn::RngStream& rng);
  int latent_dim() const { return net.spec.latent_dim; }
  friend bool operator==(const InverseModelParams&, const InverseModelParams&) = default;
};

struct PosteriorSamples {
  std::vector<Image> samples;
  Image mean;
  Image std;  // population standard deviation of `samples`
};

/// Single-sample ELBO log r(x | z, y) - KL(q(z|x,y) || r(z|y)).
double vici_elbo(const InverseModelParams& p, const Image& x, const Measurement& y, nn::RngStream& rng);
ElboColumns vici_elbo_terms(const InverseModelParams& p, const Image& x, const Measurement& y, const Vector& eps);

struct InverseTrainResult {
  InverseModelParams params;
  Trace trace;
};

/// Shared training entry point for every inverse-model strategy; only the
/// source of (x, y) pairs differs. `pairs` writes x into `target` and y into
/// `cond`.
Trace train_inverse_on(InverseModelParams& params, const TrainConfig& config, const ExampleFn& pairs);

/// Fresh parameters seeded from config.seed, identical across strategies.
InverseModelParams init_inverse(int height, int width, MeasurementShape measurement, const NetConfig& net,
                                const TrainConfig& config);

/// Trains on unpaired targets with y ~ forward model (one fresh draw per visit).
InverseTrainResult train_inverse(const std::vector<Image>& targets, const ForwardModelParams& fm,
                                 const imaging::DegradationSpec& lowfid, const NetConfig& net,
                                 const TrainConfig& config);

/// n two-step draws z ~ r(z|y), x ~ r(x|z,y) and their per-pixel statistics.
PosteriorSamples posterior_sample(const InverseModelParams& p, const Measurement& y, int n, nn::RngStream& rng);

/// Decoder mean at the latent prior mean.
Image pseudo_max(const InverseModelParams& p, const Measurement& y);
std::vector<Image> pseudo_max(const InverseModelParams& p, const std::vector<Measurement>& ys);

void save_inverse(const std::filesystem::path& stem, const InverseModelParams& p, nlohmann::json meta = {},
                  nn::DType dtype = nn::DType::f64);
InverseModelParams load_inverse(const std::filesystem::path& stem, nlohmann::json* meta = nullptr);

}  // namespace mfinv::models
