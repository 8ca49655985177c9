#pragma once

#include <string>
#include <vector>

#include "mfinv/models/inverse_vici.hpp"

namespace mfinv::baselines {

using imaging::Image;
using imaging::Measurement;

enum class BaselineKind { paired_only, simulated_only, paired_plus_simulated, hio };

std::string to_string(BaselineKind k);
BaselineKind baseline_kind_from_string(const std::string& s);

enum class MixingRule {
  proportional,  // pick paired with probability K / (K + L)
  half           // pick paired with probability 1/2
};

struct BaselineConfig {
  models::NetConfig net;
  models::TrainConfig train;
  MixingRule mixing = MixingRule::proportional;
};

/// Trains the inverse-model architecture with one of the naive strategies:
/// paired_only uses the stored true measurements, simulated_only applies the
/// lowfid model to unpaired targets, paired_plus_simulated mixes both per
/// example. Throws ConfigError when the strategy's data is missing (or K is
/// below the batch size for paired_only) and for kind == hio.
models::InverseTrainResult train_baseline_cvae(BaselineKind kind, const models::PairedDataset& paired,
                                               const std::vector<Image>& unpaired,
                                               const imaging::DegradationSpec& lowfid, const BaselineConfig& config);

struct HioConfig {
  double beta = 0.9;
  int n_iter = 500;
  int support_rows = 20;
  int support_cols = 20;
  bool uniform_phase_constraint = true;
  bool measurement_is_modulus = false;  // false: measurement is |F|^2, modulus = sqrt

  void validate_for(int height, int width) const;
  friend bool operator==(const HioConfig&, const HioConfig&) = default;
};

/// Runs HIO from `initial` (an object-plane estimate) against the centered
/// Fourier `modulus`, returning the raw object-plane iterate.
Image hio_iterate(const Image& modulus, const HioConfig& config, const Image& initial);

/// One HIO run from a random-phase start. Returns the real amplitude inside
/// the support, scaled to [0, 1]. Throws InvalidInput for non-square input;
/// an all-zero measurement gives an all-zero image.
Image hio_retrieve(const Measurement& measurement, const HioConfig& config, nn::RngStream& rng);

struct HioResult {
  Image image;
  double fourier_error = 0.0;  // relative modulus mismatch of the chosen restart
  int restart = 0;
};

/// Best of `restarts` independent runs, ranked by Fourier-modulus mismatch
/// (ground truth is never consulted). Restarts run in parallel.
HioResult hio_best_of(const Measurement& measurement, const HioConfig& config, int restarts, nn::RngStream& rng);

/// Relative mismatch || |F x| - m || / || m || for a centered modulus m.
double fourier_modulus_error(const Image& x, const Image& modulus);

}  // namespace mfinv::baselines
