#pragma once

#include <optional>
#include <string>

#include "mfinv/diffusion/diffusion.hpp"
#include "mfinv/imaging/image.hpp"

namespace mfinv::nn {
class RngStream;
}

namespace mfinv::imaging {

enum class DegradationKind { blur, downsample, occlude, fourier_intensity, diffusion };

std::string to_string(DegradationKind k);
DegradationKind degradation_kind_from_string(const std::string& s);

/// Pixel rectangle: top-left corner plus extent.
struct Rect {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

enum class DiffusionSolver { analytic, finite_difference };

/// One analytic (or simulated) observation process.
///
/// Which fields matter depends on `kind`:
///  - blur: sigma_psf
///  - downsample: factor, optional sigma_psf blur applied first
///  - occlude: rect, optional per-example jitter of up to `jitter` pixels
///  - fourier_intensity: saturation_frac, modulus, optional sigma_psf blur of
///    the intensity pattern before normalization
///  - diffusion: medium, video, solver, keep_frames
/// snr_db adds Gaussian noise at that signal-to-noise ratio when present.
struct DegradationSpec {
  DegradationKind kind = DegradationKind::blur;
  double sigma_psf = 0.0;
  std::optional<double> snr_db;
  int factor = 1;
  Rect rect;
  int jitter = 0;
  double saturation_frac = 0.4;
  bool modulus = false;
  diffusion::MediumSpec medium;
  diffusion::VideoSpec video;
  DiffusionSolver solver = DiffusionSolver::analytic;
  int keep_frames = 15;

  /// Throws InvalidInput when the parameters do not fit an h x w target.
  void validate_for(int height, int width) const;
  /// Shape produced for an h x w target.
  MeasurementShape output_shape(int height, int width) const;

  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

/// Normalized 1-D Gaussian taps truncated at +-ceil(3 sigma).
std::vector<double> gaussian_kernel_1d(double sigma);

/// Zero-padded convolution with the separable truncated Gaussian PSF.
Image gaussian_blur(const Image& x, double sigma_psf);

/// Adds i.i.d. N(0, mean(y^2) 10^(-snr/10)) noise. A missing or infinite SNR
/// leaves y unchanged.
Measurement add_noise(const Measurement& y, std::optional<double> snr_db, nn::RngStream& rng);

/// Non-overlapping block average.
Image downsample(const Image& x, int factor);

/// Sets the pixels inside `rect` to zero.
Image occlude(const Image& x, const Rect& rect);

/// Centered |DFT|^2 (or |DFT| when `modulus`) normalized to its maximum, then
/// clipped at saturation_frac and rescaled so the clip level reads 1.
Measurement fourier_intensity(const Image& x, double saturation_frac, bool modulus = false);

/// Single entry point used by the training loops.
Measurement apply_degradation(const DegradationSpec& spec, const Image& x, nn::RngStream& rng);

/// Alias documenting intent when `spec` is the low-fidelity model.
inline Measurement apply_lowfid(const DegradationSpec& spec, const Image& x, nn::RngStream& rng) {
  return apply_degradation(spec, x, rng);
}

}  // namespace mfinv::imaging
