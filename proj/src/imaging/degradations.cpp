#include "mfinv/imaging/degradations.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "mfinv/errors.hpp"
#include "mfinv/imaging/fft.hpp"
#include "mfinv/kernels/kernels.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::imaging {
namespace {

constexpr std::uint64_t kJitterTag = 1;
constexpr std::uint64_t kNoiseTag = 2;

}  // namespace

std::string to_string(DegradationKind k) {
  switch (k) {
    case DegradationKind::blur: return "blur";
    case DegradationKind::downsample: return "downsample";
    case DegradationKind::occlude: return "occlude";
    case DegradationKind::fourier_intensity: return "fourier_intensity";
    case DegradationKind::diffusion: return "diffusion";
  }
  return "unknown";
}

DegradationKind degradation_kind_from_string(const std::string& s) {
  for (auto k : {DegradationKind::blur, DegradationKind::downsample, DegradationKind::occlude,
                 DegradationKind::fourier_intensity, DegradationKind::diffusion}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown degradation kind '" + s + "'");
}

void DegradationSpec::validate_for(int height, int width) const {
  if (snr_db && std::isnan(*snr_db)) throw InvalidInput("snr_db must not be NaN");
  switch (kind) {
    case DegradationKind::blur:
      if (!(sigma_psf > 0.0)) throw InvalidInput("blur needs sigma_psf > 0");
      break;
    case DegradationKind::downsample:
      if (factor < 1 || height % factor != 0 || width % factor != 0) {
        throw InvalidInput("downsample factor " + std::to_string(factor) + " does not divide " +
                           std::to_string(height) + "x" + std::to_string(width));
      }
      if (sigma_psf < 0.0) throw InvalidInput("sigma_psf must be non-negative");
      break;
    case DegradationKind::occlude:
      if (rect.height < 0 || rect.width < 0 || rect.row < 0 || rect.col < 0 || rect.row + rect.height > height ||
          rect.col + rect.width > width) {
        throw InvalidInput("occlusion rectangle lies outside the image");
      }
      if (jitter < 0) throw InvalidInput("occlusion jitter must be non-negative");
      break;
    case DegradationKind::fourier_intensity:
      if (!(saturation_frac > 0.0 && saturation_frac <= 1.0)) throw InvalidInput("saturation_frac must lie in (0, 1]");
      if (sigma_psf < 0.0) throw InvalidInput("sigma_psf must be non-negative");
      break;
    case DegradationKind::diffusion:
      medium.validate();
      video.validate();
      if (keep_frames < 1 || keep_frames > video.frames) throw InvalidInput("keep_frames must lie in [1, video.frames]");
      break;
  }
}

MeasurementShape DegradationSpec::output_shape(int height, int width) const {
  switch (kind) {
    case DegradationKind::downsample: return {1, height / factor, width / factor};
    case DegradationKind::diffusion: return {keep_frames, height, width};
    default: return {1, height, width};
  }
}

std::vector<double> gaussian_kernel_1d(double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("Gaussian PSF needs sigma > 0");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int t = -r; t <= r; ++t) {
    k[t + r] = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += k[t + r];
  }
  for (auto& v : k) v /= sum;
  return k;
}

Image gaussian_blur(const Image& x, double sigma_psf) {
  const auto k = gaussian_kernel_1d(sigma_psf);
  Image out(x.height, x.width);
  kernels::parallel::separable_conv2d(x.data, x.height, x.width, k, out.data);
  return out;
}

Measurement add_noise(const Measurement& y, std::optional<double> snr_db, nn::RngStream& rng) {
  if (!snr_db || std::isinf(*snr_db) || y.data.empty()) return y;
  double power = 0.0;
  for (double v : y.data) power += v * v;
  power /= static_cast<double>(y.data.size());
  const double sd = std::sqrt(power * std::pow(10.0, -*snr_db / 10.0));
  Measurement out = y;
  for (auto& v : out.data) v += sd * rng.normal();
  return out;
}

Image downsample(const Image& x, int factor) {
  if (factor < 1 || x.height % factor != 0 || x.width % factor != 0) {
    throw InvalidInput("downsample factor " + std::to_string(factor) + " does not divide image dimensions");
  }
  Image out(x.height / factor, x.width / factor);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      double acc = 0.0;
      for (int dr = 0; dr < factor; ++dr) {
        for (int dc = 0; dc < factor; ++dc) acc += x.at(r * factor + dr, c * factor + dc);
      }
      out.at(r, c) = acc * inv;
    }
  }
  return out;
}

Image occlude(const Image& x, const Rect& rect) {
  if (rect.height < 0 || rect.width < 0 || rect.row < 0 || rect.col < 0 || rect.row + rect.height > x.height ||
      rect.col + rect.width > x.width) {
    throw InvalidInput("occlusion rectangle lies outside the image");
  }
  Image out = x;
  for (int r = rect.row; r < rect.row + rect.height; ++r) {
    for (int c = rect.col; c < rect.col + rect.width; ++c) out.at(r, c) = 0.0;
  }
  return out;
}

namespace {

std::vector<double> centered_power_spectrum(const Image& x, bool modulus) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> buf(x.data.begin(), x.data.end());
  Fft2 fft(x.height, x.width);
  fft.forward(buf);
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = modulus ? std::abs(buf[i]) : std::norm(buf[i]);
  fftshift<double>(p, x.height, x.width);
  return p;
}

Measurement normalize_and_saturate(std::vector<double> p, int h, int w, double saturation_frac) {
  const double peak = *std::max_element(p.begin(), p.end());
  if (peak > 0.0) {
    for (auto& v : p) v = std::min(v / peak, saturation_frac) / saturation_frac;
  }
  return Measurement({1, h, w}, std::move(p));
}

}  // namespace

Measurement fourier_intensity(const Image& x, double saturation_frac, bool modulus) {
  if (!(saturation_frac > 0.0 && saturation_frac <= 1.0)) throw InvalidInput("saturation_frac must lie in (0, 1]");
  return normalize_and_saturate(centered_power_spectrum(x, modulus), x.height, x.width, saturation_frac);
}

Measurement apply_degradation(const DegradationSpec& spec, const Image& x, nn::RngStream& rng) {
  spec.validate_for(x.height, x.width);
  Measurement clean;
  switch (spec.kind) {
    case DegradationKind::blur:
      clean = Measurement::from_image(gaussian_blur(x, spec.sigma_psf));
      break;
    case DegradationKind::downsample: {
      const Image pre = spec.sigma_psf > 0.0 ? gaussian_blur(x, spec.sigma_psf) : x;
      clean = Measurement::from_image(downsample(pre, spec.factor));
      break;
    }
    case DegradationKind::occlude: {
      Rect r = spec.rect;
      if (spec.jitter > 0) {
        auto jr = rng.fork(kJitterTag);
        const auto span = static_cast<std::uint64_t>(2 * spec.jitter + 1);
        r.row = std::clamp(r.row + static_cast<int>(jr.below(span)) - spec.jitter, 0, x.height - r.height);
        r.col = std::clamp(r.col + static_cast<int>(jr.below(span)) - spec.jitter, 0, x.width - r.width);
      }
      clean = Measurement::from_image(occlude(x, r));
      break;
    }
    case DegradationKind::fourier_intensity: {
      auto p = centered_power_spectrum(x, spec.modulus);
      if (spec.sigma_psf > 0.0) p = gaussian_blur(Image(x.height, x.width, std::move(p)), spec.sigma_psf).data;
      clean = normalize_and_saturate(std::move(p), x.height, x.width, spec.saturation_frac);
      break;
    }
    case DegradationKind::diffusion: {
      diffusion::ToFVideo v;
      if (spec.solver == DiffusionSolver::analytic) {
        v = diffusion::lowfid_tof(x, spec.medium, spec.video);
      } else {
        const auto grid = diffusion::default_grid(x.height, x.width, spec.medium, spec.video);
        v = diffusion::fd_solve(x, spec.medium, grid, spec.video);
      }
      v = v.first_frames(spec.keep_frames);
      if (v.background_peak > 0.0) {
        for (auto& d : v.data) d /= v.background_peak;
      }
      clean = Measurement({v.frames, v.height, v.width}, std::move(v.data));
      break;
    }
  }
  auto noise_rng = rng.fork(kNoiseTag);
  return add_noise(clean, spec.snr_db, noise_rng);
}

}  // namespace mfinv::imaging
