#include "mfinv/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "mfinv/errors.hpp"
#include "mfinv/imaging/fft.hpp"
#include "mfinv/kernels/kernels.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::baselines {

using models::to_vector;
using models::Vector;

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::paired_only: return "paired_only";
    case BaselineKind::simulated_only: return "simulated_only";
    case BaselineKind::paired_plus_simulated: return "paired_plus_simulated";
    case BaselineKind::hio: return "hio";
  }
  return "?";
}

BaselineKind baseline_kind_from_string(const std::string& s) {
  for (auto k : {BaselineKind::paired_only, BaselineKind::simulated_only, BaselineKind::paired_plus_simulated,
                 BaselineKind::hio}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown baseline '" + s + "'");
}

models::InverseTrainResult train_baseline_cvae(BaselineKind kind, const models::PairedDataset& paired,
                                               const std::vector<Image>& unpaired,
                                               const imaging::DegradationSpec& lowfid, const BaselineConfig& config) {
  config.train.validate();
  paired.validate();
  const std::size_t k = paired.size();
  const std::size_t l = unpaired.size();
  switch (kind) {
    case BaselineKind::paired_only:
      if (k < static_cast<std::size_t>(config.train.batch_size)) {
        throw ConfigError("paired_only needs K >= batch size (K = " + std::to_string(k) +
                          ", batch = " + std::to_string(config.train.batch_size) + ")");
      }
      break;
    case BaselineKind::simulated_only:
      if (l == 0) throw ConfigError("simulated_only needs unpaired targets");
      break;
    case BaselineKind::paired_plus_simulated:
      if (k == 0 || l == 0) throw ConfigError("paired_plus_simulated needs both paired and unpaired data");
      break;
    case BaselineKind::hio: throw ConfigError("hio is not a trainable baseline");
  }

  const Image& x0 = k > 0 ? paired.targets.front() : unpaired.front();
  const imaging::MeasurementShape shape =
      k > 0 ? paired.measurements.front().shape : lowfid.output_shape(x0.height, x0.width);
  if (k > 0 && shape.size() != lowfid.output_shape(x0.height, x0.width).size() && kind != BaselineKind::paired_only) {
    throw ConfigError("lowfid output size differs from the paired measurement size");
  }
  models::InverseTrainResult r{models::init_inverse(x0.height, x0.width, shape, config.net, config.train), {}};

  const double p_paired = kind == BaselineKind::paired_only      ? 1.0
                          : kind == BaselineKind::simulated_only ? 0.0
                          : config.mixing == MixingRule::half
                              ? 0.5
                              : static_cast<double>(k) / static_cast<double>(k + l);

  r.trace = models::train_inverse_on(
      r.params, config.train,
      [&](nn::RngStream& pick, nn::RngStream& draw, Eigen::Ref<Vector> target, Eigen::Ref<Vector> cond) {
        const bool use_paired = p_paired >= 1.0 || (p_paired > 0.0 && pick.uniform() < p_paired);
        if (use_paired) {
          const auto i = pick.below(k);
          target = to_vector(paired.targets[i]);
          cond = to_vector(paired.measurements[i]);
        } else {
          const Image& x = unpaired[pick.below(l)];
          target = to_vector(x);
          cond = to_vector(imaging::apply_lowfid(lowfid, x, draw));
        }
      });
  return r;
}

// ---------------------------------------------------------------------------
// Hybrid input-output

void HioConfig::validate_for(int height, int width) const {
  if (!(beta > 0.0 && beta <= 1.0)) throw InvalidInput("HIO beta must lie in (0, 1]");
  if (n_iter < 0) throw InvalidInput("HIO n_iter must be >= 0");
  if (support_rows < 1 || support_cols < 1 || support_rows > height || support_cols > width) {
    throw InvalidInput("HIO support does not fit the image");
  }
  if (!uniform_phase_constraint) throw InvalidInput("only the uniform-phase object constraint is implemented");
}

namespace {

using cplx = std::complex<double>;

std::vector<char> support_mask(int h, int w, const HioConfig& c) {
  std::vector<char> m(static_cast<std::size_t>(h) * w, 0);
  const int r0 = (h - c.support_rows) / 2;
  const int c0 = (w - c.support_cols) / 2;
  for (int r = r0; r < r0 + c.support_rows; ++r) {
    for (int col = c0; col < c0 + c.support_cols; ++col) m[static_cast<std::size_t>(r) * w + col] = 1;
  }
  return m;
}

// Centered modulus -> unshifted (DC at index 0).
std::vector<double> unshifted(const Image& modulus) {
  std::vector<double> m = modulus.data;
  imaging::ifftshift<double>(m, modulus.height, modulus.width);
  return m;
}

Image run_hio(const std::vector<double>& mod, int h, int w, const HioConfig& config, std::vector<double> g) {
  const auto mask = support_mask(h, w, config);
  const std::size_t n = g.size();
  imaging::Fft2 fft(h, w);
  std::vector<cplx> buf(n);
  for (int it = 0; it < config.n_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = g[i];
    fft.forward(buf);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::abs(buf[i]);
      buf[i] = a > 0.0 ? buf[i] * (mod[i] / a) : cplx(mod[i], 0.0);
    }
    fft.inverse(buf);
    for (std::size_t i = 0; i < n; ++i) {
      const double gp = buf[i].real();
      g[i] = (mask[i] && gp >= 0.0) ? gp : g[i] - config.beta * gp;
    }
  }
  return Image(h, w, std::move(g));
}

void check_square(const Measurement& m) {
  if (m.shape.frames != 1 || m.shape.height != m.shape.width) {
    throw InvalidInput("HIO needs a single square Fourier measurement, got " + std::to_string(m.shape.frames) + "x" +
                       std::to_string(m.shape.height) + "x" + std::to_string(m.shape.width));
  }
}

Image modulus_of(const Measurement& m, const HioConfig& c) {
  Image mod = m.to_image();
  if (!c.measurement_is_modulus) {
    for (auto& v : mod.data) v = std::sqrt(std::max(v, 0.0));
  }
  return mod;
}

Image finalize(const Image& g, const HioConfig& c) {
  const auto mask = support_mask(g.height, g.width, c);
  Image out(g.height, g.width);
  double peak = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.data[i] = mask[i] ? std::max(g.data[i], 0.0) : 0.0;
    peak = std::max(peak, out.data[i]);
  }
  if (peak > 0.0) {
    for (auto& v : out.data) v /= peak;
  }
  return out;
}

}  // namespace

Image hio_iterate(const Image& modulus, const HioConfig& config, const Image& initial) {
  config.validate_for(modulus.height, modulus.width);
  if (initial.height != modulus.height || initial.width != modulus.width) {
    throw InvalidInput("HIO initial estimate has the wrong shape");
  }
  return run_hio(unshifted(modulus), modulus.height, modulus.width, config, initial.data);
}

Image hio_retrieve(const Measurement& measurement, const HioConfig& config, nn::RngStream& rng) {
  check_square(measurement);
  const int h = measurement.shape.height;
  const int w = measurement.shape.width;
  config.validate_for(h, w);
  const Image mod = modulus_of(measurement, config);
  if (std::all_of(mod.data.begin(), mod.data.end(), [](double v) { return v == 0.0; })) return Image(h, w);

  // Random phase on the measured modulus, back to the object plane.
  std::vector<double> m = unshifted(mod);
  const std::size_t n = m.size();
  std::vector<cplx> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = std::polar(m[i], 2.0 * std::numbers::pi * rng.uniform());
  imaging::Fft2 fft(h, w);
  fft.inverse(buf);
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = buf[i].real();
  return finalize(run_hio(m, h, w, config, std::move(g)), config);
}

double fourier_modulus_error(const Image& x, const Image& modulus) {
  if (x.height != modulus.height || x.width != modulus.width) throw InvalidInput("shape mismatch");
  std::vector<cplx> buf(x.data.begin(), x.data.end());
  imaging::Fft2 fft(x.height, x.width);
  fft.forward(buf);
  std::vector<double> a(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) a[i] = std::abs(buf[i]);
  imaging::fftshift<double>(a, x.height, x.width);
  // Compare shapes only: the measurement carries no absolute scale.
  double sa = 0.0, sm = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i] * a[i];
    sm += modulus.data[i] * modulus.data[i];
  }
  if (sm == 0.0) return sa == 0.0 ? 0.0 : 1.0;
  const double k = sa > 0.0 ? std::sqrt(sm / sa) : 0.0;
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) err += (k * a[i] - modulus.data[i]) * (k * a[i] - modulus.data[i]);
  return std::sqrt(err / sm);
}

HioResult hio_best_of(const Measurement& measurement, const HioConfig& config, int restarts, nn::RngStream& rng) {
  if (restarts < 1) throw InvalidInput("need at least one HIO restart");
  check_square(measurement);
  const Image mod = modulus_of(measurement, config);
  std::vector<HioResult> runs(static_cast<std::size_t>(restarts));
  kernels::parallel::for_each_index(runs.size(), [&](std::size_t i) {
    auto r = rng.fork(i);
    Image img = hio_retrieve(measurement, config, r);
    runs[i] = {img, fourier_modulus_error(img, mod), static_cast<int>(i)};
  });
  return *std::min_element(runs.begin(), runs.end(), [](const HioResult& a, const HioResult& b) {
    return a.fourier_error < b.fourier_error;
  });
}

}  // namespace mfinv::baselines
