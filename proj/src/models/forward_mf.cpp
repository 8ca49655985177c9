#include "mfinv/models/forward_mf.hpp"

#include "mfinv/errors.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::models {

void NetConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
  }
}

void PairedDataset::validate() const {
  if (targets.size() != measurements.size()) {
    throw InvalidInput("paired dataset has " + std::to_string(targets.size()) + " targets but " +
                       std::to_string(measurements.size()) + " measurements");
  }
  for (std::size_t i = 1; i < targets.size(); ++i) {
    if (targets[i].height != targets[0].height || targets[i].width != targets[0].width ||
        measurements[i].shape != measurements[0].shape) {
      throw InvalidInput("paired dataset entry " + std::to_string(i) + " has a different shape");
    }
  }
}

Vector to_vector(const Image& x) { return Eigen::Map<const Vector>(x.data.data(), static_cast<Eigen::Index>(x.size())); }
Vector to_vector(const Measurement& y) {
  return Eigen::Map<const Vector>(y.data.data(), static_cast<Eigen::Index>(y.size()));
}

ForwardModelParams ForwardModelParams::init(int height, int width, MeasurementShape measurement, const NetConfig& cfg,
                                            nn::RngStream& rng) {
  cfg.validate();
  if (height < 1 || width < 1 || measurement.size() == 0) throw ConfigError("forward model needs non-empty shapes");
  const int n = height * width;
  const int m = static_cast<int>(measurement.size());
  CvaeSpec s;
  s.target_dim = m;
  s.cond_dim = n + m;
  s.latent_dim = cfg.latent_dim;
  s.hidden = cfg.hidden;
  s.activation = cfg.activation;
  s.recog_target_at = n;
  s.latent_first = false;
  return {CvaeParams::init(s, rng), height, width, measurement};
}

namespace {

void check_image(const ForwardModelParams& p, const Image& x) {
  if (x.height != p.height || x.width != p.width) {
    throw InvalidInput("image is " + std::to_string(x.height) + "x" + std::to_string(x.width) + ", model expects " +
                       std::to_string(p.height) + "x" + std::to_string(p.width));
  }
}

void check_measurement(const ForwardModelParams& p, const Measurement& y) {
  if (y.size() != p.measurement.size()) {
    throw InvalidInput("measurement has " + std::to_string(y.size()) + " values, model expects " +
                       std::to_string(p.measurement.size()));
  }
}

}  // namespace

Vector forward_condition(const ForwardModelParams& p, const Image& x, const Measurement& ytilde) {
  check_image(p, x);
  check_measurement(p, ytilde);
  Vector c(p.net.spec.cond_dim);
  c << to_vector(x), to_vector(ytilde);
  return c;
}

ElboColumns mf_elbo_terms(const ForwardModelParams& p, const Image& x, const Measurement& y, const Measurement& ytilde,
                          const Vector& eps) {
  check_measurement(p, y);
  const Matrix cond = forward_condition(p, x, ytilde);
  return cvae_elbo(p.net, to_vector(y), cond, eps);
}

double mf_elbo(const ForwardModelParams& p, const Image& x, const Measurement& y, const Measurement& ytilde,
               nn::RngStream& rng) {
  Vector eps(p.latent_dim());
  rng.fill_normal({eps.data(), static_cast<std::size_t>(eps.size())});
  return mf_elbo_terms(p, x, y, ytilde, eps).elbo(0);
}

Trace train_forward(ForwardModelParams& params, const PairedDataset& data, const imaging::DegradationSpec& lowfid,
                    const TrainConfig& config) {
  config.validate();
  data.validate();
  if (config.iterations == 0) return {};
  if (data.size() < static_cast<std::size_t>(config.batch_size)) {
    throw ConfigError("forward training needs K >= batch size (K = " + std::to_string(data.size()) +
                      ", batch = " + std::to_string(config.batch_size) + ")");
  }
  check_image(params, data.targets.front());
  check_measurement(params, data.measurements.front());
  lowfid.validate_for(params.height, params.width);
  if (lowfid.output_shape(params.height, params.width).size() != params.measurement.size()) {
    throw ConfigError("lowfid output size differs from the measurement size");
  }
  const int n = params.height * params.width;
  const int m = static_cast<int>(params.measurement.size());
  return train_cvae(params.net, config,
                    [&](nn::RngStream& pick, nn::RngStream& draw, Eigen::Ref<Vector> target, Eigen::Ref<Vector> cond) {
                      const auto k = pick.below(data.size());
                      const Image& x = data.targets[k];
                      const Measurement yt = imaging::apply_lowfid(lowfid, x, draw);
                      target = to_vector(data.measurements[k]);
                      cond.head(n) = to_vector(x);
                      cond.tail(m) = to_vector(yt);
                    });
}

ForwardTrainResult train_forward(const PairedDataset& data, const imaging::DegradationSpec& lowfid,
                                 const NetConfig& net, const TrainConfig& config) {
  data.validate();
  if (data.size() == 0) throw ConfigError("forward training needs at least one paired example");
  nn::RngStream init_rng(config.seed, nn::derive_stream({0xF0u}));
  const Image& x0 = data.targets.front();
  ForwardTrainResult r{ForwardModelParams::init(x0.height, x0.width, data.measurements.front().shape, net, init_rng),
                       {}};
  r.trace = train_forward(r.params, data, lowfid, config);
  return r;
}

Measurement sample_measurement_given(const ForwardModelParams& p, const Image& x, const Measurement& ytilde,
                                     nn::RngStream& rng) {
  const Matrix cond = forward_condition(p, x, ytilde);
  Matrix eps_w(p.latent_dim(), 1), eps_y(p.net.spec.target_dim, 1);
  rng.fill_normal({eps_w.data(), static_cast<std::size_t>(eps_w.size())});
  rng.fill_normal({eps_y.data(), static_cast<std::size_t>(eps_y.size())});
  const Matrix y = cvae_sample(p.net, cond, eps_w, eps_y);
  return Measurement(p.measurement, std::vector<double>(y.data(), y.data() + y.size()));
}

Measurement sample_measurement(const ForwardModelParams& p, const imaging::DegradationSpec& lowfid, const Image& x,
                               nn::RngStream& rng) {
  check_image(p, x);
  auto lf_rng = rng.fork(1);
  auto net_rng = rng.fork(2);
  const Measurement yt = imaging::apply_lowfid(lowfid, x, lf_rng);
  return sample_measurement_given(p, x, yt, net_rng);
}

void save_forward(const std::filesystem::path& stem, const ForwardModelParams& p, nlohmann::json meta,
                  nn::DType dtype) {
  meta["model"] = "forward_mf";
  meta["image"] = {p.height, p.width};
  meta["measurement"] = {p.measurement.frames, p.measurement.height, p.measurement.width};
  meta["condition_order"] = "x|ytilde";
  meta["recognition_order"] = "x|y|ytilde";
  meta["decoder_order"] = "x|ytilde|w";
  save_cvae(stem, p.net, std::move(meta), dtype);
}

ForwardModelParams load_forward(const std::filesystem::path& stem, nlohmann::json* meta) {
  nlohmann::json m;
  ForwardModelParams p;
  p.net = load_cvae(stem, &m);
  if (m.value("model", "") != "forward_mf") throw FormatError("checkpoint is not a forward model", 0);
  p.height = m.at("image").at(0).get<int>();
  p.width = m.at("image").at(1).get<int>();
  p.measurement = {m.at("measurement").at(0).get<int>(), m.at("measurement").at(1).get<int>(),
                   m.at("measurement").at(2).get<int>()};
  if (meta != nullptr) *meta = std::move(m);
  return p;
}

}  // namespace mfinv::models
