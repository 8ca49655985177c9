#include "mfinv/models/inverse_vici.hpp"

#include <cmath>

#include "mfinv/errors.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::models {

namespace {

void check_image(const InverseModelParams& p, const Image& x) {
  if (x.height != p.height || x.width != p.width) {
    throw InvalidInput("image is " + std::to_string(x.height) + "x" + std::to_string(x.width) + ", model expects " +
                       std::to_string(p.height) + "x" + std::to_string(p.width));
  }
}

void check_measurement(const InverseModelParams& p, const Measurement& y) {
  if (y.size() != p.measurement.size()) {
    throw InvalidInput("measurement has " + std::to_string(y.size()) + " values, model expects " +
                       std::to_string(p.measurement.size()));
  }
}

Image column_image(const InverseModelParams& p, const Matrix& m, Eigen::Index col) {
  const double* d = m.col(col).data();
  return Image(p.height, p.width, std::vector<double>(d, d + m.rows()));
}

}  // namespace

InverseModelParams InverseModelParams::init(int height, int width, MeasurementShape measurement, const NetConfig& cfg,
                                            nn::RngStream& rng) {
  cfg.validate();
  if (height < 1 || width < 1 || measurement.size() == 0) throw ConfigError("inverse model needs non-empty shapes");
  CvaeSpec s;
  s.target_dim = height * width;
  s.cond_dim = static_cast<int>(measurement.size());
  s.latent_dim = cfg.latent_dim;
  s.hidden = cfg.hidden;
  s.activation = cfg.activation;
  s.recog_target_at = 0;
  s.latent_first = true;
  return {CvaeParams::init(s, rng), height, width, measurement};
}

ElboColumns vici_elbo_terms(const InverseModelParams& p, const Image& x, const Measurement& y, const Vector& eps) {
  check_image(p, x);
  check_measurement(p, y);
  return cvae_elbo(p.net, to_vector(x), to_vector(y), eps);
}

double vici_elbo(const InverseModelParams& p, const Image& x, const Measurement& y, nn::RngStream& rng) {
  Vector eps(p.latent_dim());
  rng.fill_normal({eps.data(), static_cast<std::size_t>(eps.size())});
  return vici_elbo_terms(p, x, y, eps).elbo(0);
}

Trace train_inverse_on(InverseModelParams& params, const TrainConfig& config, const ExampleFn& pairs) {
  return train_cvae(params.net, config, pairs);
}

InverseModelParams init_inverse(int height, int width, MeasurementShape measurement, const NetConfig& net,
                                const TrainConfig& config) {
  nn::RngStream init_rng(config.seed, nn::derive_stream({0x1Eu}));
  return InverseModelParams::init(height, width, measurement, net, init_rng);
}

InverseTrainResult train_inverse(const std::vector<Image>& targets, const ForwardModelParams& fm,
                                 const imaging::DegradationSpec& lowfid, const NetConfig& net,
                                 const TrainConfig& config) {
  config.validate();
  if (targets.empty()) throw ConfigError("inverse training needs at least one unpaired target");
  const Image& x0 = targets.front();
  if (x0.height != fm.height || x0.width != fm.width) throw InvalidInput("targets do not match the forward model");
  InverseTrainResult r{init_inverse(x0.height, x0.width, fm.measurement, net, config), {}};
  r.trace = train_inverse_on(r.params, config,
                             [&](nn::RngStream& pick, nn::RngStream& draw, Eigen::Ref<Vector> target,
                                 Eigen::Ref<Vector> cond) {
                               const Image& x = targets[pick.below(targets.size())];
                               target = to_vector(x);
                               cond = to_vector(sample_measurement(fm, lowfid, x, draw));
                             });
  return r;
}

PosteriorSamples posterior_sample(const InverseModelParams& p, const Measurement& y, int n, nn::RngStream& rng) {
  if (n < 1) throw InvalidInput("posterior_sample needs n >= 1");
  check_measurement(p, y);
  const Matrix cond = to_vector(y).replicate(1, n);
  Matrix eps_z(p.latent_dim(), n), eps_x(p.net.spec.target_dim, n);
  for (int i = 0; i < n; ++i) {
    rng.fill_normal({eps_z.col(i).data(), static_cast<std::size_t>(eps_z.rows())});
    rng.fill_normal({eps_x.col(i).data(), static_cast<std::size_t>(eps_x.rows())});
  }
  const Matrix draws = cvae_sample(p.net, cond, eps_z, eps_x);
  PosteriorSamples out;
  out.samples.reserve(n);
  for (int i = 0; i < n; ++i) out.samples.push_back(column_image(p, draws, i));
  const Vector mean = draws.rowwise().mean();
  const Vector var = (draws.colwise() - mean).array().square().rowwise().mean();
  out.mean = Image(p.height, p.width, std::vector<double>(mean.data(), mean.data() + mean.size()));
  out.std = Image(p.height, p.width);
  for (Eigen::Index i = 0; i < var.size(); ++i) out.std.data[i] = std::sqrt(var(i));
  return out;
}

std::vector<Image> pseudo_max(const InverseModelParams& p, const std::vector<Measurement>& ys) {
  Matrix cond(p.net.spec.cond_dim, static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    check_measurement(p, ys[i]);
    cond.col(static_cast<Eigen::Index>(i)) = to_vector(ys[i]);
  }
  const Matrix xm = cvae_pseudo_max(p.net, cond);
  std::vector<Image> out;
  out.reserve(ys.size());
  for (Eigen::Index i = 0; i < xm.cols(); ++i) out.push_back(column_image(p, xm, i));
  return out;
}

Image pseudo_max(const InverseModelParams& p, const Measurement& y) { return pseudo_max(p, std::vector{y}).front(); }

void save_inverse(const std::filesystem::path& stem, const InverseModelParams& p, nlohmann::json meta,
                  nn::DType dtype) {
  meta["model"] = "inverse_vici";
  meta["image"] = {p.height, p.width};
  meta["measurement"] = {p.measurement.frames, p.measurement.height, p.measurement.width};
  meta["condition_order"] = "y";
  meta["recognition_order"] = "x|y";
  meta["decoder_order"] = "z|y";
  save_cvae(stem, p.net, std::move(meta), dtype);
}

InverseModelParams load_inverse(const std::filesystem::path& stem, nlohmann::json* meta) {
  nlohmann::json m;
  InverseModelParams p;
  p.net = load_cvae(stem, &m);
  if (m.value("model", "") != "inverse_vici") throw FormatError("checkpoint is not an inverse model", 0);
  p.height = m.at("image").at(0).get<int>();
  p.width = m.at("image").at(1).get<int>();
  p.measurement = {m.at("measurement").at(0).get<int>(), m.at("measurement").at(1).get<int>(),
                   m.at("measurement").at(2).get<int>()};
  if (meta != nullptr) *meta = std::move(m);
  return p;
}

}  // namespace mfinv::models
