#include "mfinv/models/cvae.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mfinv/errors.hpp"
#include "mfinv/kernels/kernels.hpp"
#include "mfinv/nn/gaussian.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::models {

namespace {

nn::MlpSpec head_spec(int in, const std::vector<int>& hidden, int out, nn::Activation act) {
  nn::MlpSpec s;
  s.widths.push_back(in);
  s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
  s.widths.push_back(2 * out);
  s.activation = act;
  return s;
}

void check_batch(const CvaeSpec& s, const Matrix& target, const Matrix& cond) {
  if (target.rows() != s.target_dim || cond.rows() != s.cond_dim || target.cols() != cond.cols()) {
    throw InvalidInput("batch shapes (" + std::to_string(target.rows()) + ", " + std::to_string(cond.rows()) +
                       ") do not match model (" + std::to_string(s.target_dim) + ", " + std::to_string(s.cond_dim) +
                       ")");
  }
}

Matrix clip_log_var(Matrix lv) { return lv.cwiseMax(nn::kLogVarMin).cwiseMin(nn::kLogVarMax); }

Matrix decoder_input(const CvaeSpec& s, const Matrix& cond, const Matrix& latent) {
  Matrix in(s.cond_dim + s.latent_dim, cond.cols());
  if (s.latent_first) {
    in << latent, cond;
  } else {
    in << cond, latent;
  }
  return in;
}

}  // namespace

void CvaeSpec::validate() const {
  if (target_dim < 1 || cond_dim < 1) throw ConfigError("model dimensions must be positive");
  if (latent_dim < 1) throw ConfigError("latent dimension must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
  }
  if (recog_target_at < 0 || recog_target_at > cond_dim) throw ConfigError("recognition splice point out of range");
}

nn::MlpSpec CvaeSpec::prior_spec() const { return head_spec(cond_dim, hidden, latent_dim, activation); }
nn::MlpSpec CvaeSpec::recognition_spec() const {
  return head_spec(cond_dim + target_dim, hidden, latent_dim, activation);
}
nn::MlpSpec CvaeSpec::decoder_spec() const { return head_spec(cond_dim + latent_dim, hidden, target_dim, activation); }

CvaeParams CvaeParams::init(const CvaeSpec& spec, nn::RngStream& rng) {
  spec.validate();
  CvaeParams p;
  p.spec = spec;
  auto r1 = rng.fork(1);
  auto r2 = rng.fork(2);
  auto r3 = rng.fork(3);
  p.prior = nn::MlpParams::glorot(spec.prior_spec(), r1);
  p.recognition = nn::MlpParams::glorot(spec.recognition_spec(), r2);
  p.decoder = nn::MlpParams::glorot(spec.decoder_spec(), r3);
  return p;
}

bool CvaeParams::all_finite() const { return prior.all_finite() && recognition.all_finite() && decoder.all_finite(); }

CvaeGrads::CvaeGrads(const CvaeParams& p)
    : prior(p.prior.size(), 0.0), recognition(p.recognition.size(), 0.0), decoder(p.decoder.size(), 0.0) {}

void CvaeGrads::zero() {
  std::fill(prior.begin(), prior.end(), 0.0);
  std::fill(recognition.begin(), recognition.end(), 0.0);
  std::fill(decoder.begin(), decoder.end(), 0.0);
}

ElboColumns cvae_elbo(const CvaeParams& p, const Matrix& target, const Matrix& cond, const Matrix& eps,
                      CvaeGrads* grads) {
  const CvaeSpec& s = p.spec;
  check_batch(s, target, cond);
  if (eps.rows() != s.latent_dim || eps.cols() != target.cols()) throw InvalidInput("latent noise has the wrong shape");

  nn::Tape tape;
  const nn::Var t = tape.constant(target);
  const nn::Var c = tape.constant(cond);
  const nn::Var c_head = tape.rows(c, 0, s.recog_target_at);
  const nn::Var c_tail = tape.rows(c, s.recog_target_at, s.cond_dim - s.recog_target_at);

  const auto prior = tape.gaussian_head(p.prior, grads ? &grads->prior : nullptr, c);
  const std::array<nn::Var, 3> recog_parts{c_head, t, c_tail};
  const auto q = tape.gaussian_head(p.recognition, grads ? &grads->recognition : nullptr, tape.concat_rows(recog_parts));
  const nn::Var u = tape.reparam(q, eps);
  const std::array<nn::Var, 2> dec_parts = s.latent_first ? std::array<nn::Var, 2>{u, c} : std::array<nn::Var, 2>{c, u};
  const auto dec = tape.gaussian_head(p.decoder, grads ? &grads->decoder : nullptr, tape.concat_rows(dec_parts));

  const nn::Var recon = tape.gaussian_loglik(dec, t);
  const nn::Var kl = tape.kl_diag(q, prior);
  const nn::Var elbo = tape.sub(recon, kl);
  if (grads != nullptr) tape.backward(tape.scale(tape.mean_all(elbo), -1.0));
  return {tape.value(elbo), tape.value(kl), tape.value(recon)};
}

void cvae_prior(const CvaeParams& p, const Matrix& cond, Matrix& mean, Matrix& log_var) {
  if (cond.rows() != p.spec.cond_dim) throw InvalidInput("condition has the wrong length");
  const Matrix out = nn::mlp_forward_batch(p.prior, cond);
  const int j = p.spec.latent_dim;
  mean = out.topRows(j);
  log_var = clip_log_var(out.bottomRows(j));
}

void cvae_decode(const CvaeParams& p, const Matrix& cond, const Matrix& latent, Matrix& mean, Matrix& log_var) {
  if (cond.rows() != p.spec.cond_dim || latent.rows() != p.spec.latent_dim || latent.cols() != cond.cols()) {
    throw InvalidInput("decoder inputs have the wrong shape");
  }
  const Matrix out = nn::mlp_forward_batch(p.decoder, decoder_input(p.spec, cond, latent));
  const int n = p.spec.target_dim;
  mean = out.topRows(n);
  log_var = clip_log_var(out.bottomRows(n));
}

Matrix cvae_sample(const CvaeParams& p, const Matrix& cond, const Matrix& eps_latent, const Matrix& eps_target) {
  Matrix um, ulv;
  cvae_prior(p, cond, um, ulv);
  if (eps_latent.rows() != um.rows() || eps_latent.cols() != um.cols()) throw InvalidInput("latent noise has the wrong shape");
  const Matrix u = um.array() + (0.5 * ulv.array()).exp() * eps_latent.array();
  Matrix tm, tlv;
  cvae_decode(p, cond, u, tm, tlv);
  if (eps_target.rows() != tm.rows() || eps_target.cols() != tm.cols()) throw InvalidInput("target noise has the wrong shape");
  return tm.array() + (0.5 * tlv.array()).exp() * eps_target.array();
}

Matrix cvae_pseudo_max(const CvaeParams& p, const Matrix& cond) {
  Matrix um, ulv, tm, tlv;
  cvae_prior(p, cond, um, ulv);
  cvae_decode(p, cond, um, tm, tlv);
  return tm;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  adam.validate();
}

void write_trace_csv(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "iteration,elbo,kl,recon_loglik\n";
  for (const auto& r : trace) out << r.iteration << ',' << r.elbo << ',' << r.kl << ',' << r.recon_loglik << '\n';
}

Trace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  Trace t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TraceRow r;
    char comma;
    ls >> r.iteration >> comma >> r.elbo >> comma >> r.kl >> comma >> r.recon_loglik;
    t.push_back(r);
  }
  return t;
}

Trace train_cvae(CvaeParams& params, const TrainConfig& config, const ExampleFn& example) {
  config.validate();
  const CvaeSpec& s = params.spec;
  const int b = config.batch_size * config.repeats;
  nn::AdamState st_prior(config.adam, params.prior.size());
  nn::AdamState st_recog(config.adam, params.recognition.size());
  nn::AdamState st_dec(config.adam, params.decoder.size());
  CvaeGrads grads(params);
  Trace trace;
  trace.reserve(static_cast<std::size_t>(config.iterations));

  Matrix target(s.target_dim, b), cond(s.cond_dim, b), eps(s.latent_dim, b);
  for (std::int64_t it = 0; it < config.iterations; ++it) {
    const auto iter = static_cast<std::uint64_t>(it);
    kernels::parallel::for_each_index(static_cast<std::size_t>(b), [&](std::size_t slot) {
      const std::uint64_t pick_slot = slot / static_cast<std::size_t>(config.repeats);
      nn::RngStream pick(config.seed,
                         nn::derive_stream({iter, pick_slot, static_cast<std::uint64_t>(StreamPurpose::pick)}));
      nn::RngStream draw(config.seed, nn::derive_stream({iter, slot, static_cast<std::uint64_t>(StreamPurpose::draw)}));
      example(pick, draw, target.col(static_cast<Eigen::Index>(slot)), cond.col(static_cast<Eigen::Index>(slot)));
      nn::RngStream eps_rng(config.seed,
                            nn::derive_stream({iter, slot, static_cast<std::uint64_t>(StreamPurpose::latent_noise)}));
      eps_rng.fill_normal({eps.col(static_cast<Eigen::Index>(slot)).data(), static_cast<std::size_t>(s.latent_dim)});
    });

    grads.zero();
    const ElboColumns cols = cvae_elbo(params, target, cond, eps, &grads);
    const TraceRow row{it, cols.elbo.mean(), cols.kl.mean(), cols.recon_loglik.mean()};
    if (!std::isfinite(row.elbo)) {
      throw NumericalError("non-finite ELBO at iteration " + std::to_string(it) + " (kl " + std::to_string(row.kl) +
                           ", recon " + std::to_string(row.recon_loglik) + ")");
    }
    try {
      nn::adam_step(st_prior, params.prior.values(), grads.prior);
      nn::adam_step(st_recog, params.recognition.values(), grads.recognition);
      nn::adam_step(st_dec, params.decoder.values(), grads.decoder);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
    trace.push_back(row);
  }
  return trace;
}

nlohmann::json to_json(const CvaeSpec& s) {
  return {{"target_dim", s.target_dim},           {"cond_dim", s.cond_dim},
          {"latent_dim", s.latent_dim},           {"hidden", s.hidden},
          {"activation", nn::to_string(s.activation)}, {"recog_target_at", s.recog_target_at},
          {"latent_first", s.latent_first}};
}

CvaeSpec cvae_spec_from_json(const nlohmann::json& j) {
  CvaeSpec s;
  s.target_dim = j.at("target_dim").get<int>();
  s.cond_dim = j.at("cond_dim").get<int>();
  s.latent_dim = j.at("latent_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  s.recog_target_at = j.at("recog_target_at").get<int>();
  s.latent_first = j.at("latent_first").get<bool>();
  return s;
}

void save_cvae(const std::filesystem::path& stem, const CvaeParams& p, nlohmann::json meta, nn::DType dtype) {
  meta["cvae"] = to_json(p.spec);
  const std::array<nn::NamedNetwork, 3> nets{nn::NamedNetwork{"prior", p.prior},
                                             nn::NamedNetwork{"recognition", p.recognition},
                                             nn::NamedNetwork{"decoder", p.decoder}};
  nn::write_networks(stem, meta, nets, dtype);
}

CvaeParams load_cvae(const std::filesystem::path& stem, nlohmann::json* meta) {
  const nn::NetworkCheckpoint ck = nn::read_networks(stem);
  CvaeParams p;
  p.spec = cvae_spec_from_json(ck.meta.at("cvae"));
  p.prior = ck.at("prior");
  p.recognition = ck.at("recognition");
  p.decoder = ck.at("decoder");
  if (p.prior.spec() != p.spec.prior_spec() || p.recognition.spec() != p.spec.recognition_spec() ||
      p.decoder.spec() != p.spec.decoder_spec()) {
    throw FormatError("checkpoint networks disagree with the stored model spec", 0);
  }
  if (meta != nullptr) *meta = ck.meta;
  return p;
}

}  // namespace mfinv::models
