#include "mfinv/harness/config.hpp"

#include <cstring>
#include <fstream>

#include "mfinv/errors.hpp"
#include "mfinv/harness/idx.hpp"

namespace mfinv::harness {

using nlohmann::json;

namespace {

// Copies known keys of `src` into `dst`, rejecting anything unexpected.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

json to_json(const diffusion::MediumSpec& m) {
  return {{"mu_a", m.mu_a},
          {"mu_s", m.mu_s},
          {"c", m.c},
          {"slab_thickness", m.slab_thickness},
          {"object_absorption_factor", m.object_absorption_factor}};
}

diffusion::MediumSpec medium_from_json(const json& j) {
  check_keys(j, {"mu_a", "mu_s", "c", "slab_thickness", "object_absorption_factor"}, "medium");
  diffusion::MediumSpec m;
  get_if(j, "mu_a", m.mu_a);
  get_if(j, "mu_s", m.mu_s);
  get_if(j, "c", m.c);
  get_if(j, "slab_thickness", m.slab_thickness);
  get_if(j, "object_absorption_factor", m.object_absorption_factor);
  return m;
}

json to_json(const diffusion::VideoSpec& v) {
  return {{"frames", v.frames},           {"frame_period", v.frame_period}, {"start_time", v.start_time},
          {"pixel_pitch", v.pixel_pitch}, {"source_sigma", v.source_sigma}, {"time_substeps", v.time_substeps}};
}

diffusion::VideoSpec video_from_json(const json& j) {
  check_keys(j, {"frames", "frame_period", "start_time", "pixel_pitch", "source_sigma", "time_substeps"}, "video");
  diffusion::VideoSpec v;
  get_if(j, "frames", v.frames);
  get_if(j, "frame_period", v.frame_period);
  get_if(j, "start_time", v.start_time);
  get_if(j, "pixel_pitch", v.pixel_pitch);
  get_if(j, "source_sigma", v.source_sigma);
  get_if(j, "time_substeps", v.time_substeps);
  return v;
}

json to_json(const models::NetConfig& n) {
  return {{"latent_dim", n.latent_dim}, {"hidden", n.hidden}, {"activation", nn::to_string(n.activation)}};
}

models::NetConfig net_from_json(const json& j, const std::string& where) {
  check_keys(j, {"latent_dim", "hidden", "activation"}, where);
  models::NetConfig n;
  get_if(j, "latent_dim", n.latent_dim);
  get_if(j, "hidden", n.hidden);
  if (j.contains("activation")) n.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  return n;
}

json to_json(const StageIterations& s) {
  return {{"iterations", s.iterations}, {"batch_size", s.batch_size}, {"repeats", s.repeats}};
}

StageIterations stage_from_json(const json& j, const std::string& where) {
  check_keys(j, {"iterations", "batch_size", "repeats"}, where);
  StageIterations s;
  get_if(j, "iterations", s.iterations);
  get_if(j, "batch_size", s.batch_size);
  get_if(j, "repeats", s.repeats);
  return s;
}

}  // namespace

json to_json(const imaging::DegradationSpec& s) {
  json j = {{"kind", imaging::to_string(s.kind)},
            {"sigma_psf", s.sigma_psf},
            {"snr_db", s.snr_db ? json(*s.snr_db) : json(nullptr)},
            {"factor", s.factor},
            {"rect", {s.rect.row, s.rect.col, s.rect.height, s.rect.width}},
            {"jitter", s.jitter},
            {"saturation_frac", s.saturation_frac},
            {"modulus", s.modulus},
            {"medium", to_json(s.medium)},
            {"video", to_json(s.video)},
            {"solver", s.solver == imaging::DiffusionSolver::analytic ? "analytic" : "finite_difference"},
            {"keep_frames", s.keep_frames}};
  return j;
}

imaging::DegradationSpec degradation_from_json(const json& j) {
  check_keys(j,
             {"kind", "sigma_psf", "snr_db", "factor", "rect", "jitter", "saturation_frac", "modulus", "medium", "video",
              "solver", "keep_frames"},
             "degradation");
  imaging::DegradationSpec s;
  try {
    if (j.contains("kind")) s.kind = imaging::degradation_kind_from_string(j.at("kind").get<std::string>());
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  get_if(j, "sigma_psf", s.sigma_psf);
  if (j.contains("snr_db") && !j.at("snr_db").is_null()) s.snr_db = j.at("snr_db").get<double>();
  get_if(j, "factor", s.factor);
  if (j.contains("rect")) {
    const auto r = j.at("rect").get<std::vector<int>>();
    if (r.size() != 4) throw ConfigError("rect must be [row, col, height, width]");
    s.rect = {r[0], r[1], r[2], r[3]};
  }
  get_if(j, "jitter", s.jitter);
  get_if(j, "saturation_frac", s.saturation_frac);
  get_if(j, "modulus", s.modulus);
  if (j.contains("medium")) s.medium = medium_from_json(j.at("medium"));
  if (j.contains("video")) s.video = video_from_json(j.at("video"));
  if (j.contains("solver")) {
    const auto v = j.at("solver").get<std::string>();
    if (v == "analytic") {
      s.solver = imaging::DiffusionSolver::analytic;
    } else if (v == "finite_difference") {
      s.solver = imaging::DiffusionSolver::finite_difference;
    } else {
      throw ConfigError("unknown diffusion solver '" + v + "'");
    }
  }
  get_if(j, "keep_frames", s.keep_frames);
  return s;
}

json to_json(const ExperimentConfig& c) {
  return {
      {"schema_version", c.schema_version},
      {"task", c.task},
      {"dataset", {{"path", c.dataset_path.string()}, {"k", c.k}, {"l", c.l}, {"test_n", c.test_n}}},
      {"true_process", to_json(c.true_process)},
      {"lowfid", to_json(c.lowfid)},
      {"forward_net", to_json(c.forward_net)},
      {"inverse_net", to_json(c.inverse_net)},
      {"optimizer",
       {{"learning_rate", c.optimizer.learning_rate},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon}}},
      {"forward_train", to_json(c.forward_train)},
      {"inverse_train", to_json(c.inverse_train)},
      {"proposed", c.train_proposed},
      {"baselines", c.baselines},
      {"mixing", c.mixing == baselines::MixingRule::half ? "half" : "proportional"},
      {"hio",
       {{"beta", c.hio.beta},
        {"n_iter", c.hio.n_iter},
        {"support", {c.hio.support_rows, c.hio.support_cols}},
        {"restarts", c.hio_restarts}}},
      {"eval",
       {{"posterior_samples", c.posterior_samples},
        {"elbo_samples", c.elbo_samples},
        {"grid_examples", c.grid_examples}}},
      {"sweep",
       {{"methods", c.sweep.methods}, {"severities", c.sweep.severities}, {"ks", c.sweep.ks}, {"seeds", c.sweep.seeds}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"checkpoint_dtype", nn::to_string(c.checkpoint_dtype)},
  };
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j,
             {"schema_version", "task", "dataset", "true_process", "lowfid", "forward_net", "inverse_net", "optimizer",
              "forward_train", "inverse_train", "proposed", "baselines", "mixing", "hio", "eval", "sweep", "seed", "output_dir",
              "checkpoint_dtype"},
             "config");
  ExperimentConfig c;
  get_if(j, "schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  get_if(j, "task", c.task);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"path", "k", "l", "test_n"}, "dataset");
    if (d.contains("path")) c.dataset_path = d.at("path").get<std::string>();
    get_if(d, "k", c.k);
    get_if(d, "l", c.l);
    get_if(d, "test_n", c.test_n);
  }
  if (j.contains("true_process")) c.true_process = degradation_from_json(j.at("true_process"));
  if (j.contains("lowfid")) c.lowfid = degradation_from_json(j.at("lowfid"));
  if (j.contains("forward_net")) c.forward_net = net_from_json(j.at("forward_net"), "forward_net");
  if (j.contains("inverse_net")) c.inverse_net = net_from_json(j.at("inverse_net"), "inverse_net");
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, {"learning_rate", "beta1", "beta2", "epsilon"}, "optimizer");
    get_if(o, "learning_rate", c.optimizer.learning_rate);
    get_if(o, "beta1", c.optimizer.beta1);
    get_if(o, "beta2", c.optimizer.beta2);
    get_if(o, "epsilon", c.optimizer.epsilon);
  }
  if (j.contains("forward_train")) c.forward_train = stage_from_json(j.at("forward_train"), "forward_train");
  if (j.contains("inverse_train")) c.inverse_train = stage_from_json(j.at("inverse_train"), "inverse_train");
  get_if(j, "proposed", c.train_proposed);
  get_if(j, "baselines", c.baselines);
  if (j.contains("mixing")) {
    const auto m = j.at("mixing").get<std::string>();
    if (m == "half") {
      c.mixing = baselines::MixingRule::half;
    } else if (m == "proportional") {
      c.mixing = baselines::MixingRule::proportional;
    } else {
      throw ConfigError("unknown mixing rule '" + m + "'");
    }
  }
  if (j.contains("hio")) {
    const auto& h = j.at("hio");
    check_keys(h, {"beta", "n_iter", "support", "restarts"}, "hio");
    get_if(h, "beta", c.hio.beta);
    get_if(h, "n_iter", c.hio.n_iter);
    if (h.contains("support")) {
      const auto s = h.at("support").get<std::vector<int>>();
      if (s.size() != 2) throw ConfigError("hio.support must be [rows, cols]");
      c.hio.support_rows = s[0];
      c.hio.support_cols = s[1];
    }
    get_if(h, "restarts", c.hio_restarts);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"posterior_samples", "elbo_samples", "grid_examples"}, "eval");
    get_if(e, "posterior_samples", c.posterior_samples);
    get_if(e, "elbo_samples", c.elbo_samples);
    get_if(e, "grid_examples", c.grid_examples);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"methods", "severities", "ks", "seeds"}, "sweep");
    get_if(s, "methods", c.sweep.methods);
    get_if(s, "severities", c.sweep.severities);
    get_if(s, "ks", c.sweep.ks);
    get_if(s, "seeds", c.sweep.seeds);
  }
  get_if(j, "seed", c.seed);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("checkpoint_dtype")) {
    c.checkpoint_dtype = nn::dtype_from_string(j.at("checkpoint_dtype").get<std::string>());
  }
  return c;
}

void ExperimentConfig::validate(bool check_paths) const {
  if (schema_version != kSchemaVersion) throw ConfigError("unsupported schema_version");
  if (task.empty()) throw ConfigError("task name must not be empty");
  if (k < 0 || l < 0 || test_n < 1) throw ConfigError("split sizes must be non-negative and test_n >= 1");
  if (true_process.kind != lowfid.kind) {
    throw ConfigError("true process (" + imaging::to_string(true_process.kind) + ") and lowfid (" +
                      imaging::to_string(lowfid.kind) + ") must be the same kind");
  }
  forward_net.validate();
  inverse_net.validate();
  optimizer.validate();
  for (const auto* s : {&forward_train, &inverse_train}) {
    if (s->iterations < 0 || s->batch_size < 1 || s->repeats < 1) throw ConfigError("invalid training stage settings");
  }
  for (const auto& b : baselines) {
    if (baselines::baseline_kind_from_string(b) == baselines::BaselineKind::hio &&
        true_process.kind != imaging::DegradationKind::fourier_intensity) {
      throw ConfigError("the hio baseline needs a fourier_intensity task");
    }
  }
  if (hio_restarts < 1) throw ConfigError("hio.restarts must be >= 1");
  if (posterior_samples < 1 || elbo_samples < 1 || grid_examples < 0) throw ConfigError("invalid eval settings");
  if (check_paths && !std::filesystem::exists(dataset_path)) {
    throw ConfigError("dataset file not found: " + dataset_path.string());
  }
}

void apply_env_overrides(json& j, char** envp) {
  if (envp == nullptr) return;
  const std::size_t plen = std::strlen(kEnvPrefix);
  for (char** e = envp; *e != nullptr; ++e) {
    const std::string entry(*e);
    if (entry.compare(0, plen, kEnvPrefix) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string path = entry.substr(plen, eq - plen);
    const std::string raw = entry.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto sep = path.find("__", start);
      const std::string key = path.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
      if (key.empty()) throw ConfigError("malformed override variable " + entry.substr(0, eq));
      if (sep == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      node = &(*node)[key];
      start = sep + 2;
    }
  }
}

ExperimentConfig load_config(const std::filesystem::path& path, char** envp, bool check_paths,
                             const std::string& preset) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
  } else {
    j = to_json(reference_config(preset));
  }
  apply_env_overrides(j, envp);
  ExperimentConfig c = config_from_json(j);
  c.validate(check_paths);
  return c;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
}

std::string fingerprint(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  const std::string s = j.dump();
  return sha256_hex({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

ExperimentConfig blur_reference_config() {
  ExperimentConfig c;
  c.task = "blur";
  c.true_process.kind = imaging::DegradationKind::blur;
  c.true_process.sigma_psf = 2.0;
  c.true_process.snr_db = 16.0;
  c.lowfid.kind = imaging::DegradationKind::blur;
  c.lowfid.sigma_psf = 1.5;
  c.forward_net = {20, {200}, nn::Activation::relu};
  c.inverse_net = {20, {200}, nn::Activation::relu};
  c.forward_train = {2000, 64, 1};
  c.inverse_train = {3000, 64, 1};
  c.sweep.severities = {1.0, 2.5, 4.0};
  return c;
}

ExperimentConfig fourier_reference_config() {
  ExperimentConfig c = blur_reference_config();
  c.task = "fourier";
  c.true_process = {};
  c.true_process.kind = imaging::DegradationKind::fourier_intensity;
  c.true_process.saturation_frac = 0.4;
  c.true_process.sigma_psf = 0.5;
  c.true_process.snr_db = 30.0;
  c.lowfid = {};
  c.lowfid.kind = imaging::DegradationKind::fourier_intensity;
  c.lowfid.saturation_frac = 0.4;
  c.baselines = {"hio"};
  c.sweep.methods = {"proposed", "hio"};
  c.sweep.severities = {1.0, 0.4};
  c.output_dir = "runs/fourier";
  return c;
}

ExperimentConfig reference_config(const std::string& name) {
  if (name == "blur") return blur_reference_config();
  if (name == "fourier") return fourier_reference_config();
  throw ConfigError("unknown preset '" + name + "' (expected blur or fourier)");
}

}  // namespace mfinv::harness
