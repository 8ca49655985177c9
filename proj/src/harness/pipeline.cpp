#include "mfinv/harness/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mfinv/baselines/baselines.hpp"
#include "mfinv/errors.hpp"
#include "mfinv/harness/idx.hpp"
#include "mfinv/harness/pgm.hpp"
#include "mfinv/harness/splits.hpp"
#include "mfinv/kernels/kernels.hpp"
#include "mfinv/models/inverse_vici.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Stage s) {
  switch (s) {
    case Stage::simulate: return "simulate";
    case Stage::train_forward: return "train-forward";
    case Stage::train_inverse: return "train-inverse";
    case Stage::train_baseline: return "train-baseline";
    case Stage::reconstruct: return "reconstruct";
    case Stage::evaluate: return "evaluate";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : kAllStages) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown stage '" + s + "'");
}

double severity_of(const ExperimentConfig& c) {
  const auto& t = c.true_process;
  switch (t.kind) {
    case imaging::DegradationKind::blur: return t.sigma_psf;
    case imaging::DegradationKind::downsample: return t.factor;
    case imaging::DegradationKind::occlude: return static_cast<double>(t.rect.height) * t.rect.width;
    case imaging::DegradationKind::fourier_intensity: return t.saturation_frac;
    case imaging::DegradationKind::diffusion: return t.keep_frames;
  }
  return 0.0;
}

namespace {

constexpr std::uint64_t kHioTag = 0x4810;
constexpr std::uint64_t kPosteriorTag = 0x9057;
constexpr std::uint64_t kElboTag = 0xE1B0;

struct Logger {
  std::ostream* out;
  template <typename... Args>
  void operator()(const Args&... args) const {
    if (out == nullptr) return;
    (*out << ... << args) << '\n';
    out->flush();
  }
};

std::vector<std::string> trained_methods(const ExperimentConfig& c) {
  std::vector<std::string> m;
  if (c.train_proposed) m.push_back("proposed");
  for (const auto& b : c.baselines) {
    if (b != "hio") m.push_back(b);
  }
  return m;
}

bool wants_hio(const ExperimentConfig& c) {
  return std::find(c.baselines.begin(), c.baselines.end(), "hio") != c.baselines.end();
}

fs::path model_stem(const fs::path& dir, const std::string& method) {
  return dir / "models" / (method == "proposed" ? std::string("inverse") : "baseline_" + method);
}

void write_measurements(const fs::path& stem, const std::vector<imaging::Measurement>& ys) {
  std::vector<double> flat;
  imaging::MeasurementShape shape;
  for (const auto& y : ys) {
    shape = y.shape;
    flat.insert(flat.end(), y.data.begin(), y.data.end());
  }
  json m = {{"kind", "measurements"}, {"count", ys.size()}, {"shape", {shape.frames, shape.height, shape.width}}};
  nn::write_blob(stem, m, flat, nn::DType::f64);
}

std::vector<imaging::Measurement> read_measurements(const fs::path& stem) {
  const nn::Blob b = nn::read_blob(stem);
  const auto count = b.manifest.at("count").get<std::size_t>();
  const imaging::MeasurementShape shape{b.manifest.at("shape").at(0).get<int>(), b.manifest.at("shape").at(1).get<int>(),
                                        b.manifest.at("shape").at(2).get<int>()};
  if (count * shape.size() != b.values.size()) throw FormatError("measurement blob size mismatch", 0);
  std::vector<imaging::Measurement> ys;
  for (std::size_t i = 0; i < count; ++i) {
    const auto* d = b.values.data() + i * shape.size();
    ys.emplace_back(shape, std::vector<double>(d, d + shape.size()));
  }
  return ys;
}

void write_images(const fs::path& stem, const std::vector<Image>& imgs) {
  std::vector<double> flat;
  for (const auto& x : imgs) flat.insert(flat.end(), x.data.begin(), x.data.end());
  const int h = imgs.empty() ? 0 : imgs[0].height;
  const int w = imgs.empty() ? 0 : imgs[0].width;
  nn::write_blob(stem, {{"kind", "images"}, {"count", imgs.size()}, {"shape", {h, w}}}, flat, nn::DType::f64);
}

std::vector<Image> read_images(const fs::path& stem) {
  const nn::Blob b = nn::read_blob(stem);
  const auto count = b.manifest.at("count").get<std::size_t>();
  const int h = b.manifest.at("shape").at(0).get<int>();
  const int w = b.manifest.at("shape").at(1).get<int>();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (count * n != b.values.size()) throw FormatError("image blob size mismatch", 0);
  std::vector<Image> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.emplace_back(h, w, std::vector<double>(b.values.begin() + i * n, b.values.begin() + (i + 1) * n));
  }
  return out;
}

// Middle frame, display-normalized, nearest-neighbour resized to h x w.
Image measurement_tile(const imaging::Measurement& m, int h, int w) {
  const int f = m.shape.frames / 2;
  Image frame(m.shape.height, m.shape.width);
  std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(f) * frame.size(), frame.size(), frame.data.begin());
  frame = normalize_for_display(frame);
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out.at(r, c) = frame.at(r * frame.height / h, c * frame.width / w);
  }
  return out;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("missing " + p.string());
  return json::parse(in);
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

// Everything later stages need, loaded on demand.
class Context {
 public:
  Context(const ExperimentConfig& c, fs::path dir) : cfg_(c), dir_(std::move(dir)) {}

  const DatasetHandle& dataset() {
    if (!data_) data_ = load_idx_dataset(cfg_.dataset_path);
    return *data_;
  }

  const Splits& splits() {
    if (!splits_) {
      const json s = read_json(dir_ / "splits.json");
      if (s.at("dataset_sha256").get<std::string>() != dataset().sha256) {
        throw ConfigError("dataset changed since the simulate stage; rerun with --force");
      }
      splits_ = splits_from_indices(dataset(), s.at("paired").get<std::vector<std::size_t>>(),
                                    s.at("unpaired").get<std::vector<std::size_t>>(),
                                    s.at("test").get<std::vector<std::size_t>>(),
                                    read_measurements(dir_ / "data" / "paired_y"),
                                    read_measurements(dir_ / "data" / "test_y"));
    }
    return *splits_;
  }

  void set_splits(Splits s) { splits_ = std::move(s); }

 private:
  const ExperimentConfig& cfg_;
  fs::path dir_;
  std::optional<DatasetHandle> data_;
  std::optional<Splits> splits_;
};

models::TrainConfig train_config(const ExperimentConfig& c, const StageIterations& s, std::uint64_t salt) {
  models::TrainConfig t;
  t.iterations = s.iterations;
  t.batch_size = s.batch_size;
  t.repeats = s.repeats;
  t.adam = c.optimizer;
  t.seed = nn::derive_stream({c.seed, salt});
  return t;
}

std::vector<fs::path> stage_outputs(const ExperimentConfig& c, Stage s) {
  std::vector<fs::path> out;
  auto blob = [&](const fs::path& stem) {
    out.push_back(fs::path(stem).concat(".json"));
    out.push_back(fs::path(stem).concat(".bin"));
  };
  switch (s) {
    case Stage::simulate:
      out.push_back("config.json");
      out.push_back("splits.json");
      blob("data/paired_y");
      blob("data/test_y");
      break;
    case Stage::train_forward:
      if (c.train_proposed) {
        blob("models/forward");
        out.push_back("traces/forward.csv");
      }
      break;
    case Stage::train_inverse:
      if (c.train_proposed) {
        blob("models/inverse");
        out.push_back("traces/inverse.csv");
      }
      break;
    case Stage::train_baseline:
      for (const auto& b : c.baselines) {
        if (b == "hio") continue;
        blob("models/baseline_" + b);
        out.push_back("traces/baseline_" + b + ".csv");
      }
      break;
    case Stage::reconstruct:
      for (const auto& m : trained_methods(c)) {
        blob("recon/" + m);
        out.push_back("recon/" + m + "_grid.pgm");
      }
      if (wants_hio(c)) {
        blob("recon/hio");
        out.push_back("recon/hio_grid.pgm");
      }
      break;
    case Stage::evaluate:
      out.push_back("report.csv");
      out.push_back("summary.txt");
      out.push_back("eval.json");
      break;
  }
  return out;
}

double stage_wall_time(const fs::path& dir, Stage s) {
  const fs::path p = dir / "stamps" / (to_string(s) + ".json");
  if (!fs::exists(p)) return 0.0;
  return read_json(p).value("wall_time_s", 0.0);
}

void run_stage(Stage s, const ExperimentConfig& c, const fs::path& dir, Context& ctx, const Logger& log) {
  switch (s) {
    case Stage::simulate: {
      {
        json cj = to_json(c);
        cj.erase("output_dir");
        write_json(dir / "config.json", cj);
      }
      Splits sp = make_splits(ctx.dataset(), c.k, c.l, c.test_n, c.true_process, c.seed);
      write_json(dir / "splits.json", {{"dataset", c.dataset_path.filename().string()},
                                       {"dataset_sha256", ctx.dataset().sha256},
                                       {"test", sp.test_idx},
                                       {"paired", sp.paired_idx},
                                       {"unpaired", sp.unpaired_idx}});
      write_measurements(dir / "data" / "paired_y", sp.paired.measurements);
      write_measurements(dir / "data" / "test_y", sp.test.measurements);
      log("  K=", sp.paired.size(), " L=", sp.unpaired.size(), " test=", sp.test.size());
      ctx.set_splits(std::move(sp));
      break;
    }
    case Stage::train_forward: {
      if (!c.train_proposed) break;
      const auto& sp = ctx.splits();
      auto r = models::train_forward(sp.paired, c.lowfid, c.forward_net, train_config(c, c.forward_train, 1));
      models::save_forward(dir / "models" / "forward", r.params, {{"seed", c.seed}}, c.checkpoint_dtype);
      models::write_trace_csv(dir / "traces" / "forward.csv", r.trace);
      if (!r.trace.empty()) log("  final batch ELBO ", r.trace.back().elbo);
      break;
    }
    case Stage::train_inverse: {
      if (!c.train_proposed) break;
      const auto& sp = ctx.splits();
      const auto fm = models::load_forward(dir / "models" / "forward");
      auto r = models::train_inverse(sp.unpaired, fm, c.lowfid, c.inverse_net, train_config(c, c.inverse_train, 2));
      models::save_inverse(dir / "models" / "inverse", r.params, {{"seed", c.seed}, {"method", "proposed"}},
                           c.checkpoint_dtype);
      models::write_trace_csv(dir / "traces" / "inverse.csv", r.trace);
      if (!r.trace.empty()) log("  final batch ELBO ", r.trace.back().elbo);
      break;
    }
    case Stage::train_baseline: {
      for (const auto& b : c.baselines) {
        if (b == "hio") continue;
        const auto& sp = ctx.splits();
        baselines::BaselineConfig bc{c.inverse_net, train_config(c, c.inverse_train, 2), c.mixing};
        auto r = baselines::train_baseline_cvae(baselines::baseline_kind_from_string(b), sp.paired, sp.unpaired,
                                                c.lowfid, bc);
        models::save_inverse(dir / "models" / ("baseline_" + b), r.params, {{"seed", c.seed}, {"method", b}},
                             c.checkpoint_dtype);
        models::write_trace_csv(dir / "traces" / ("baseline_" + b + ".csv"), r.trace);
        if (!r.trace.empty()) log("  ", b, " final batch ELBO ", r.trace.back().elbo);
      }
      break;
    }
    case Stage::reconstruct: {
      const auto& sp = ctx.splits();
      const int g = std::min<int>(c.grid_examples, static_cast<int>(sp.test.size()));
      for (const auto& m : trained_methods(c)) {
        const auto inv = models::load_inverse(model_stem(dir, m));
        const auto recon = models::pseudo_max(inv, sp.test.measurements);
        write_images(dir / "recon" / m, recon);
        std::vector<std::vector<Image>> rows;
        for (int i = 0; i < g; ++i) {
          nn::RngStream rng(c.seed, nn::derive_stream({kPosteriorTag, static_cast<std::uint64_t>(i)}));
          const auto post = models::posterior_sample(inv, sp.test.measurements[i], c.posterior_samples, rng);
          std::vector<Image> row{sp.test.targets[i],
                                 measurement_tile(sp.test.measurements[i], inv.height, inv.width),
                                 recon[i].clamped(), post.mean.clamped(), normalize_for_display(post.std)};
          for (int d = 0; d < std::min(3, c.posterior_samples); ++d) row.push_back(post.samples[d].clamped());
          rows.push_back(std::move(row));
        }
        write_pgm(dir / "recon" / (m + "_grid.pgm"), tile_grid(rows));
      }
      if (wants_hio(c)) {
        std::vector<Image> recon(sp.test.size());
        auto hio = c.hio;
        hio.measurement_is_modulus = c.true_process.modulus;
        kernels::parallel::for_each_index(sp.test.size(), [&](std::size_t i) {
          nn::RngStream rng(c.seed, nn::derive_stream({kHioTag, i}));
          recon[i] = baselines::hio_best_of(sp.test.measurements[i], hio, c.hio_restarts, rng).image;
        });
        write_images(dir / "recon" / "hio", recon);
        std::vector<std::vector<Image>> rows;
        for (int i = 0; i < g; ++i) {
          Image aligned;
          eval::ncc_up_to_ambiguity(sp.test.targets[i], recon[i], &aligned);
          rows.push_back({sp.test.targets[i], measurement_tile(sp.test.measurements[i], aligned.height, aligned.width),
                          aligned});
        }
        write_pgm(dir / "recon" / "hio_grid.pgm", tile_grid(rows));
      }
      break;
    }
    case Stage::evaluate: {
      const auto& sp = ctx.splits();
      std::vector<eval::CellResult> rows;
      json ev = json::object();
      const eval::SweepCell base{"", c.task, c.k, severity_of(c), c.seed};
      for (const auto& m : trained_methods(c)) {
        const auto inv = models::load_inverse(model_stem(dir, m));
        const auto recon = read_images(dir / "recon" / m);
        std::vector<double> ps;
        for (std::size_t i = 0; i < recon.size(); ++i) ps.push_back(eval::psnr(sp.test.targets[i], recon[i]));
        const auto elbo = eval::test_elbo(inv, sp.test, nn::derive_stream({c.seed, kElboTag}), c.elbo_samples);
        eval::CellResult r;
        r.cell = base;
        r.cell.method = m;
        r.psnr_mean = eval::mean_psnr(sp.test.targets, recon);
        r.elbo_mean = elbo.mean;
        r.elbo_std = elbo.std;
        r.wall_time_s = m == "proposed"
                            ? stage_wall_time(dir, Stage::train_forward) + stage_wall_time(dir, Stage::train_inverse)
                            : stage_wall_time(dir, Stage::train_baseline);
        rows.push_back(r);
        ev[m] = {{"psnr", ps}, {"psnr_mean", r.psnr_mean}, {"elbo", elbo.values}, {"elbo_mean", elbo.mean}};
        log("  ", m, ": PSNR ", r.psnr_mean, " dB, test ELBO ", r.elbo_mean);
      }
      if (wants_hio(c)) {
        const auto recon = read_images(dir / "recon" / "hio");
        std::vector<double> ps, cc;
        for (std::size_t i = 0; i < recon.size(); ++i) {
          Image aligned;
          cc.push_back(eval::ncc_up_to_ambiguity(sp.test.targets[i], recon[i], &aligned));
          ps.push_back(eval::psnr(sp.test.targets[i], aligned));
        }
        eval::CellResult r;
        r.cell = base;
        r.cell.method = "hio";
        double s = 0.0;
        for (double p : ps) s += p;
        r.psnr_mean = s / static_cast<double>(ps.size());
        r.elbo_mean = std::nan("");
        r.elbo_std = std::nan("");
        r.wall_time_s = stage_wall_time(dir, Stage::reconstruct);
        rows.push_back(r);
        ev["hio"] = {{"psnr", ps}, {"psnr_mean", r.psnr_mean}, {"ncc", cc}};
        log("  hio: aligned PSNR ", r.psnr_mean, " dB");
      }
      eval::write_report_csv(dir / "report.csv", rows);
      std::ofstream(dir / "summary.txt") << eval::summary_table(rows);
      ev["config_fingerprint"] = fingerprint(c);
      write_json(dir / "eval.json", ev);
      break;
    }
  }
}

bool stage_done(const ExperimentConfig& c, const fs::path& dir, Stage s, const std::string& fp) {
  const fs::path stamp = dir / "stamps" / (to_string(s) + ".json");
  if (!fs::exists(stamp)) return false;
  if (read_json(stamp).value("fingerprint", "") != fp) return false;
  for (const auto& o : stage_outputs(c, s)) {
    if (!fs::exists(dir / o)) return false;
  }
  return true;
}

}  // namespace

std::string report_checksum(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot read " + csv.string());
  std::string line, canon;
  while (std::getline(in, line)) {
    const auto cut = line.rfind(',');
    canon += (cut == std::string::npos ? line : line.substr(0, cut + 1)) + '\n';
  }
  return sha256_hex({reinterpret_cast<const unsigned char*>(canon.data()), canon.size()});
}

json build_manifest(const fs::path& dir, const std::string& config_fingerprint) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dir);
    const std::string top = rel.begin()->string();
    if (top == "stamps" || top == "sweep" || rel == "manifest.json") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json list = json::array();
  for (const auto& rel : files) {
    json f = {{"path", rel.generic_string()}, {"bytes", fs::file_size(dir / rel)}};
    if (rel.filename() == "report.csv" || rel.filename() == "sweep_report.csv") {
      f["sha256"] = report_checksum(dir / rel);
      f["checksum_excludes"] = "wall_time_s";
      f.erase("bytes");
    } else {
      f["sha256"] = sha256_file(dir / rel);
    }
    list.push_back(std::move(f));
  }
  return {{"format", "mfinv-manifest"}, {"version", 1}, {"config_fingerprint", config_fingerprint}, {"files", list}};
}

PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options) {
  config.validate();
  const Logger log{options.log};
  const fs::path dir = config.output_dir;
  for (const char* sub : {"", "data", "models", "traces", "recon", "stamps"}) fs::create_directories(dir / sub);
  const std::string fp = fingerprint(config);
  Context ctx(config, dir);
  PipelineResult result{dir, {}, {}};

  for (Stage s : kAllStages) {
    if (!options.force && stage_done(config, dir, s, fp)) {
      log("[", to_string(s), "] up to date, skipping");
      result.skipped.push_back(s);
    } else {
      log("[", to_string(s), "] running");
      const auto t0 = std::chrono::steady_clock::now();
      try {
        run_stage(s, config, dir, ctx, log);
      } catch (const ConfigError& e) {
        throw ConfigError("stage " + to_string(s) + ": " + e.what());
      } catch (const NumericalError& e) {
        throw NumericalError("stage " + to_string(s) + ": " + e.what());
      } catch (const FormatError& e) {
        throw ConfigError("stage " + to_string(s) + ": " + e.what());
      } catch (const InvalidInput& e) {
        throw ConfigError("stage " + to_string(s) + ": " + e.what());
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_json(dir / "stamps" / (to_string(s) + ".json"),
                 {{"stage", to_string(s)}, {"fingerprint", fp}, {"wall_time_s", secs}});
      result.ran.push_back(s);
    }
    if (options.until && *options.until == s) break;
  }
  write_json(dir / "manifest.json", build_manifest(dir, fp));
  return result;
}

ExperimentConfig cell_config(const ExperimentConfig& base, const eval::SweepCell& cell) {
  ExperimentConfig c = base;
  c.seed = cell.seed;
  c.k = cell.k;
  c.train_proposed = cell.method == "proposed";
  c.baselines.clear();
  if (!c.train_proposed) c.baselines.push_back(cell.method);
  auto& t = c.true_process;
  auto& lf = c.lowfid;
  switch (t.kind) {
    case imaging::DegradationKind::blur: {
      const double ratio = t.sigma_psf > 0.0 ? lf.sigma_psf / t.sigma_psf : 1.0;
      t.sigma_psf = cell.severity;
      lf.sigma_psf = ratio * cell.severity;
      break;
    }
    case imaging::DegradationKind::downsample:
      t.factor = lf.factor = static_cast<int>(std::lround(cell.severity));
      break;
    case imaging::DegradationKind::fourier_intensity:
      t.saturation_frac = lf.saturation_frac = cell.severity;
      break;
    case imaging::DegradationKind::diffusion:
      t.keep_frames = lf.keep_frames = static_cast<int>(std::lround(cell.severity));
      break;
    case imaging::DegradationKind::occlude:
      throw ConfigError("severity sweeps are not defined for the occlude task");
  }
  std::ostringstream name;
  name << cell.method << "_K" << cell.k << "_s" << cell.severity << "_seed" << cell.seed;
  c.output_dir = base.output_dir / "sweep" / name.str();
  return c;
}

std::vector<eval::CellResult> run_sweep(const ExperimentConfig& config, const PipelineOptions& options) {
  config.validate();
  const auto& sw = config.sweep;
  const std::vector<double> sev = sw.severities.empty() ? std::vector<double>{severity_of(config)} : sw.severities;
  const std::vector<int> ks = sw.ks.empty() ? std::vector<int>{config.k} : sw.ks;
  const auto cells = eval::make_cells(config.task, sw.methods, sev, ks, sw.seeds);
  PipelineOptions cell_opts = options;
  cell_opts.until.reset();
  auto rows = eval::severity_sweep(cells, [&](const eval::SweepCell& cell) {
    const ExperimentConfig cc = cell_config(config, cell);
    run_pipeline(cc, cell_opts);
    for (const auto& r : eval::read_report_csv(cc.output_dir / "report.csv")) {
      if (r.cell.method == cell.method) return r;
    }
    throw ConfigError("sweep cell produced no row for " + cell.method);
  });
  fs::create_directories(config.output_dir);
  eval::write_report_csv(config.output_dir / "sweep_report.csv", rows);
  std::ofstream(config.output_dir / "sweep_summary.txt") << eval::summary_table(rows);
  return rows;
}

}  // namespace mfinv::harness
