// Command-line driver for the multi-fidelity inversion pipeline.

#include <CLI11.hpp>

#include <iostream>

#include "mfinv/errors.hpp"
#include "mfinv/harness/config.hpp"
#include "mfinv/harness/pipeline.hpp"
#include "mfinv/kernels/kernels.hpp"

extern char** environ;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace mfinv;

  CLI::App app{"Multi-fidelity forward models and variational inversion"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string preset = "blur";
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
  int threads = 0;
  bool fourier_modulus = false;
  bool dump_config = false;
  app.add_option("--config", config_path, "experiment config (JSON); defaults to the blur reference config");
  app.add_option("--preset", preset, "reference config used when --config is absent (blur, fourier)");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "override the output directory");
  app.add_flag("--force", force, "rerun stages even when their outputs are up to date");
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");
  app.add_flag("--fourier-modulus", fourier_modulus, "observe |F x| instead of |F x|^2 for Fourier tasks");
  app.add_flag("--dump-config", dump_config, "print the resolved config and exit");

  const std::pair<const char*, const char*> stage_cmds[] = {
      {"simulate", "build splits and true-process measurements"},
      {"train-forward", "train the multi-fidelity forward model"},
      {"train-inverse", "train the inverse model on forward-model samples"},
      {"train-baseline", "train the configured baseline models"},
      {"reconstruct", "pseudo-maximum reconstructions and image grids"},
      {"evaluate", "PSNR / test ELBO report"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : stage_cmds) subs.push_back(app.add_subcommand(name, help));
  CLI::App* run_all = app.add_subcommand("run", "run every stage");
  CLI::App* sweep = app.add_subcommand("sweep", "run the configured severity / K / seed sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    kernels::set_thread_count(threads);
    harness::ExperimentConfig cfg = harness::load_config(config_path, environ, false, preset);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (fourier_modulus) {
      cfg.true_process.modulus = true;
      cfg.lowfid.modulus = true;
    }
    if (dump_config) {
      std::cout << harness::to_json(cfg).dump(2) << '\n';
      return 0;
    }
    cfg.validate(true);

    harness::PipelineOptions opts;
    opts.force = force;
    opts.log = &std::clog;
    if (sweep->parsed()) {
      harness::run_sweep(cfg, opts);
      std::cout << "sweep report: " << (cfg.output_dir / "sweep_report.csv").string() << '\n';
      return 0;
    }
    if (!run_all->parsed()) {
      for (std::size_t i = 0; i < subs.size(); ++i) {
        if (subs[i]->parsed()) opts.until = harness::kAllStages[i];
      }
    }
    const auto r = harness::run_pipeline(cfg, opts);
    std::cout << "outputs: " << r.dir.string() << " (" << r.ran.size() << " stages ran, " << r.skipped.size()
              << " skipped)\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  }
}
