#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfinv/baselines/baselines.hpp"
#include "mfinv/imaging/degradations.hpp"
#include "mfinv/models/forward_mf.hpp"
#include "mfinv/nn/checkpoint.hpp"

namespace mfinv::harness {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kEnvPrefix = "MFINV_CFG_";

struct StageIterations {
  std::int64_t iterations = 20000;
  int batch_size = 64;
  int repeats = 1;

  friend bool operator==(const StageIterations&, const StageIterations&) = default;
};

struct SweepConfig {
  std::vector<std::string> methods{"proposed", "paired_only"};
  std::vector<double> severities;  // replaces the true sigma_psf; lowfid keeps its ratio
  std::vector<int> ks;             // replaces dataset.k
  std::vector<std::uint64_t> seeds{0};

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string task = "blur";

  std::filesystem::path dataset_path = "data/mnist10k-images-idx3-ubyte.gz";
  int k = 200;       // paired examples
  int l = 9600;      // unpaired targets
  int test_n = 200;  // held-out true-process pairs

  imaging::DegradationSpec true_process;
  imaging::DegradationSpec lowfid;

  models::NetConfig forward_net;
  models::NetConfig inverse_net;
  nn::AdamConfig optimizer;
  StageIterations forward_train;
  StageIterations inverse_train;

  bool train_proposed = true;  // forward + inverse models
  std::vector<std::string> baselines{"paired_only"};
  baselines::MixingRule mixing = baselines::MixingRule::proportional;
  baselines::HioConfig hio;
  int hio_restarts = 10;

  int posterior_samples = 20;
  int elbo_samples = 1;
  int grid_examples = 8;

  SweepConfig sweep;

  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  nn::DType checkpoint_dtype = nn::DType::f64;

  /// Throws ConfigError describing the first violated invariant. Path
  /// existence is checked only when `check_paths` is set.
  void validate(bool check_paths = true) const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const imaging::DegradationSpec& s);
imaging::DegradationSpec degradation_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Applies MFINV_CFG_<path> variables to a config document. Path segments
/// are separated by "__" (e.g. MFINV_CFG_forward_train__iterations=100).
/// Values parse as JSON when possible and as plain strings otherwise.
void apply_env_overrides(nlohmann::json& j, char** envp);

/// Reads the file (or starts from the named reference config when `path` is
/// empty), applies environment overrides, parses and validates.
ExperimentConfig load_config(const std::filesystem::path& path, char** envp = nullptr, bool check_paths = true,
                             const std::string& preset = "blur");
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

/// SHA-256 of the canonical JSON dump, excluding output_dir.
std::string fingerprint(const ExperimentConfig& c);

/// Reference configuration for the 28x28 blur task.
ExperimentConfig blur_reference_config();

/// Phase-retrieval task: saturated Fourier intensity, camera blur of the
/// pattern and 30 dB noise; the lowfid model omits blur and noise. Trains
/// the proposed model and runs HIO on the test set.
ExperimentConfig fourier_reference_config();

/// "blur" or "fourier"; ConfigError otherwise.
ExperimentConfig reference_config(const std::string& name);

}  // namespace mfinv::harness
