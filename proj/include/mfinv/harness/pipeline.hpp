#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfinv/eval/metrics.hpp"
#include "mfinv/harness/config.hpp"

namespace mfinv::harness {

enum class Stage { simulate, train_forward, train_inverse, train_baseline, reconstruct, evaluate };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
inline constexpr Stage kAllStages[] = {Stage::simulate,       Stage::train_forward, Stage::train_inverse,
                                       Stage::train_baseline, Stage::reconstruct,   Stage::evaluate};

struct PipelineOptions {
  bool force = false;
  std::optional<Stage> until;  // run stages up to and including this one
  std::ostream* log = nullptr;
};

struct PipelineResult {
  std::filesystem::path dir;
  std::vector<Stage> ran;
  std::vector<Stage> skipped;
};

/// Runs the stages in order inside config.output_dir. A stage is skipped
/// when its stamp carries the current config fingerprint and all of its
/// outputs exist (unless options.force). Rewrites manifest.json at the end.
/// Failures are rethrown prefixed with the stage name; finished outputs stay.
PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options = {});

/// Lists every output file (excluding stamps/) with its size and SHA-256.
/// report.csv is hashed with its wall_time_s column blanked.
nlohmann::json build_manifest(const std::filesystem::path& dir, const std::string& config_fingerprint);

/// SHA-256 of a report CSV with the wall_time_s column emptied.
std::string report_checksum(const std::filesystem::path& csv);

/// The task's severity knob: sigma_psf (blur), factor (downsample),
/// occluded fraction (occlude), saturation_frac (fourier), keep_frames
/// (diffusion).
double severity_of(const ExperimentConfig& c);

/// Config for one sweep cell: K and true severity replaced, lowfid severity
/// scaled by the configured lowfid/true ratio, methods restricted to one.
ExperimentConfig cell_config(const ExperimentConfig& base, const eval::SweepCell& cell);

/// Runs config.sweep as independent pipeline runs under output_dir/sweep and
/// writes output_dir/sweep_report.csv plus sweep_summary.txt.
std::vector<eval::CellResult> run_sweep(const ExperimentConfig& config, const PipelineOptions& options = {});

}  // namespace mfinv::harness
