#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mfinv/models/inverse_vici.hpp"

namespace mfinv::eval {

using imaging::Image;

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE), capped at 99 dB when MSE < 1e-10.
double psnr(const Image& x, const Image& xhat);
double mean_psnr(const std::vector<Image>& xs, const std::vector<Image>& xhats);

/// Zero-mean normalized cross-correlation.
double ncc(const Image& a, const Image& b);

/// Best NCC of `estimate` against `truth` over circular translations and the
/// 180-degree flip (the trivial ambiguities of Fourier-modulus data). The
/// aligned estimate is returned through `aligned` when non-null.
double ncc_up_to_ambiguity(const Image& truth, const Image& estimate, Image* aligned = nullptr);

struct ElboEstimate {
  std::vector<double> values;  // one per test example
  double mean = 0.0;
  double std = 0.0;  // across examples
};

/// Held-out ELBO of the inverse model on true-process pairs, averaging
/// `samples` latent draws per example. Throws InvalidInput on an empty set.
ElboEstimate test_elbo(const models::InverseModelParams& p, const models::PairedDataset& test, std::uint64_t seed,
                       int samples = 1);

struct SeedSpread {
  double mean = 0.0;
  double std = 0.0;  // population std across seeds
};
/// Mean test ELBO and its spread across independently trained checkpoints.
SeedSpread test_elbo_across_seeds(const std::vector<models::InverseModelParams>& checkpoints,
                                  const models::PairedDataset& test, std::uint64_t seed, int samples = 1);

struct SweepCell {
  std::string method;
  std::string task;
  int k = 0;
  double severity = 0.0;
  std::uint64_t seed = 0;
};

struct CellResult {
  SweepCell cell;
  double psnr_mean = 0.0;
  double elbo_mean = 0.0;
  double elbo_std = 0.0;  // across test examples within the cell
  double wall_time_s = 0.0;
};

using CellRunner = std::function<CellResult(const SweepCell&)>;

/// Runs every cell (in parallel; each cell must derive its randomness from
/// its own fields only) and returns results in the input order.
std::vector<CellResult> severity_sweep(const std::vector<SweepCell>& cells, const CellRunner& run);

/// Cartesian product methods x severities x ks x seeds.
std::vector<SweepCell> make_cells(const std::string& task, const std::vector<std::string>& methods,
                                  const std::vector<double>& severities, const std::vector<int>& ks,
                                  const std::vector<std::uint64_t>& seeds);

/// CSV with header method,task,K,severity,seed,psnr_mean,elbo_mean,elbo_std,wall_time_s.
void write_report_csv(const std::filesystem::path& path, const std::vector<CellResult>& rows);
std::vector<CellResult> read_report_csv(const std::filesystem::path& path);

/// Plain-text table of per-(method, K, severity) means with the across-seed
/// spread of the ELBO.
std::string summary_table(const std::vector<CellResult>& rows);

}  // namespace mfinv::eval
