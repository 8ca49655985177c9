#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mfinv/imaging/image.hpp"
#include "mfinv/kernels/kernels.hpp"

namespace mfinv::nn {
class RngStream;
}

namespace mfinv::diffusion {

using imaging::Image;

/// Optical properties of a homogeneous scattering slab. Lengths in cm, times
/// in ps.
struct MediumSpec {
  double mu_a = 0.09;            // absorption, 1/cm
  double mu_s = 16.5;            // scattering, 1/cm
  double c = 0.0214;             // speed of light in the medium, cm/ps
  double slab_thickness = 2.5;   // source-to-object and object-to-exit distance, cm
  double object_absorption_factor = 100.0;  // object cells get factor * mu_a

  /// 1 / (3 (mu_a + mu_s)), cm.
  double diffusion_length() const { return 1.0 / (3.0 * (mu_a + mu_s)); }
  void validate() const;

  friend bool operator==(const MediumSpec&, const MediumSpec&) = default;
};

/// Time gating and pixel layout of the simulated camera. Video pixels share
/// the object's lateral grid.
struct VideoSpec {
  int frames = 15;
  double frame_period = 55.0;   // ps
  double start_time = 1500.0;   // time of frame 0 after the pulse, ps
  double pixel_pitch = 0.25;    // cm
  double source_sigma = 0.0;    // Gaussian illumination width on the entry face, cm; 0 = point
  int time_substeps = 5;        // quadrature steps per frame period (analytic model)

  void validate() const;
  friend bool operator==(const VideoSpec&, const VideoSpec&) = default;
};

struct ToFVideo {
  int frames = 0;
  double frame_period = 0.0;
  int height = 0;
  int width = 0;
  double pixel_pitch = 0.0;
  double background_peak = 0.0;  // max of the object-free video, for normalization
  std::vector<double> data;  // frame-major, then row-major pixels

  double at(int frame, int row, int col) const {
    return data[(static_cast<std::size_t>(frame) * height + row) * width + col];
  }
  /// Keeps only the first `f` frames.
  ToFVideo first_frames(int f) const;
};

/// Explicit finite-difference grid. dx is the cell size (cm), dt the time step
/// (ps). ny == 1 selects a 2-D (x, z) slice.
struct GridSpec {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  double dx = 0.0;
  double dt = 0.0;

  /// Throws InvalidInput unless dt <= dx^2 / (2 dim D c).
  void validate(const MediumSpec& medium) const;
  int dims() const { return ny > 1 ? 3 : 2; }
  /// Largest stable dt for this grid spacing.
  static double max_stable_dt(double dx, int dims, const MediumSpec& medium);
};

/// Infinite-medium photon fluence rate at distance r (cm), time `elapsed` (ps)
/// after a unit impulse:
///   c / (4 pi D c t)^{3/2} * exp(-r^2 / (4 D c t)) * exp(-mu_a c t).
double diffusion_psf(double r, double elapsed, const MediumSpec& medium);

/// Photon density (fluence rate / c). Its spatial integral is exp(-mu_a c t).
double photon_density(double r, double elapsed, const MediumSpec& medium);

/// Linear two-convolution estimate of the background-subtracted video.
///
/// Stage one propagates the entry-face pulse to the object plane, stage two
/// propagates the object-masked field to the exit face. The model is linear in
/// the object, so it is precomputed as a dense (frames*h*w x h*w) operator.
class LowFidTofOperator {
 public:
  LowFidTofOperator(int height, int width, const MediumSpec& medium, const VideoSpec& video);

  ToFVideo apply(const Image& object) const;
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int frames() const noexcept { return video_.frames; }
  /// Column for one object pixel: the video produced by a unit absorber there.
  std::span<const double> column(int pixel) const;
  /// Maximum of the object-free (all-transmitting) video.
  double background_peak() const noexcept { return background_peak_; }

 private:
  int height_;
  int width_;
  MediumSpec medium_;
  VideoSpec video_;
  std::vector<double> op_;  // column-major, rows = frames*h*w
  double background_peak_ = 0.0;
};

/// Convenience wrapper building the operator for `object`'s size (cached).
ToFVideo lowfid_tof(const Image& object, const MediumSpec& medium, const VideoSpec& video);

/// Explicit-Euler solver of c^-1 dPhi/dt + mu_a Phi - D lap Phi = S with
/// Phi = 0 outside the grid. Absorption is applied as an exact per-step decay
/// factor exp(-mu_a c dt) after the diffusion update.
class FdSolver {
 public:
  FdSolver(GridSpec grid, const MediumSpec& medium, bool use_parallel = true);

  const GridSpec& grid() const noexcept { return grid_; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * grid_.ny + j) * grid_.nx + i;
  }
  /// Absorption coefficient per cell, 1/cm (defaults to the medium value).
  void set_absorption(std::size_t cell, double mu_a);
  /// Adds an instantaneous unit-photon impulse into one cell (Phi += c / dV).
  void add_impulse(int i, int j, int k, double photons = 1.0);

  void step();
  double time() const noexcept { return time_; }
  std::int64_t steps_taken() const noexcept { return steps_; }
  std::span<const double> field() const noexcept { return phi_; }
  double value(int i, int j, int k) const { return phi_[index(i, j, k)]; }
  /// Sum of Phi / c * dV over all cells.
  double total_photons() const;

 private:
  GridSpec grid_;
  MediumSpec medium_;
  bool parallel_;
  kernels::StencilGeometry geom_;
  std::vector<double> phi_;
  std::vector<double> next_;
  std::vector<double> decay_;
  double time_ = 0.0;
  std::int64_t steps_ = 0;
};

/// High-fidelity video: runs the solver with and without the object (object
/// cells at `object_absorption_factor * mu_a`) and returns background minus
/// object-present exit-face fluence, averaged over each frame's gate. The
/// object occupies the mid-depth layer; lateral cells match object pixels.
ToFVideo fd_solve(const Image& object, const MediumSpec& medium, const GridSpec& grid, const VideoSpec& video);

/// Grid for fd_solve on an h x w object: lateral cell = pixel pitch, `margin`
/// extra cells on each side, depth 2 * slab_thickness, dt at `stability_fraction`
/// of the bound.
GridSpec default_grid(int height, int width, const MediumSpec& medium, const VideoSpec& video, int margin = 4,
                      double stability_fraction = 0.9);

struct DiffusionDataset {
  std::vector<Image> paired_targets;
  std::vector<ToFVideo> paired_videos;
  std::vector<Image> unpaired_targets;
};

/// Runs fd_solve (plus additive noise at snr_db, if given) on the first
/// k_highfid objects; the rest stay unpaired. Videos keep the first
/// `keep_frames` frames.
DiffusionDataset make_diffusion_dataset(const std::vector<Image>& objects, const MediumSpec& medium,
                                        const GridSpec& grid, const VideoSpec& video, std::size_t k_highfid,
                                        int keep_frames, double snr_db, nn::RngStream& rng);

}  // namespace mfinv::diffusion
