#include "mfinv/diffusion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "mfinv/errors.hpp"
#include "mfinv/imaging/degradations.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::diffusion {

void MediumSpec::validate() const {
  if (!(mu_a >= 0.0)) throw InvalidInput("mu_a must be non-negative");
  if (!(mu_s > 0.0)) throw InvalidInput("mu_s must be positive");
  if (!(c > 0.0)) throw InvalidInput("speed of light must be positive");
  if (!(slab_thickness > 0.0)) throw InvalidInput("slab thickness must be positive");
  if (!(object_absorption_factor >= 1.0)) throw InvalidInput("object absorption factor must be >= 1");
}

void VideoSpec::validate() const {
  if (frames < 1) throw InvalidInput("video needs at least one frame");
  if (!(frame_period > 0.0) || !(start_time >= 0.0)) throw InvalidInput("invalid video timing");
  if (!(pixel_pitch > 0.0)) throw InvalidInput("pixel pitch must be positive");
  if (source_sigma < 0.0) throw InvalidInput("source width must be non-negative");
  if (time_substeps < 1) throw InvalidInput("time_substeps must be >= 1");
}

ToFVideo ToFVideo::first_frames(int f) const {
  if (f < 0 || f > frames) throw InvalidInput("cannot keep " + std::to_string(f) + " of " + std::to_string(frames) + " frames");
  ToFVideo out = *this;
  out.frames = f;
  out.data.resize(static_cast<std::size_t>(f) * height * width);
  return out;
}

double GridSpec::max_stable_dt(double dx, int dims, const MediumSpec& medium) {
  return dx * dx / (2.0 * dims * medium.diffusion_length() * medium.c);
}

void GridSpec::validate(const MediumSpec& medium) const {
  if (nx < 1 || ny < 1 || nz < 1) throw InvalidInput("grid dimensions must be positive");
  if (!(dx > 0.0) || !(dt > 0.0)) throw InvalidInput("grid spacing and time step must be positive");
  const double limit = max_stable_dt(dx, dims(), medium);
  if (dt > limit) {
    throw InvalidInput("unstable grid: dt = " + std::to_string(dt) + " ps exceeds dx^2/(2 dim D c) = " +
                       std::to_string(limit) + " ps");
  }
}

double diffusion_psf(double r, double elapsed, const MediumSpec& medium) {
  if (!(elapsed > 0.0)) throw InvalidInput("diffusion_psf needs elapsed time > 0");
  const double dct = medium.diffusion_length() * medium.c * elapsed;
  return medium.c / std::pow(4.0 * std::numbers::pi * dct, 1.5) * std::exp(-r * r / (4.0 * dct)) *
         std::exp(-medium.mu_a * medium.c * elapsed);
}

double photon_density(double r, double elapsed, const MediumSpec& medium) {
  return diffusion_psf(r, elapsed, medium) / medium.c;
}

// ---------------------------------------------------------------------------
// Analytic two-convolution model

LowFidTofOperator::LowFidTofOperator(int height, int width, const MediumSpec& medium, const VideoSpec& video)
    : height_(height), width_(width), medium_(medium), video_(video) {
  medium.validate();
  video.validate();
  if (height < 1 || width < 1) throw InvalidInput("object must be non-empty");
  const int n = height * width;
  const int frames = video.frames;
  const std::size_t rows = static_cast<std::size_t>(frames) * n;
  op_.assign(rows * n, 0.0);

  const double pitch = video.pixel_pitch;
  const double depth = medium.slab_thickness;
  const double dct_unit = medium.diffusion_length() * medium.c;
  auto xpos = [&](int c) { return (c - 0.5 * (width - 1)) * pitch; };
  auto ypos = [&](int r) { return (r - 0.5 * (height - 1)) * pitch; };

  // Illumination weights on the entry face (same lateral grid), or a point.
  std::vector<double> src_w;
  if (video.source_sigma > 0.0) {
    src_w.resize(n);
    double sum = 0.0;
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double rho2 = xpos(c) * xpos(c) + ypos(r) * ypos(r);
        src_w[r * width + c] = std::exp(-0.5 * rho2 / (video.source_sigma * video.source_sigma));
        sum += src_w[r * width + c];
      }
    }
    for (auto& w : src_w) w /= sum;
  }

  const double dtau = video.frame_period / video.time_substeps;
  const double last_time = video.start_time + (frames - 1) * video.frame_period;
  const int n_tau = static_cast<int>(std::floor(last_time / dtau));

  // Stage one: field at each object pixel at quadrature times tau_m.
  std::vector<double> stage1(static_cast<std::size_t>(n) * std::max(n_tau, 1), 0.0);
  for (int m = 0; m < n_tau; ++m) {
    const double tau = (m + 0.5) * dtau;
    for (int p = 0; p < n; ++p) {
      const double px = xpos(p % width);
      const double py = ypos(p / width);
      double v = 0.0;
      if (src_w.empty()) {
        v = diffusion_psf(std::sqrt(px * px + py * py + depth * depth), tau, medium);
      } else {
        for (int q = 0; q < n; ++q) {
          const double dx = px - xpos(q % width);
          const double dy = py - ypos(q / width);
          v += src_w[q] * diffusion_psf(std::sqrt(dx * dx + dy * dy + depth * depth), tau, medium);
        }
      }
      stage1[static_cast<std::size_t>(m) * n + p] = v;
    }
  }

  // Stage two: separable lateral factors of the second PSF for each lag.
  std::vector<double> ex(width), ey(height);
  for (int f = 0; f < frames; ++f) {
    const double tf = video.start_time + f * video.frame_period;
    const int m_end = static_cast<int>(std::floor(tf / dtau));
    for (int m = 0; m < m_end; ++m) {
      const double lag = tf - (m + 0.5) * dtau;
      const double four_dct = 4.0 * dct_unit * lag;
      const double coef = pitch * pitch * dtau * diffusion_psf(depth, lag, medium);
      for (int d = 0; d < width; ++d) ex[d] = std::exp(-(d * pitch) * (d * pitch) / four_dct);
      for (int d = 0; d < height; ++d) ey[d] = std::exp(-(d * pitch) * (d * pitch) / four_dct);
      for (int p = 0; p < n; ++p) {
        const double s = coef * stage1[static_cast<std::size_t>(m) * n + p];
        if (s == 0.0) continue;
        const int pr = p / width;
        const int pc = p % width;
        double* col = op_.data() + static_cast<std::size_t>(p) * rows + static_cast<std::size_t>(f) * n;
        for (int er = 0; er < height; ++er) {
          const double sy = s * ey[std::abs(er - pr)];
          for (int ec = 0; ec < width; ++ec) col[er * width + ec] += sy * ex[std::abs(ec - pc)];
        }
      }
    }
  }

  std::vector<double> bg(rows, 0.0);
  for (int p = 0; p < n; ++p) {
    const double* col = op_.data() + static_cast<std::size_t>(p) * rows;
    for (std::size_t i = 0; i < rows; ++i) bg[i] += col[i];
  }
  background_peak_ = *std::max_element(bg.begin(), bg.end());
}

std::span<const double> LowFidTofOperator::column(int pixel) const {
  const std::size_t rows = static_cast<std::size_t>(video_.frames) * height_ * width_;
  return {op_.data() + static_cast<std::size_t>(pixel) * rows, rows};
}

ToFVideo LowFidTofOperator::apply(const Image& object) const {
  if (object.height != height_ || object.width != width_) throw InvalidInput("object grid does not match the operator");
  const int n = height_ * width_;
  const std::size_t rows = static_cast<std::size_t>(video_.frames) * n;
  ToFVideo v{video_.frames, video_.frame_period, height_, width_, video_.pixel_pitch, background_peak_,
             std::vector<double>(rows, 0.0)};
  for (int p = 0; p < n; ++p) {
    const double a = object.data[p];
    if (a == 0.0) continue;
    const double* col = op_.data() + static_cast<std::size_t>(p) * rows;
    for (std::size_t i = 0; i < rows; ++i) v.data[i] += a * col[i];
  }
  return v;
}

ToFVideo lowfid_tof(const Image& object, const MediumSpec& medium, const VideoSpec& video) {
  using Key = std::tuple<int, int, double, double, double, double, double, double, double, double, double, int, int>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const LowFidTofOperator>> cache;
  const Key key{object.height,     object.width,       medium.mu_a,        medium.mu_s,
                medium.c,          medium.slab_thickness, video.frame_period, video.start_time,
                video.pixel_pitch, video.source_sigma, medium.object_absorption_factor, video.frames,
                video.time_substeps};
  std::shared_ptr<const LowFidTofOperator> op;
  {
    std::lock_guard lock(mutex);
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, std::make_shared<LowFidTofOperator>(object.height, object.width, medium, video)).first;
    }
    op = it->second;
  }
  return op->apply(object);
}

// ---------------------------------------------------------------------------
// Finite-difference solver

FdSolver::FdSolver(GridSpec grid, const MediumSpec& medium, bool use_parallel)
    : grid_(grid), medium_(medium), parallel_(use_parallel) {
  medium.validate();
  grid.validate(medium);
  geom_ = {grid.nx, grid.ny, grid.nz, medium.c * medium.diffusion_length() * grid.dt / (grid.dx * grid.dx)};
  phi_.assign(geom_.cells(), 0.0);
  next_.assign(geom_.cells(), 0.0);
  decay_.assign(geom_.cells(), std::exp(-medium.mu_a * medium.c * grid.dt));
}

void FdSolver::set_absorption(std::size_t cell, double mu_a) {
  if (cell >= decay_.size()) throw InvalidInput("cell index out of range");
  if (!(mu_a >= 0.0)) throw InvalidInput("absorption must be non-negative");
  decay_[cell] = std::exp(-mu_a * medium_.c * grid_.dt);
}

void FdSolver::add_impulse(int i, int j, int k, double photons) {
  if (i < 0 || i >= grid_.nx || j < 0 || j >= grid_.ny || k < 0 || k >= grid_.nz) throw InvalidInput("impulse outside grid");
  const double dv = grid_.dims() == 3 ? grid_.dx * grid_.dx * grid_.dx : grid_.dx * grid_.dx;
  phi_[index(i, j, k)] += medium_.c * photons / dv;
}

void FdSolver::step() {
  if (parallel_) {
    kernels::parallel::diffusion_step(geom_, phi_, decay_, next_);
  } else {
    kernels::serial::diffusion_step(geom_, phi_, decay_, next_);
  }
  phi_.swap(next_);
  time_ += grid_.dt;
  ++steps_;
}

double FdSolver::total_photons() const {
  const double dv = grid_.dims() == 3 ? grid_.dx * grid_.dx * grid_.dx : grid_.dx * grid_.dx;
  double s = 0.0;
  for (double v : phi_) s += v;
  return s * dv / medium_.c;
}

GridSpec default_grid(int height, int width, const MediumSpec& medium, const VideoSpec& video, int margin,
                      double stability_fraction) {
  GridSpec g;
  g.dx = video.pixel_pitch;
  g.nx = width + 2 * margin;
  g.ny = height == 1 ? 1 : height + 2 * margin;
  g.nz = static_cast<int>(std::lround(2.0 * medium.slab_thickness / g.dx)) + 1;
  g.dt = std::min(stability_fraction * GridSpec::max_stable_dt(g.dx, g.dims(), medium), 0.5 * video.frame_period);
  return g;
}

namespace {

// Runs one simulation and returns the gated exit-face video.
std::vector<double> simulate_exit_video(const Image* object, const MediumSpec& medium, const GridSpec& grid,
                                        const VideoSpec& video, int height, int width) {
  FdSolver solver(grid, medium);
  const int off_x = (grid.nx - width) / 2;
  const int off_y = grid.ny == 1 ? 0 : (grid.ny - height) / 2;
  const int k_obj = static_cast<int>(std::lround(medium.slab_thickness / grid.dx));
  const int k_exit = grid.nz - 1;
  if (object != nullptr) {
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double a = object->at(r, c);
        if (a == 0.0) continue;
        const double mu = medium.mu_a * (1.0 + a * (medium.object_absorption_factor - 1.0));
        solver.set_absorption(solver.index(off_x + c, off_y + r, k_obj), mu);
      }
    }
  }
  // Entry-face pulse at t = 0.
  const int cx = grid.nx / 2;
  const int cy = grid.ny / 2;
  if (video.source_sigma > 0.0) {
    double sum = 0.0;
    std::vector<double> w(static_cast<std::size_t>(grid.nx) * grid.ny);
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) {
        const double dx = (i - cx) * grid.dx;
        const double dy = grid.ny == 1 ? 0.0 : (j - cy) * grid.dx;
        w[j * grid.nx + i] = std::exp(-0.5 * (dx * dx + dy * dy) / (video.source_sigma * video.source_sigma));
        sum += w[j * grid.nx + i];
      }
    }
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) solver.add_impulse(i, j, 0, w[j * grid.nx + i] / sum);
    }
  } else {
    solver.add_impulse(cx, cy, 0);
  }

  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<double> out(static_cast<std::size_t>(video.frames) * n, 0.0);
  std::vector<int> counts(video.frames, 0);
  const double end_time = video.start_time + video.frames * video.frame_period;
  while (solver.time() < end_time) {
    solver.step();
    const double t = solver.time();
    const int f = static_cast<int>(std::floor((t - video.start_time) / video.frame_period));
    if (t < video.start_time || f < 0 || f >= video.frames) continue;
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        out[f * n + static_cast<std::size_t>(r) * width + c] += solver.value(off_x + c, off_y + r, k_exit);
      }
    }
    ++counts[f];
    for (double v : solver.field().subspan(0, std::min<std::size_t>(4, solver.field().size()))) {
      if (!std::isfinite(v)) {
        throw NumericalError("non-finite fluence at step " + std::to_string(solver.steps_taken()) +
                             " (t = " + std::to_string(t) + " ps)");
      }
    }
  }
  for (int f = 0; f < video.frames; ++f) {
    if (counts[f] == 0) throw InvalidInput("time step too coarse: frame " + std::to_string(f) + " received no samples");
    for (std::size_t i = 0; i < n; ++i) out[f * n + i] /= counts[f];
  }
  return out;
}

}  // namespace

ToFVideo fd_solve(const Image& object, const MediumSpec& medium, const GridSpec& grid, const VideoSpec& video) {
  medium.validate();
  video.validate();
  grid.validate(medium);
  if (object.width > grid.nx || (grid.ny == 1 ? object.height != 1 : object.height > grid.ny)) {
    throw InvalidInput("object does not fit the finite-difference grid");
  }
  const auto background = simulate_exit_video(nullptr, medium, grid, video, object.height, object.width);
  const auto with_object = simulate_exit_video(&object, medium, grid, video, object.height, object.width);
  for (double v : with_object) {
    if (!std::isfinite(v)) throw NumericalError("finite-difference solve produced non-finite fluence");
  }
  ToFVideo out{video.frames, video.frame_period, object.height, object.width, video.pixel_pitch,
               *std::max_element(background.begin(), background.end()),
               std::vector<double>(background.size())};
  for (std::size_t i = 0; i < background.size(); ++i) out.data[i] = background[i] - with_object[i];
  return out;
}

DiffusionDataset make_diffusion_dataset(const std::vector<Image>& objects, const MediumSpec& medium,
                                        const GridSpec& grid, const VideoSpec& video, std::size_t k_highfid,
                                        int keep_frames, double snr_db, nn::RngStream& rng) {
  if (k_highfid > objects.size()) throw InvalidInput("k_highfid exceeds the number of objects");
  if (keep_frames < 1 || keep_frames > video.frames) throw InvalidInput("keep_frames must lie in [1, video.frames]");
  DiffusionDataset ds;
  ds.paired_targets.assign(objects.begin(), objects.begin() + static_cast<std::ptrdiff_t>(k_highfid));
  ds.unpaired_targets.assign(objects.begin() + static_cast<std::ptrdiff_t>(k_highfid), objects.end());
  ds.paired_videos.resize(k_highfid);
  kernels::parallel::for_each_index(k_highfid, [&](std::size_t i) {
    ToFVideo v = fd_solve(objects[i], medium, grid, video).first_frames(keep_frames);
    imaging::Measurement m({v.frames, v.height, v.width}, v.data);
    auto noise_rng = rng.fork(i);
    m = imaging::add_noise(m, std::isfinite(snr_db) ? std::optional<double>(snr_db) : std::nullopt, noise_rng);
    v.data = std::move(m.data);
    ds.paired_videos[i] = std::move(v);
  });
  return ds;
}

}  // namespace mfinv::diffusion
