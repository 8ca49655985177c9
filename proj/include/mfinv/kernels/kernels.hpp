#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference in
// `serial` and an OpenMP version in `parallel` with identical results: each
// output element is written by exactly one iteration and reductions are
// never split across threads, so outputs are bitwise equal.

#include <cstddef>
#include <functional>
#include <span>

namespace mfinv::kernels {

/// Geometry of an explicit 7-point (or 5-point when ny == 1) diffusion step.
///
/// Cells are stored x-fastest: index = (k * ny + j) * nx + i. Neighbours
/// outside the grid are zero (Dirichlet).
struct StencilGeometry {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  double lap_coef = 0.0;  // c * D * dt / dx^2

  std::size_t cells() const { return static_cast<std::size_t>(nx) * ny * nz; }
};

namespace serial {

/// Zero-padded separable convolution of an h x w row-major image with a
/// centered odd-length kernel applied along rows and then columns.
void separable_conv2d(std::span<const double> in, int h, int w, std::span<const double> kernel,
                      std::span<double> out);

/// out = decay * (phi + lap_coef * laplacian(phi)); decay is per cell.
void diffusion_step(const StencilGeometry& g, std::span<const double> phi, std::span<const double> decay,
                    std::span<double> out);

/// Calls fn(i) for i in [0, n).
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace serial

namespace parallel {

void separable_conv2d(std::span<const double> in, int h, int w, std::span<const double> kernel,
                      std::span<double> out);

void diffusion_step(const StencilGeometry& g, std::span<const double> phi, std::span<const double> decay,
                    std::span<double> out);

/// Parallel loop over independent items (batch elements, restarts, cells of
/// a sweep). fn must only write state owned by index i.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace parallel

/// Sets the OpenMP thread count (n <= 0 leaves the runtime default).
void set_thread_count(int n);
int thread_count();

}  // namespace mfinv::kernels
