#include "mfinv/kernels/kernels.hpp"

#include <vector>

#include "mfinv/errors.hpp"

namespace mfinv::kernels::serial {

void separable_conv2d(std::span<const double> in, int h, int w, std::span<const double> kernel,
                      std::span<double> out) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (in.size() != n || out.size() != n) throw InvalidInput("separable_conv2d: buffer size mismatch");
  if (kernel.size() % 2 == 0) throw InvalidInput("separable_conv2d: kernel length must be odd");
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(n, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) {
        const int xx = x + t;
        if (xx >= 0 && xx < w) acc += kernel[t + r] * in[y * w + xx];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) {
        const int yy = y + t;
        if (yy >= 0 && yy < h) acc += kernel[t + r] * tmp[yy * w + x];
      }
      out[y * w + x] = acc;
    }
  }
}

void diffusion_step(const StencilGeometry& g, std::span<const double> phi, std::span<const double> decay,
                    std::span<double> out) {
  const std::size_t n = g.cells();
  if (phi.size() != n || decay.size() != n || out.size() != n) throw InvalidInput("diffusion_step: buffer size mismatch");
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(g.nx);
  const std::size_t sz = static_cast<std::size_t>(g.nx) * g.ny;
  const bool has_y = g.ny > 1;
  for (int k = 0; k < g.nz; ++k) {
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        const std::size_t c = k * sz + j * sy + i;
        const double v = phi[c];
        double lap = -2.0 * v;
        lap += (i > 0 ? phi[c - sx] : 0.0) + (i + 1 < g.nx ? phi[c + sx] : 0.0);
        lap += -2.0 * v + (k > 0 ? phi[c - sz] : 0.0) + (k + 1 < g.nz ? phi[c + sz] : 0.0);
        if (has_y) lap += -2.0 * v + (j > 0 ? phi[c - sy] : 0.0) + (j + 1 < g.ny ? phi[c + sy] : 0.0);
        out[c] = decay[c] * (v + g.lap_coef * lap);
      }
    }
  }
}

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace mfinv::kernels::serial
