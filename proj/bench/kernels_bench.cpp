// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to
// compare scaling; outputs are identical by construction.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "mfinv/kernels/kernels.hpp"

namespace {

using namespace mfinv::kernels;

std::vector<double> ramp(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::sin(0.37 * static_cast<double>(i));
  return v;
}

std::vector<double> gaussian_taps(int radius, double sigma) {
  std::vector<double> k(2 * radius + 1);
  double s = 0.0;
  for (int t = -radius; t <= radius; ++t) s += k[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (auto& x : k) x /= s;
  return k;
}

template <auto Fn>
void BM_conv(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto in = ramp(static_cast<std::size_t>(side) * side);
  const auto k = gaussian_taps(6, 2.0);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    Fn(in, side, side, k, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(in.size()));
}

template <auto Fn>
void BM_diffusion(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  StencilGeometry g{side, side, side, 0.1};
  const auto phi = ramp(g.cells());
  const std::vector<double> decay(g.cells(), 0.999);
  std::vector<double> out(g.cells());
  for (auto _ : state) {
    Fn(g, phi, decay, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(g.cells()));
}

constexpr auto serial_conv = &serial::separable_conv2d;
constexpr auto parallel_conv = &parallel::separable_conv2d;
constexpr auto serial_diff = &serial::diffusion_step;
constexpr auto parallel_diff = &parallel::diffusion_step;

BENCHMARK(BM_conv<serial_conv>)->Name("conv2d/serial")->Arg(28)->Arg(128)->Arg(512);
BENCHMARK(BM_conv<parallel_conv>)->Name("conv2d/parallel")->Arg(28)->Arg(128)->Arg(512);
BENCHMARK(BM_diffusion<serial_diff>)->Name("diffusion_step/serial")->Arg(32)->Arg(64)->Arg(96);
BENCHMARK(BM_diffusion<parallel_diff>)->Name("diffusion_step/parallel")->Arg(32)->Arg(64)->Arg(96);

}  // namespace

BENCHMARK_MAIN();
