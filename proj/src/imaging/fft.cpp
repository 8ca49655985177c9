#include "mfinv/imaging/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <vector>

#include "mfinv/errors.hpp"

namespace mfinv::imaging {
namespace {

// FFTW's planner is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

struct Fft2::Plans {
  fftw_complex* buffer = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
};

Fft2::Fft2(int height, int width) : height_(height), width_(width), plans_(std::make_unique<Plans>()) {
  if (height < 1 || width < 1) throw InvalidInput("Fft2: dimensions must be positive");
  std::lock_guard lock(planner_mutex());
  plans_->buffer = fftw_alloc_complex(static_cast<std::size_t>(height) * width);
  plans_->fwd = fftw_plan_dft_2d(height, width, plans_->buffer, plans_->buffer, FFTW_FORWARD, FFTW_ESTIMATE);
  plans_->inv = fftw_plan_dft_2d(height, width, plans_->buffer, plans_->buffer, FFTW_BACKWARD, FFTW_ESTIMATE);
}

Fft2::~Fft2() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plans_->fwd);
  fftw_destroy_plan(plans_->inv);
  fftw_free(plans_->buffer);
}

void Fft2::forward(std::span<std::complex<double>> data) {
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  if (data.size() != n) throw InvalidInput("Fft2: buffer size mismatch");
  auto* buf = reinterpret_cast<std::complex<double>*>(plans_->buffer);
  std::copy(data.begin(), data.end(), buf);
  fftw_execute(plans_->fwd);
  std::copy(buf, buf + n, data.begin());
}

void Fft2::inverse(std::span<std::complex<double>> data) {
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  if (data.size() != n) throw InvalidInput("Fft2: buffer size mismatch");
  auto* buf = reinterpret_cast<std::complex<double>*>(plans_->buffer);
  std::copy(data.begin(), data.end(), buf);
  fftw_execute(plans_->inv);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::transform(buf, buf + n, data.begin(), [inv_n](std::complex<double> v) { return v * inv_n; });
}

template <typename T>
void fftshift(std::span<T> data, int h, int w) {
  std::vector<T> tmp(data.begin(), data.end());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      data[static_cast<std::size_t>((r + h / 2) % h) * w + (c + w / 2) % w] = tmp[static_cast<std::size_t>(r) * w + c];
    }
  }
}

template <typename T>
void ifftshift(std::span<T> data, int h, int w) {
  std::vector<T> tmp(data.begin(), data.end());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      data[static_cast<std::size_t>(r) * w + c] = tmp[static_cast<std::size_t>((r + h / 2) % h) * w + (c + w / 2) % w];
    }
  }
}

template void fftshift<double>(std::span<double>, int, int);
template void fftshift<std::complex<double>>(std::span<std::complex<double>>, int, int);
template void ifftshift<double>(std::span<double>, int, int);
template void ifftshift<std::complex<double>>(std::span<std::complex<double>>, int, int);

}  // namespace mfinv::imaging
