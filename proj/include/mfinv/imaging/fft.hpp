#pragma once

#include <complex>
#include <memory>
#include <span>

namespace mfinv::imaging {

/// Unnormalized 2-D DFT of a fixed size, backed by FFTW.
///
/// inverse() divides by h*w so that inverse(forward(x)) == x.
class Fft2 {
 public:
  Fft2(int height, int width);
  ~Fft2();
  Fft2(const Fft2&) = delete;
  Fft2& operator=(const Fft2&) = delete;

  void forward(std::span<std::complex<double>> data);
  void inverse(std::span<std::complex<double>> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

 private:
  struct Plans;
  int height_;
  int width_;
  std::unique_ptr<Plans> plans_;
};

/// Moves the zero-frequency bin of an h x w array to (h/2, w/2).
template <typename T>
void fftshift(std::span<T> data, int h, int w);
/// Inverse of fftshift.
template <typename T>
void ifftshift(std::span<T> data, int h, int w);

}  // namespace mfinv::imaging
