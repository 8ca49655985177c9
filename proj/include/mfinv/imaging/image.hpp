#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mfinv::imaging {

/// Grayscale image, row-major. Pixel values are nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0);
  Image(int h, int w, std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  double& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }

  /// Copy with every value clamped into [0, 1].
  Image clamped() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Shape of a measurement: a single frame for image-like observations, several
/// for videos. Data is always carried flat.
struct MeasurementShape {
  int frames = 1;
  int height = 0;
  int width = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(frames) * height * width; }
  friend bool operator==(const MeasurementShape&, const MeasurementShape&) = default;
};

struct Measurement {
  MeasurementShape shape;
  std::vector<double> data;

  Measurement() = default;
  Measurement(MeasurementShape s, std::vector<double> values);

  static Measurement from_image(const Image& img);
  /// Interprets a single-frame measurement as an image.
  Image to_image() const;

  bool all_finite() const;
  std::size_t size() const noexcept { return data.size(); }
  friend bool operator==(const Measurement&, const Measurement&) = default;
};

}  // namespace mfinv::imaging
