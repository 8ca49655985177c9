#include "mfinv/imaging/image.hpp"

#include <algorithm>
#include <cmath>

#include "mfinv/errors.hpp"

namespace mfinv::imaging {

Image::Image(int h, int w, double fill) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
  if (h < 0 || w < 0) throw InvalidInput("image dimensions must be non-negative");
}

Image::Image(int h, int w, std::vector<double> values) : height(h), width(w), data(std::move(values)) {
  if (h < 0 || w < 0 || data.size() != static_cast<std::size_t>(h) * w) {
    throw InvalidInput("image data length does not match " + std::to_string(h) + "x" + std::to_string(w));
  }
}

Image Image::clamped() const {
  Image out = *this;
  for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Measurement::Measurement(MeasurementShape s, std::vector<double> values) : shape(s), data(std::move(values)) {
  if (data.size() != shape.size()) throw InvalidInput("measurement data length does not match its shape");
}

Measurement Measurement::from_image(const Image& img) { return Measurement({1, img.height, img.width}, img.data); }

Image Measurement::to_image() const {
  if (shape.frames != 1) throw InvalidInput("multi-frame measurement cannot be viewed as an image");
  return Image(shape.height, shape.width, data);
}

bool Measurement::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mfinv::imaging
