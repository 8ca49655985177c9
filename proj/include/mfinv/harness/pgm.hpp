#pragma once

#include <filesystem>
#include <vector>

#include "mfinv/imaging/image.hpp"

namespace mfinv::harness {

using imaging::Image;

/// Binary PGM (P5, maxval 255); values are clamped to [0, 1].
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

/// Tiles rows of equally sized images into one image with `pad` pixels of
/// background between tiles. Short rows are left blank.
Image tile_grid(const std::vector<std::vector<Image>>& rows, int pad = 1, double background = 1.0);

/// Rescales to [0, 1] by the image's own min/max (constant images map to 0).
Image normalize_for_display(const Image& img);

}  // namespace mfinv::harness
