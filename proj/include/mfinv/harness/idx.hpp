#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mfinv/imaging/image.hpp"

namespace mfinv::harness {

using imaging::Image;

struct DatasetHandle {
  std::vector<Image> images;
  std::filesystem::path path;
  std::string sha256;  // of the file bytes as stored

  std::size_t size() const noexcept { return images.size(); }
};

/// Reads an IDX3 unsigned-byte image file (optionally gzip-compressed) and
/// scales bytes to [0, 1]. Throws FormatError with the byte offset on a bad
/// magic number, truncation or trailing data; ConfigError if unreadable.
DatasetHandle load_idx_dataset(const std::filesystem::path& path);

/// Writes images (values clamped to [0, 1], rounded to bytes) as plain IDX3.
void write_idx_images(const std::filesystem::path& path, const std::vector<Image>& images);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace mfinv::harness
