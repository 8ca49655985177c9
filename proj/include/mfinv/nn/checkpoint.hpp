#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfinv/nn/mlp.hpp"

namespace mfinv::nn {

enum class DType { f32, f64 };

std::size_t element_size(DType t);
std::string to_string(DType t);
DType dtype_from_string(const std::string& s);

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (little-endian values).
///
/// The manifest gains "dtype", "element_count" and "byte_length" keys; the
/// caller supplies everything else (shape, layout, version, seed, ...).
void write_blob(const std::filesystem::path& stem, nlohmann::json manifest,
                std::span<const double> values, DType dtype);

struct Blob {
  nlohmann::json manifest;
  std::vector<double> values;
};

/// Reads a blob written by write_blob. Throws FormatError when the binary
/// length disagrees with the manifest-declared count.
Blob read_blob(const std::filesystem::path& stem);

struct NamedNetwork {
  std::string name;
  MlpParams params;
};

/// Stores several networks in one blob; `meta` is embedded under "meta".
void write_networks(const std::filesystem::path& stem, const nlohmann::json& meta,
                    std::span<const NamedNetwork> nets, DType dtype = DType::f64);

struct NetworkCheckpoint {
  nlohmann::json meta;
  std::vector<NamedNetwork> nets;

  const MlpParams& at(const std::string& name) const;
};

NetworkCheckpoint read_networks(const std::filesystem::path& stem);

}  // namespace mfinv::nn
