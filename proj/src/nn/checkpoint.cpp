#include "mfinv/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mfinv/errors.hpp"

namespace mfinv::nn {

static_assert(std::endian::native == std::endian::little, "blob format assumes a little-endian host");

std::size_t element_size(DType t) { return t == DType::f32 ? 4 : 8; }

std::string to_string(DType t) { return t == DType::f32 ? "float32" : "float64"; }

DType dtype_from_string(const std::string& s) {
  if (s == "float32") return DType::f32;
  if (s == "float64") return DType::f64;
  throw ConfigError("unknown dtype '" + s + "'");
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void write_blob(const std::filesystem::path& stem, nlohmann::json manifest, std::span<const double> values,
                DType dtype) {
  const std::size_t esize = element_size(dtype);
  manifest["dtype"] = to_string(dtype);
  manifest["element_count"] = values.size();
  manifest["byte_length"] = values.size() * esize;
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());

  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot open " + with_suffix(stem, ".bin").string() + " for writing");
  if (dtype == DType::f64) {
    bin.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * esize));
  } else {
    std::vector<float> narrow(values.begin(), values.end());
    bin.write(reinterpret_cast<const char*>(narrow.data()), static_cast<std::streamsize>(narrow.size() * esize));
  }
  std::ofstream js(with_suffix(stem, ".json"), std::ios::trunc);
  js << manifest.dump(2) << '\n';
  if (!bin || !js) throw std::runtime_error("failed writing blob " + stem.string());
}

Blob read_blob(const std::filesystem::path& stem) {
  std::ifstream js(with_suffix(stem, ".json"));
  if (!js) throw FormatError("missing manifest " + with_suffix(stem, ".json").string(), 0);
  Blob b;
  try {
    b.manifest = nlohmann::json::parse(js);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  const DType dtype = dtype_from_string(b.manifest.at("dtype").get<std::string>());
  const std::size_t count = b.manifest.at("element_count").get<std::size_t>();
  const std::size_t esize = element_size(dtype);

  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw FormatError("missing blob " + with_suffix(stem, ".bin").string(), 0);
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (bytes.size() != count * esize) {
    throw FormatError("blob has " + std::to_string(bytes.size()) + " bytes, manifest declares " +
                          std::to_string(count) + " x " + std::to_string(esize),
                      std::min(bytes.size(), count * esize));
  }
  b.values.resize(count);
  if (dtype == DType::f64) {
    std::memcpy(b.values.data(), bytes.data(), bytes.size());
  } else {
    std::vector<float> narrow(count);
    std::memcpy(narrow.data(), bytes.data(), bytes.size());
    std::copy(narrow.begin(), narrow.end(), b.values.begin());
  }
  return b;
}

void write_networks(const std::filesystem::path& stem, const nlohmann::json& meta, std::span<const NamedNetwork> nets,
                    DType dtype) {
  nlohmann::json manifest;
  manifest["format"] = "mfinv-networks";
  manifest["version"] = 1;
  manifest["meta"] = meta;
  std::vector<double> flat;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& n : nets) {
    tensors.push_back({{"name", n.name},
                       {"widths", n.params.spec().widths},
                       {"activation", to_string(n.params.spec().activation)},
                       {"offset", flat.size()},
                       {"count", n.params.size()}});
    flat.insert(flat.end(), n.params.values().begin(), n.params.values().end());
  }
  manifest["networks"] = std::move(tensors);
  write_blob(stem, std::move(manifest), flat, dtype);
}

const MlpParams& NetworkCheckpoint::at(const std::string& name) const {
  for (const auto& n : nets) {
    if (n.name == name) return n.params;
  }
  throw FormatError("checkpoint has no network named '" + name + "'", 0);
}

NetworkCheckpoint read_networks(const std::filesystem::path& stem) {
  Blob b = read_blob(stem);
  if (b.manifest.value("format", "") != "mfinv-networks") throw FormatError("not a network checkpoint", 0);
  NetworkCheckpoint ck;
  ck.meta = b.manifest.value("meta", nlohmann::json::object());
  for (const auto& t : b.manifest.at("networks")) {
    MlpSpec spec{t.at("widths").get<std::vector<int>>(), activation_from_string(t.at("activation").get<std::string>())};
    MlpParams p(spec);
    const std::size_t off = t.at("offset").get<std::size_t>();
    const std::size_t count = t.at("count").get<std::size_t>();
    if (count != p.size() || off + count > b.values.size()) {
      throw FormatError("network '" + t.at("name").get<std::string>() + "' layout disagrees with its widths", off * 8);
    }
    std::copy_n(b.values.begin() + static_cast<std::ptrdiff_t>(off), count, p.values().begin());
    ck.nets.push_back({t.at("name").get<std::string>(), std::move(p)});
  }
  return ck;
}

}  // namespace mfinv::nn
