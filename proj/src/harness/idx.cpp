#include "mfinv/harness/idx.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "mfinv/errors.hpp"

namespace mfinv::harness {

namespace {

std::vector<unsigned char> read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> maybe_gunzip(const std::vector<unsigned char>& raw) {
  if (raw.size() < 2 || raw[0] != 0x1f || raw[1] != 0x8b) return raw;
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("cannot initialize gzip decoder", 0);
  zs.next_in = const_cast<unsigned char*>(raw.data());
  zs.avail_in = static_cast<uInt>(raw.size());
  std::vector<unsigned char> out;
  std::vector<unsigned char> chunk(1 << 16);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const auto off = zs.total_in;
      inflateEnd(&zs);
      throw FormatError("corrupt gzip stream", off);
    }
    out.insert(out.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError("truncated gzip stream", zs.total_in);
    }
  }
  inflateEnd(&zs);
  return out;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace

DatasetHandle load_idx_dataset(const std::filesystem::path& path) {
  const auto raw = read_raw(path);
  const auto bytes = maybe_gunzip(raw);
  if (bytes.size() < 4) throw FormatError("file too short for an IDX magic number", bytes.size());
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != 0x00000803u) {
    std::ostringstream m;
    m << "bad IDX magic 0x" << std::hex << std::setw(8) << std::setfill('0') << magic << " (expected 0x00000803)";
    throw FormatError(m.str(), 0);
  }
  if (bytes.size() < 16) throw FormatError("truncated IDX header", bytes.size());
  const std::uint64_t count = be32(bytes, 4);
  const std::uint64_t rows = be32(bytes, 8);
  const std::uint64_t cols = be32(bytes, 12);
  if (rows == 0 || cols == 0) throw FormatError("IDX image dimensions must be positive", 8);
  const std::uint64_t need = 16 + count * rows * cols;
  if (bytes.size() < need) {
    throw FormatError("truncated IDX payload: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size()),
                      bytes.size());
  }
  if (bytes.size() > need) throw FormatError("trailing data after IDX payload", need);

  DatasetHandle d;
  d.path = path;
  d.sha256 = sha256_hex(raw);
  d.images.reserve(count);
  const std::size_t n = rows * cols;
  for (std::uint64_t i = 0; i < count; ++i) {
    Image img(static_cast<int>(rows), static_cast<int>(cols));
    const unsigned char* src = bytes.data() + 16 + i * n;
    for (std::size_t j = 0; j < n; ++j) img.data[j] = src[j] / 255.0;
    d.images.push_back(std::move(img));
  }
  return d;
}

void write_idx_images(const std::filesystem::path& path, const std::vector<Image>& images) {
  if (images.empty()) throw InvalidInput("write_idx_images: no images");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto put32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put32(0x803);
  put32(static_cast<std::uint32_t>(images.size()));
  put32(static_cast<std::uint32_t>(images[0].height));
  put32(static_cast<std::uint32_t>(images[0].width));
  for (const auto& img : images) {
    if (img.height != images[0].height || img.width != images[0].width) throw InvalidInput("images differ in shape");
    for (double v : img.data) {
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
  }
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  std::ostringstream s;
  for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return s.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const std::vector<unsigned char> b{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return sha256_hex(b);
}

}  // namespace mfinv::harness
