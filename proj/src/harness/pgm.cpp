#include "mfinv/harness/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mfinv/errors.hpp"

namespace mfinv::harness {

void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.data) {
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w < 1 || h < 1 || maxval != 255) throw FormatError("not an 8-bit P5 PGM", 0);
  in.get();
  Image img(h, w);
  for (auto& v : img.data) {
    const int c = in.get();
    if (c == EOF) throw FormatError("truncated PGM", static_cast<std::size_t>(in.tellg()));
    v = c / 255.0;
  }
  return img;
}

Image tile_grid(const std::vector<std::vector<Image>>& rows, int pad, double background) {
  int th = 0, tw = 0;
  std::size_t ncols = 0;
  for (const auto& r : rows) {
    ncols = std::max(ncols, r.size());
    for (const auto& t : r) {
      if (th == 0) {
        th = t.height;
        tw = t.width;
      } else if (t.height != th || t.width != tw) {
        throw InvalidInput("tile_grid: tiles differ in size");
      }
    }
  }
  if (th == 0) return Image();
  const int nc = static_cast<int>(ncols);
  const int nr = static_cast<int>(rows.size());
  Image out(nr * th + (nr + 1) * pad, nc * tw + (nc + 1) * pad, background);
  for (int r = 0; r < nr; ++r) {
    for (int c = 0; c < static_cast<int>(rows[r].size()); ++c) {
      const Image& t = rows[r][c];
      for (int i = 0; i < th; ++i) {
        for (int j = 0; j < tw; ++j) out.at(pad + r * (th + pad) + i, pad + c * (tw + pad) + j) = t.at(i, j);
      }
    }
  }
  return out;
}

Image normalize_for_display(const Image& img) {
  if (img.data.empty()) return img;
  const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  Image out = img;
  const double span = *hi - *lo;
  for (auto& v : out.data) v = span > 0.0 ? (v - *lo) / span : 0.0;
  return out;
}

}  // namespace mfinv::harness
