#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace mfinv::nn {

/// Mixes a list of integers into a single 64-bit stream identifier.
///
/// Training loops derive per-example streams from (iteration, slot, purpose)
/// so that parallel evaluation order never changes the draws.
std::uint64_t derive_stream(std::initializer_list<std::uint64_t> parts);

/// A reproducible random stream keyed on (seed, stream_id).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  double normal();
  double uniform();  // [0, 1)
  std::uint64_t below(std::uint64_t n);  // uniform in [0, n)
  void fill_normal(std::span<double> out);

  /// Child stream that depends only on this stream's key and `tag`.
  RngStream fork(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mfinv::nn
