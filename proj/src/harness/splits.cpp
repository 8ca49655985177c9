#include "mfinv/harness/splits.hpp"

#include <numeric>
#include <unordered_set>

#include "mfinv/errors.hpp"
#include "mfinv/kernels/kernels.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::harness {

namespace {
constexpr std::uint64_t kPermutationTag = 0x5E11;
constexpr std::uint64_t kMeasurementTag = 0x7E57;
}  // namespace

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  nn::RngStream rng(seed, nn::derive_stream({kPermutationTag}));
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

Splits make_splits(const DatasetHandle& data, int k, int l, int test_n, const imaging::DegradationSpec& true_spec,
                   std::uint64_t seed) {
  if (k < 0 || l < 0 || test_n < 0) throw ConfigError("split sizes must be non-negative");
  const std::size_t need = static_cast<std::size_t>(k) + l + test_n;
  if (need > data.size()) {
    throw ConfigError("splits need " + std::to_string(need) + " images but the dataset has " +
                      std::to_string(data.size()));
  }
  const auto perm = seeded_permutation(data.size(), seed);
  std::vector<std::size_t> test_idx(perm.begin(), perm.begin() + test_n);
  std::vector<std::size_t> paired_idx(perm.begin() + test_n, perm.begin() + test_n + k);
  std::vector<std::size_t> unpaired_idx(perm.begin() + test_n + k, perm.begin() + static_cast<std::ptrdiff_t>(need));

  auto measure = [&](const std::vector<std::size_t>& idx) {
    std::vector<imaging::Measurement> ys(idx.size());
    kernels::parallel::for_each_index(idx.size(), [&](std::size_t i) {
      nn::RngStream rng(seed, nn::derive_stream({kMeasurementTag, idx[i]}));
      ys[i] = imaging::apply_degradation(true_spec, data.images[idx[i]], rng);
    });
    return ys;
  };
  auto paired_y = measure(paired_idx);
  auto test_y = measure(test_idx);
  return splits_from_indices(data, std::move(paired_idx), std::move(unpaired_idx), std::move(test_idx),
                             std::move(paired_y), std::move(test_y));
}

Splits splits_from_indices(const DatasetHandle& data, std::vector<std::size_t> paired_idx,
                           std::vector<std::size_t> unpaired_idx, std::vector<std::size_t> test_idx,
                           std::vector<imaging::Measurement> paired_y, std::vector<imaging::Measurement> test_y) {
  if (paired_y.size() != paired_idx.size() || test_y.size() != test_idx.size()) {
    throw ConfigError("stored measurements do not match the split sizes");
  }
  Splits s;
  auto take = [&](const std::vector<std::size_t>& idx) {
    std::vector<Image> out;
    out.reserve(idx.size());
    for (auto i : idx) {
      if (i >= data.size()) throw ConfigError("split index " + std::to_string(i) + " outside the dataset");
      out.push_back(data.images[i]);
    }
    return out;
  };
  s.paired = {take(paired_idx), std::move(paired_y)};
  s.test = {take(test_idx), std::move(test_y)};
  s.unpaired = take(unpaired_idx);
  s.paired_idx = std::move(paired_idx);
  s.unpaired_idx = std::move(unpaired_idx);
  s.test_idx = std::move(test_idx);
  assert_disjoint(s);
  return s;
}

void assert_disjoint(const Splits& s) {
  std::unordered_set<std::size_t> seen;
  auto add = [&](const std::vector<std::size_t>& idx, const char* name) {
    for (auto i : idx) {
      if (!seen.insert(i).second) {
        throw ConfigError(std::string("dataset index ") + std::to_string(i) + " appears twice (" + name + ")");
      }
    }
  };
  add(s.test_idx, "test");
  add(s.paired_idx, "paired");
  add(s.unpaired_idx, "unpaired");
}

}  // namespace mfinv::harness
