#pragma once

#include <cstdint>
#include <vector>

#include "mfinv/harness/idx.hpp"
#include "mfinv/models/forward_mf.hpp"

namespace mfinv::harness {

struct Splits {
  models::PairedDataset paired;
  std::vector<Image> unpaired;
  models::PairedDataset test;
  std::vector<std::size_t> paired_idx;
  std::vector<std::size_t> unpaired_idx;
  std::vector<std::size_t> test_idx;
};

/// Seeded permutation of the dataset: the first test_n indices form the test
/// set, the next k the paired set, the next l the unpaired targets. Paired
/// and test measurements come from `true_spec`, each from a stream keyed on
/// (seed, dataset index). Throws ConfigError when k + l + test_n exceeds the
/// dataset.
Splits make_splits(const DatasetHandle& data, int k, int l, int test_n, const imaging::DegradationSpec& true_spec,
                   std::uint64_t seed);

/// Rebuilds a split from stored indices and measurements.
Splits splits_from_indices(const DatasetHandle& data, std::vector<std::size_t> paired_idx,
                           std::vector<std::size_t> unpaired_idx, std::vector<std::size_t> test_idx,
                           std::vector<imaging::Measurement> paired_y, std::vector<imaging::Measurement> test_y);

/// Throws ConfigError if any index appears in two splits (test leakage).
void assert_disjoint(const Splits& s);

/// Seeded permutation of [0, n).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace mfinv::harness
