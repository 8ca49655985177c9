#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <zlib.h>

#include "mfinv/errors.hpp"
#include "mfinv/harness/config.hpp"
#include "mfinv/harness/idx.hpp"
#include "mfinv/harness/pgm.hpp"
#include "mfinv/harness/pipeline.hpp"
#include "mfinv/harness/splits.hpp"
#include "mfinv/nn/rng.hpp"

using namespace mfinv;
using namespace mfinv::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "mfinv_tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Two 2x2 images: {0, 255, 51, 102} and {255, 0, 0, 255}.
std::vector<unsigned char> fixture_bytes() {
  return {0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 51, 102, 255, 0, 0, 255};
}

DatasetHandle synthetic_dataset(std::size_t n, int side, std::uint64_t seed) {
  nn::RngStream rng(seed, 0);
  DatasetHandle d;
  for (std::size_t i = 0; i < n; ++i) {
    Image x(side, side);
    for (auto& v : x.data) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    d.images.push_back(x);
  }
  return d;
}

const imaging::DegradationSpec kBlur{.kind = imaging::DegradationKind::blur, .sigma_psf = 1.0, .snr_db = 20.0};

}  // namespace

TEST(Idx, ReadsCraftedFixture) {
  const auto dir = scratch_dir("idx");
  write_bytes(dir / "two.idx", fixture_bytes());
  const auto d = load_idx_dataset(dir / "two.idx");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.images[0].height, 2);
  EXPECT_EQ(d.images[0].data, (std::vector<double>{0.0, 1.0, 0.2, 0.4}));
  EXPECT_EQ(d.images[1].data, (std::vector<double>{1.0, 0.0, 0.0, 1.0}));
  EXPECT_EQ(d.sha256, sha256_file(dir / "two.idx"));
}

TEST(Idx, SingleImageBytesScaleBy255) {
  const auto dir = scratch_dir("idx1");
  write_bytes(dir / "one.idx", {0x00, 0x00, 0x08, 0x03, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 128, 0});
  const auto a = load_idx_dataset(dir / "one.idx");
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a.images[0].data[0], 0.0);
  EXPECT_EQ(a.images[0].data[1], 1.0);
  EXPECT_NEAR(a.images[0].data[2], 0.50196078, 1e-8);
  EXPECT_EQ(a.images[0].data[3], 0.0);
  const auto b = load_idx_dataset(dir / "one.idx");
  EXPECT_EQ(a.sha256, b.sha256);
  EXPECT_EQ(a.images, b.images);
}

TEST(Idx, ReadsGzipAndRoundTripsWriter) {
  const auto dir = scratch_dir("idxgz");
  const auto raw = fixture_bytes();
  gzFile gz = gzopen((dir / "two.idx.gz").c_str(), "wb");
  ASSERT_NE(gz, nullptr);
  gzwrite(gz, raw.data(), static_cast<unsigned>(raw.size()));
  gzclose(gz);
  const auto d = load_idx_dataset(dir / "two.idx.gz");
  ASSERT_EQ(d.size(), 2u);
  write_idx_images(dir / "copy.idx", d.images);
  EXPECT_EQ(load_idx_dataset(dir / "copy.idx").images, d.images);
  std::ifstream in(dir / "copy.idx", std::ios::binary);
  std::vector<unsigned char> copied((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(copied, raw);
}

TEST(Idx, MalformedFilesReportOffsets) {
  const auto dir = scratch_dir("idxbad");
  write_bytes(dir / "empty.idx", {});
  EXPECT_THROW(load_idx_dataset(dir / "empty.idx"), FormatError);
  auto bad_magic = fixture_bytes();
  bad_magic[2] = 0x09;
  write_bytes(dir / "magic.idx", bad_magic);
  try {
    load_idx_dataset(dir / "magic.idx");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto truncated = fixture_bytes();
  truncated.resize(21);
  write_bytes(dir / "short.idx", truncated);
  try {
    load_idx_dataset(dir / "short.idx");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 21u);  // end of the available bytes inside the second image
  }
  auto trailing = fixture_bytes();
  trailing.push_back(7);
  write_bytes(dir / "long.idx", trailing);
  EXPECT_THROW(load_idx_dataset(dir / "long.idx"), FormatError);
  EXPECT_THROW(load_idx_dataset(dir / "missing.idx"), ConfigError);
}

TEST(Sha256, KnownDigest) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const unsigned char*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Splits, DisjointDeterministicAndSized) {
  const auto data = synthetic_dataset(100, 6, 1);
  const auto a = make_splits(data, 20, 50, 10, kBlur, 7);
  const auto b = make_splits(data, 20, 50, 10, kBlur, 7);
  const auto c = make_splits(data, 20, 50, 10, kBlur, 8);
  EXPECT_EQ(a.paired.size(), 20u);
  EXPECT_EQ(a.unpaired.size(), 50u);
  EXPECT_EQ(a.test.size(), 10u);
  EXPECT_NO_THROW(assert_disjoint(a));
  std::set<std::size_t> all(a.paired_idx.begin(), a.paired_idx.end());
  all.insert(a.unpaired_idx.begin(), a.unpaired_idx.end());
  all.insert(a.test_idx.begin(), a.test_idx.end());
  EXPECT_EQ(all.size(), 80u);
  EXPECT_EQ(a.paired_idx, b.paired_idx);
  EXPECT_EQ(a.paired.measurements, b.paired.measurements);
  EXPECT_NE(a.test_idx, c.test_idx);
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test.targets[i], data.images[a.test_idx[i]]);
}

TEST(Splits, MeasurementDependsOnlyOnSeedAndIndex) {
  const auto data = synthetic_dataset(60, 6, 2);
  const auto a = make_splits(data, 10, 20, 5, kBlur, 3);
  const auto b = make_splits(data, 25, 0, 5, kBlur, 3);  // same permutation, different sizes
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.paired_idx[i], b.paired_idx[i]);
    EXPECT_EQ(a.paired.measurements[i], b.paired.measurements[i]);
  }
}

TEST(Splits, EdgeCasesAndLeakDetection) {
  const auto data = synthetic_dataset(30, 6, 3);
  const auto zero = make_splits(data, 0, 10, 5, kBlur, 1);
  EXPECT_EQ(zero.paired.size(), 0u);
  EXPECT_THROW(make_splits(data, 20, 10, 5, kBlur, 1), ConfigError);
  auto leak = zero;
  leak.unpaired_idx.push_back(leak.test_idx.front());
  EXPECT_THROW(assert_disjoint(leak), ConfigError);
  const auto perm = seeded_permutation(50, 4);
  EXPECT_EQ(std::set<std::size_t>(perm.begin(), perm.end()).size(), 50u);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  auto c = blur_reference_config();
  c.baselines = {"paired_only", "simulated_only"};
  c.sweep.ks = {50, 100};
  c.true_process.snr_db.reset();
  const auto j = to_json(c);
  EXPECT_EQ(config_from_json(j), c);
  auto bad = j;
  bad["lerning_rate"] = 1.0;
  EXPECT_THROW(config_from_json(bad), ConfigError);
  auto bad2 = j;
  bad2["lowfid"]["sigma"] = 1.0;
  EXPECT_THROW(config_from_json(bad2), ConfigError);
}

TEST(Config, ValidationCatchesInconsistencies) {
  auto c = blur_reference_config();
  EXPECT_NO_THROW(c.validate(false));
  c.lowfid.kind = imaging::DegradationKind::downsample;
  EXPECT_THROW(c.validate(false), ConfigError);
  c = blur_reference_config();
  c.baselines = {"hio"};
  EXPECT_THROW(c.validate(false), ConfigError);
  c = blur_reference_config();
  c.dataset_path = "/nonexistent/file.idx";
  EXPECT_THROW(c.validate(true), ConfigError);
}

TEST(Config, EnvironmentOverrides) {
  std::string v1 = "MFINV_CFG_forward_train__iterations=17";
  std::string v2 = "MFINV_CFG_task=blur";
  std::string v3 = "MFINV_CFG_lowfid__sigma_psf=0.75";
  std::string v4 = "UNRELATED=1";
  char* env[] = {v1.data(), v2.data(), v3.data(), v4.data(), nullptr};
  const auto c = load_config({}, env, false);
  EXPECT_EQ(c.forward_train.iterations, 17);
  EXPECT_EQ(c.lowfid.sigma_psf, 0.75);
  EXPECT_EQ(c.inverse_train.iterations, 3000);
  std::string bad = "MFINV_CFG_forward_train____iterations=1";
  char* env2[] = {bad.data(), nullptr};
  EXPECT_THROW(load_config({}, env2, false), ConfigError);
}

TEST(Config, FingerprintIgnoresOutputDir) {
  auto a = blur_reference_config();
  auto b = a;
  b.output_dir = "elsewhere";
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  b.seed = 1;
  EXPECT_NE(fingerprint(a), fingerprint(b));
}

TEST(Pgm, RoundTripAndTiling) {
  const auto dir = scratch_dir("pgm");
  Image x(3, 4);
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = i / 11.0;
  write_pgm(dir / "x.pgm", x);
  const Image y = read_pgm(dir / "x.pgm");
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.data[i], x.data[i], 0.5 / 255);
  const Image g = tile_grid({{x, x}, {x}}, 1, 1.0);
  EXPECT_EQ(g.height, 2 * 3 + 3);
  EXPECT_EQ(g.width, 2 * 4 + 3);
  EXPECT_EQ(g.at(1, 1), x.at(0, 0));
  EXPECT_EQ(g.at(3, 4), x.at(2, 3));
  EXPECT_EQ(g.at(6, 7), 1.0);  // blank slot of the short row
  const Image n = normalize_for_display(Image(2, 2, 3.0));
  for (double v : n.data) EXPECT_EQ(v, 0.0);
}

namespace {

ExperimentConfig smoke_config(const fs::path& dir) {
  const auto data = synthetic_dataset(80, 8, 5);
  write_idx_images(dir / "data.idx", data.images);
  auto c = blur_reference_config();
  c.dataset_path = dir / "data.idx";
  c.k = 16;
  c.l = 40;
  c.test_n = 8;
  c.forward_net = c.inverse_net = {2, {8}, nn::Activation::relu};
  c.forward_train = {5, 8, 1};
  c.inverse_train = {5, 8, 1};
  c.posterior_samples = 3;
  c.grid_examples = 2;
  c.output_dir = dir / "run";
  return c;
}

}  // namespace

TEST(Pipeline, RunsAllStagesThenSkipsOnRerun) {
  const auto dir = scratch_dir("pipe");
  const auto c = smoke_config(dir);
  std::ostringstream log;
  const auto first = run_pipeline(c, {.log = &log});
  EXPECT_EQ(first.ran.size(), 6u);
  for (const char* f : {"config.json", "splits.json", "models/forward.json", "models/inverse.json",
                        "models/baseline_paired_only.json", "report.csv", "summary.txt", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(c.output_dir / f)) << f;
  }
  const auto rows = eval::read_report_csv(c.output_dir / "report.csv");
  ASSERT_EQ(rows.size(), 2u);
  const auto second = run_pipeline(c);
  EXPECT_TRUE(second.ran.empty());
  EXPECT_EQ(second.skipped.size(), 6u);
  auto changed = c;
  changed.inverse_train.iterations = 6;
  const auto third = run_pipeline(changed);
  EXPECT_FALSE(third.ran.empty());
}

TEST(Pipeline, IdenticalRunsGiveIdenticalManifests) {
  const auto dir = scratch_dir("pipe2");
  auto c = smoke_config(dir);
  run_pipeline(c);
  auto d = c;
  d.output_dir = dir / "run_b";
  run_pipeline(d);
  std::ifstream a(c.output_dir / "manifest.json"), b(d.output_dir / "manifest.json");
  const auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
  EXPECT_EQ(ja["files"], jb["files"]);
}

TEST(Pipeline, UntilStopsEarlyAndErrorsNameTheStage) {
  const auto dir = scratch_dir("pipe3");
  auto c = smoke_config(dir);
  const auto r = run_pipeline(c, {.until = Stage::simulate});
  EXPECT_EQ(r.ran, std::vector<Stage>{Stage::simulate});
  c.k = 4;  // below batch size
  try {
    run_pipeline(c, {.force = true});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train-forward"), std::string::npos);
  }
  EXPECT_EQ(stage_from_string("train-inverse"), Stage::train_inverse);
  EXPECT_THROW(stage_from_string("fit"), ConfigError);
}
