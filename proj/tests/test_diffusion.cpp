#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "mfinv/diffusion/diffusion.hpp"
#include "mfinv/errors.hpp"
#include "mfinv/nn/rng.hpp"

using namespace mfinv;
using namespace mfinv::diffusion;

namespace {

// Fluence rate of a unit impulse in an infinite medium, written independently.
double psf_ref(double r, double t, const MediumSpec& m) {
  const double d = 1.0 / (3.0 * (m.mu_a + m.mu_s));
  return m.c * std::pow(4.0 * std::numbers::pi * d * m.c * t, -1.5) * std::exp(-r * r / (4.0 * d * m.c * t) - m.mu_a * m.c * t);
}

// Direct triple sum over object pixel, exit pixel and quadrature node with
// full 3-D distances (no lateral factorization).
std::vector<double> brute_force_operator(int h, int w, const MediumSpec& m, const VideoSpec& v) {
  const int n = h * w;
  const double L = m.slab_thickness, a = v.pixel_pitch;
  const double dtau = v.frame_period / v.time_substeps;
  auto xp = [&](int c) { return (c - 0.5 * (w - 1)) * a; };
  auto yp = [&](int r) { return (r - 0.5 * (h - 1)) * a; };
  std::vector<double> src(n, 0.0);
  double norm = 0.0;
  for (int q = 0; q < n; ++q) {
    const double r2 = xp(q % w) * xp(q % w) + yp(q / w) * yp(q / w);
    src[q] = v.source_sigma > 0 ? std::exp(-0.5 * r2 / (v.source_sigma * v.source_sigma)) : 0.0;
    norm += src[q];
  }
  std::vector<double> op(static_cast<std::size_t>(v.frames) * n * n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int f = 0; f < v.frames; ++f) {
      const double tf = v.start_time + f * v.frame_period;
      for (int e = 0; e < n; ++e) {
        const double dx = xp(p % w) - xp(e % w), dy = yp(p / w) - yp(e / w);
        double acc = 0.0;
        for (int k = 0; (k + 1) * dtau <= tf + 1e-9; ++k) {
          const double tau = (k + 0.5) * dtau;
          double s1 = 0.0;
          if (v.source_sigma > 0) {
            for (int q = 0; q < n; ++q) {
              const double sx = xp(p % w) - xp(q % w), sy = yp(p / w) - yp(q / w);
              s1 += src[q] / norm * psf_ref(std::sqrt(sx * sx + sy * sy + L * L), tau, m);
            }
          } else {
            s1 = psf_ref(std::sqrt(xp(p % w) * xp(p % w) + yp(p / w) * yp(p / w) + L * L), tau, m);
          }
          acc += a * a * dtau * s1 * psf_ref(std::sqrt(dx * dx + dy * dy + L * L), tf - tau, m);
        }
        op[static_cast<std::size_t>(p) * v.frames * n + static_cast<std::size_t>(f) * n + e] = acc;
      }
    }
  }
  return op;
}

VideoSpec small_video() {
  VideoSpec v;
  v.frames = 4;
  v.frame_period = 55.0;
  v.start_time = 300.0;
  v.time_substeps = 5;
  return v;
}

}  // namespace

TEST(Psf, MatchesClosedForm) {
  const MediumSpec m;
  for (double r : {0.0, 0.5, 2.5}) {
    for (double t : {100.0, 1500.0}) EXPECT_NEAR(diffusion_psf(r, t, m) / psf_ref(r, t, m), 1.0, 1e-13);
  }
  EXPECT_NEAR(photon_density(1.0, 500.0, m) * m.c, diffusion_psf(1.0, 500.0, m), 1e-18);
  EXPECT_THROW(diffusion_psf(1.0, 0.0, m), InvalidInput);
}

TEST(Psf, PhotonDensityIntegratesToSurvivalFraction) {
  const MediumSpec m;
  for (double t : {200.0, 1000.0, 2500.0}) {
    const double sd = std::sqrt(2.0 * m.diffusion_length() * m.c * t);
    const int nodes = 20001;
    const double hi = 12.0 * sd, step = hi / (nodes - 1);
    double s = 0.0;
    for (int i = 0; i < nodes; ++i) {
      const double r = i * step;
      s += (i == 0 || i + 1 == nodes ? 0.5 : 1.0) * 4.0 * std::numbers::pi * r * r * photon_density(r, t, m);
    }
    EXPECT_NEAR(s * step, std::exp(-m.mu_a * m.c * t), 1e-6);
  }
}

TEST(LowFid, OperatorMatchesBruteForceSummation) {
  const MediumSpec m;
  for (double sigma : {0.0, 0.4}) {
    auto v = small_video();
    v.source_sigma = sigma;
    LowFidTofOperator op(3, 4, m, v);
    const auto ref = brute_force_operator(3, 4, m, v);
    double peak = 0.0;
    for (double r : ref) peak = std::max(peak, std::abs(r));
    ASSERT_GT(peak, 0.0);
    for (int p = 0; p < 12; ++p) {
      const auto col = op.column(p);
      for (std::size_t i = 0; i < col.size(); ++i) {
        EXPECT_NEAR(col[i], ref[p * col.size() + i], 1e-8 * peak) << "pixel " << p << " row " << i;
      }
    }
  }
}

TEST(LowFid, LinearInObjectAndBackgroundPeakIsAllOnesMax) {
  const MediumSpec m;
  const auto v = small_video();
  nn::RngStream rng(1, 0);
  Image a(3, 4), b(3, 4), ones(3, 4, 1.0);
  for (auto& x : a.data) x = rng.uniform();
  for (auto& x : b.data) x = rng.uniform();
  Image mix(3, 4);
  for (std::size_t i = 0; i < 12; ++i) mix.data[i] = 2.0 * a.data[i] - 0.5 * b.data[i];
  const auto va = lowfid_tof(a, m, v), vb = lowfid_tof(b, m, v), vm = lowfid_tof(mix, m, v);
  for (std::size_t i = 0; i < vm.data.size(); ++i) EXPECT_NEAR(vm.data[i], 2.0 * va.data[i] - 0.5 * vb.data[i], 1e-12 * va.background_peak);
  const auto vo = lowfid_tof(ones, m, v);
  EXPECT_NEAR(*std::max_element(vo.data.begin(), vo.data.end()), vo.background_peak, 1e-15 * vo.background_peak);
  EXPECT_EQ(lowfid_tof(Image(3, 4), m, v).data, std::vector<double>(4 * 12, 0.0));
}

TEST(LowFid, MirrorSymmetricForCentredSource) {
  const MediumSpec m;
  const auto v = small_video();
  Image x(3, 4);
  x.at(0, 0) = 1.0;
  Image xm(3, 4);
  xm.at(0, 3) = 1.0;
  const auto a = lowfid_tof(x, m, v), b = lowfid_tof(xm, m, v);
  for (int f = 0; f < v.frames; ++f) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) EXPECT_NEAR(a.at(f, r, c), b.at(f, r, 3 - c), 1e-12 * a.background_peak);
    }
  }
}

TEST(Grid, StabilityBoundEnforced) {
  const MediumSpec m;
  GridSpec g{10, 1, 10, 0.1, 0.0};
  g.dt = GridSpec::max_stable_dt(0.1, 2, m);
  EXPECT_NO_THROW(g.validate(m));
  EXPECT_NEAR(g.dt, 0.01 / (4.0 * m.c / (3.0 * (m.mu_a + m.mu_s))), 1e-12);
  g.dt *= 1.0001;
  EXPECT_THROW(g.validate(m), InvalidInput);
  EXPECT_THROW(FdSolver(g, m), InvalidInput);
  MediumSpec bad = m;
  bad.mu_s = 0.0;
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(FdSolver, ConservesPhotonsBeforeReachingBoundary) {
  MediumSpec m;
  m.mu_a = 0.0;
  GridSpec g{21, 21, 21, 0.1, 0.0};
  g.dt = 0.5 * GridSpec::max_stable_dt(g.dx, 3, m);
  FdSolver s(g, m);
  s.add_impulse(10, 10, 10);
  EXPECT_NEAR(s.total_photons(), 1.0, 1e-14);
  for (int i = 0; i < 9; ++i) s.step();
  EXPECT_NEAR(s.total_photons(), 1.0, 1e-12);
}

TEST(FdSolver, UniformAbsorptionDecaysExponentially) {
  const MediumSpec m;
  GridSpec g{21, 1, 21, 0.1, 0.0};
  g.dt = 0.5 * GridSpec::max_stable_dt(g.dx, 2, m);
  FdSolver s(g, m);
  s.add_impulse(10, 0, 10, 2.0);
  for (int i = 0; i < 8; ++i) s.step();
  EXPECT_NEAR(s.total_photons(), 2.0 * std::exp(-m.mu_a * m.c * s.time()), 1e-12);
}

TEST(FdSolver, SerialAndParallelFieldsAgreeBitwise) {
  const MediumSpec m;
  GridSpec g{15, 13, 11, 0.2, 0.0};
  g.dt = 0.9 * GridSpec::max_stable_dt(g.dx, 3, m);
  FdSolver a(g, m, false), b(g, m, true);
  for (auto* s : {&a, &b}) {
    s->add_impulse(7, 6, 0);
    s->set_absorption(s->index(3, 3, 5), 9.0);
    for (int i = 0; i < 40; ++i) s->step();
  }
  ASSERT_EQ(a.field().size(), b.field().size());
  EXPECT_TRUE(std::equal(a.field().begin(), a.field().end(), b.field().begin()));
}

TEST(FdSolve, EmptyObjectGivesZeroVideoAndAbsorberGivesShadow) {
  const MediumSpec m;
  VideoSpec v;
  v.frames = 3;
  const auto g = default_grid(4, 4, m, v);
  EXPECT_EQ(g.nx, 12);
  EXPECT_EQ(g.nz, 21);
  const auto empty = fd_solve(Image(4, 4), m, g, v);
  EXPECT_GT(empty.background_peak, 0.0);
  for (double d : empty.data) EXPECT_EQ(d, 0.0);
  Image x(4, 4);
  x.at(1, 1) = x.at(1, 2) = x.at(2, 1) = x.at(2, 2) = 1.0;
  const auto shadow = fd_solve(x, m, g, v);
  for (double d : shadow.data) EXPECT_GE(d, 0.0);
  EXPECT_GT(shadow.at(2, 1, 1), shadow.at(2, 0, 0));
  EXPECT_THROW(fd_solve(Image(20, 20), m, g, v), InvalidInput);
}

TEST(FdSolve, DatasetSplitsAndKeepsFrames) {
  const MediumSpec m;
  VideoSpec v;
  v.frames = 3;
  const auto g = default_grid(4, 4, m, v);
  std::vector<Image> objs(3, Image(4, 4));
  objs[0].at(1, 1) = 1.0;
  nn::RngStream rng(2, 0);
  const auto ds = make_diffusion_dataset(objs, m, g, v, 2, 2, std::numeric_limits<double>::infinity(), rng);
  ASSERT_EQ(ds.paired_videos.size(), 2u);
  EXPECT_EQ(ds.unpaired_targets.size(), 1u);
  EXPECT_EQ(ds.paired_videos[0].frames, 2);
  EXPECT_EQ(ds.paired_videos[0].data.size(), 2u * 16);
  EXPECT_THROW(make_diffusion_dataset(objs, m, g, v, 4, 2, 10.0, rng), InvalidInput);
}
