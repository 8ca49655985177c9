#include "mfinv/eval/metrics.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "mfinv/errors.hpp"
#include "mfinv/kernels/kernels.hpp"
#include "mfinv/nn/rng.hpp"

namespace mfinv::eval {

double psnr(const Image& x, const Image& xhat) {
  if (x.height != xhat.height || x.width != xhat.width) throw InvalidInput("psnr: image shapes differ");
  if (x.size() == 0) throw InvalidInput("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data[i] - xhat.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(x.size());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double mean_psnr(const std::vector<Image>& xs, const std::vector<Image>& xhats) {
  if (xs.size() != xhats.size() || xs.empty()) throw InvalidInput("mean_psnr: need equal, non-empty lists");
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += psnr(xs[i], xhats[i]);
  return s / static_cast<double>(xs.size());
}

double ncc(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width) throw InvalidInput("ncc: image shapes differ");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.data.begin(), a.data.end(), 0.0) / n;
  const double mb = std::accumulate(b.data.begin(), b.data.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a.data[i] - ma) * (b.data[i] - mb);
    saa += (a.data[i] - ma) * (a.data[i] - ma);
    sbb += (b.data[i] - mb) * (b.data[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double ncc_up_to_ambiguity(const Image& truth, const Image& estimate, Image* aligned) {
  if (truth.height != estimate.height || truth.width != estimate.width) throw InvalidInput("ncc: image shapes differ");
  const int h = truth.height;
  const int w = truth.width;
  double best = -2.0;
  Image candidate(h, w);
  for (int flip = 0; flip < 2; ++flip) {
    for (int dr = 0; dr < h; ++dr) {
      for (int dc = 0; dc < w; ++dc) {
        for (int r = 0; r < h; ++r) {
          for (int c = 0; c < w; ++c) {
            int sr = (r + dr) % h;
            int sc = (c + dc) % w;
            if (flip) {
              sr = (h - sr) % h;
              sc = (w - sc) % w;
            }
            candidate.at(r, c) = estimate.at(sr, sc);
          }
        }
        const double v = ncc(truth, candidate);
        if (v > best) {
          best = v;
          if (aligned != nullptr) *aligned = candidate;
        }
      }
    }
  }
  return best;
}

ElboEstimate test_elbo(const models::InverseModelParams& p, const models::PairedDataset& test, std::uint64_t seed,
                       int samples) {
  test.validate();
  if (test.size() == 0) throw InvalidInput("test_elbo: empty test set");
  if (samples < 1) throw InvalidInput("test_elbo: samples must be >= 1");
  const auto n = static_cast<Eigen::Index>(test.size());
  models::Matrix target(p.net.spec.target_dim, n), cond(p.net.spec.cond_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& x = test.targets[static_cast<std::size_t>(i)];
    const auto& y = test.measurements[static_cast<std::size_t>(i)];
    if (x.height != p.height || x.width != p.width || y.size() != p.measurement.size()) {
      throw InvalidInput("test_elbo: test pair does not match the model");
    }
    target.col(i) = models::to_vector(x);
    cond.col(i) = models::to_vector(y);
  }
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(n);
  for (int s = 0; s < samples; ++s) {
    models::Matrix eps(p.latent_dim(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
      nn::RngStream r(seed, nn::derive_stream({static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(s), 0x7Eu}));
      r.fill_normal({eps.col(i).data(), static_cast<std::size_t>(eps.rows())});
    }
    acc += models::cvae_elbo(p.net, target, cond, eps).elbo;
  }
  acc /= samples;
  ElboEstimate e;
  e.values.assign(acc.data(), acc.data() + acc.size());
  e.mean = acc.mean();
  e.std = std::sqrt((acc.array() - e.mean).square().mean());
  return e;
}

SeedSpread test_elbo_across_seeds(const std::vector<models::InverseModelParams>& checkpoints,
                                  const models::PairedDataset& test, std::uint64_t seed, int samples) {
  if (checkpoints.empty()) throw InvalidInput("test_elbo_across_seeds: no checkpoints");
  std::vector<double> means;
  for (const auto& c : checkpoints) means.push_back(test_elbo(c, test, seed, samples).mean);
  SeedSpread s;
  s.mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
  double v = 0.0;
  for (double m : means) v += (m - s.mean) * (m - s.mean);
  s.std = std::sqrt(v / static_cast<double>(means.size()));
  return s;
}

std::vector<CellResult> severity_sweep(const std::vector<SweepCell>& cells, const CellRunner& run) {
  std::vector<CellResult> out(cells.size());
  kernels::parallel::for_each_index(cells.size(), [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    CellResult r = run(cells[i]);
    r.cell = cells[i];
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out[i] = r;
  });
  return out;
}

std::vector<SweepCell> make_cells(const std::string& task, const std::vector<std::string>& methods,
                                  const std::vector<double>& severities, const std::vector<int>& ks,
                                  const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepCell> cells;
  for (const auto& m : methods) {
    for (double s : severities) {
      for (int k : ks) {
        for (auto seed : seeds) cells.push_back({m, task, k, s, seed});
      }
    }
  }
  return cells;
}

void write_report_csv(const std::filesystem::path& path, const std::vector<CellResult>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  out << "method,task,K,severity,seed,psnr_mean,elbo_mean,elbo_std,wall_time_s\n";
  for (const auto& r : rows) {
    out << r.cell.method << ',' << r.cell.task << ',' << r.cell.k << ',' << r.cell.severity << ',' << r.cell.seed << ','
        << r.psnr_mean << ',' << r.elbo_mean << ',' << r.elbo_std << ',' << r.wall_time_s << '\n';
  }
}

std::vector<CellResult> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<CellResult> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 9) throw FormatError("report row has " + std::to_string(f.size()) + " fields", 0);
    CellResult r;
    r.cell = {f[0], f[1], std::stoi(f[2]), std::stod(f[3]), std::stoull(f[4])};
    r.psnr_mean = std::stod(f[5]);
    r.elbo_mean = std::stod(f[6]);
    r.elbo_std = std::stod(f[7]);
    r.wall_time_s = std::stod(f[8]);
    rows.push_back(r);
  }
  return rows;
}

std::string summary_table(const std::vector<CellResult>& rows) {
  struct Acc {
    std::vector<double> psnr, elbo;
  };
  std::map<std::tuple<std::string, int, double>, Acc> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.cell.method, r.cell.k, r.cell.severity}];
    g.psnr.push_back(r.psnr_mean);
    g.elbo.push_back(r.elbo_mean);
  }
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(24) << "method" << std::right << std::setw(8) << "K" << std::setw(10) << "severity"
      << std::setw(7) << "seeds" << std::setw(11) << "psnr" << std::setw(14) << "elbo" << std::setw(12) << "+-" << '\n';
  for (const auto& [key, g] : groups) {
    const double n = static_cast<double>(g.elbo.size());
    const double pm = std::accumulate(g.psnr.begin(), g.psnr.end(), 0.0) / n;
    const double em = std::accumulate(g.elbo.begin(), g.elbo.end(), 0.0) / n;
    double v = 0.0;
    for (double e : g.elbo) v += (e - em) * (e - em);
    out << std::left << std::setw(24) << std::get<0>(key) << std::right << std::setw(8) << std::get<1>(key)
        << std::setw(10) << std::get<2>(key) << std::setw(7) << g.elbo.size() << std::setw(11) << pm << std::setw(14)
        << em << std::setw(12) << std::sqrt(v / n) << '\n';
  }
  return out.str();
}

}  // namespace mfinv::eval
