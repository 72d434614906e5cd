#include "csg/diagnostics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "csg/error.hpp"
#include "csg/tensor.hpp"
#include "csg/tensor_io.hpp"

namespace csg {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDistClamp = 1e-12;

std::vector<std::vector<double>> normalize_all(const std::vector<std::vector<double>>& in) {
  std::vector<std::vector<double>> out = in;
  for (auto& v : out) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    const double inv = 1.0 / (n < kEps ? kEps : n);
    for (double& x : v) x *= inv;
  }
  return out;
}

}  // namespace

double hse(const std::vector<std::vector<double>>& embeddings, int s,
           std::size_t* clamped_pairs) {
  const std::size_t n = embeddings.size();
  CSG_CHECK(n >= 2, Contract, "hse: needs at least two embeddings");
  CSG_CHECK(s >= 0 && s <= 2, Contract, "hse: power s must be 0, 1 or 2");
  const std::size_t dim = embeddings[0].size();
  for (const auto& v : embeddings)
    CSG_CHECK(v.size() == dim, Dimension, "hse: embeddings must share dimension");

  const auto vs = normalize_all(embeddings);
  std::size_t clamped = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = vs[i][k] - vs[j][k];
        d2 += diff * diff;
      }
      double d = std::sqrt(d2);
      if (d < kDistClamp) {
        d = kDistClamp;
        ++clamped;
      }
      if (s == 0)
        acc += -std::log(d);
      else if (s == 1)
        acc += 1.0 / d;
      else
        acc += 1.0 / (d * d);
    }
  }
  if (clamped_pairs) *clamped_pairs = clamped;
  return acc;
}

namespace {

// symmetric C×C times vector
void matvec(const std::vector<double>& m, const std::vector<double>& v, std::vector<double>& out) {
  const std::size_t c = v.size();
  for (std::size_t i = 0; i < c; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < c; ++j) acc += m[i * c + j] * v[j];
    out[i] = acc;
  }
}

double norm2(const std::vector<double>& v) {
  double n = 0;
  for (double x : v) n += x * x;
  return std::sqrt(n);
}

}  // namespace

std::vector<std::array<double, 3>> project_to_sphere(
    const std::vector<std::vector<double>>& embeddings, PcaProjectionInfo* info) {
  const std::size_t n = embeddings.size();
  CSG_CHECK(n >= 3, Contract, "project_to_sphere: needs at least three points");
  const std::size_t c = embeddings[0].size();
  CSG_CHECK(c >= 3, Contract, "project_to_sphere: needs at least three dimensions");
  for (const auto& v : embeddings)
    CSG_CHECK(v.size() == c, Dimension, "project_to_sphere: dimension mismatch");

  std::vector<double> mean(c, 0.0);
  for (const auto& v : embeddings)
    for (std::size_t k = 0; k < c; ++k) mean[k] += v[k];
  for (auto& m : mean) m /= static_cast<double>(n);

  std::vector<double> cov(c * c, 0.0);
  for (const auto& v : embeddings)
    for (std::size_t i = 0; i < c; ++i) {
      const double di = v[i] - mean[i];
      for (std::size_t j = 0; j < c; ++j) cov[i * c + j] += di * (v[j] - mean[j]);
    }
  for (auto& x : cov) x /= static_cast<double>(n - 1);

  double trace = 0.0;
  for (std::size_t i = 0; i < c; ++i) trace += cov[i * c + i];

  PcaProjectionInfo local;
  std::array<std::vector<double>, 3> axes;
  std::vector<double> work(cov);
  Rng rng(0x9CA5EED);

  for (int k = 0; k < 3; ++k) {
    std::vector<double> v(c);
    for (auto& x : v) x = rng.gaussian();
    // orthogonalize the start vector against found axes
    for (int p = 0; p < k; ++p) {
      double d = 0;
      for (std::size_t i = 0; i < c; ++i) d += v[i] * axes[p][i];
      for (std::size_t i = 0; i < c; ++i) v[i] -= d * axes[p][i];
    }
    double nv = norm2(v);
    for (auto& x : v) x /= (nv < kEps ? kEps : nv);

    std::vector<double> next(c);
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
      matvec(work, v, next);
      const double nn = norm2(next);
      if (nn < 1e-15) break;  // vanished: deflated matrix is ~zero
      for (std::size_t i = 0; i < c; ++i) next[i] /= nn;
      double align = 0.0;
      for (std::size_t i = 0; i < c; ++i) align += v[i] * next[i];
      if (align < 0.0)
        for (auto& x : next) x = -x;
      double delta = 0.0;
      for (std::size_t i = 0; i < c; ++i) {
        const double diff = next[i] - v[i];
        delta += diff * diff;
      }
      std::swap(v, next);
      if (std::sqrt(delta) < 1e-10) break;
    }
    matvec(work, v, next);
    lambda = 0.0;
    for (std::size_t i = 0; i < c; ++i) lambda += v[i] * next[i];

    if (lambda < std::max(1e-12 * std::max(trace, 1.0), 1e-18)) {
      // rank-deficient covariance: complete with an arbitrary orthonormal axis
      local.rank_deficient = true;
      for (std::size_t basis = 0; basis < c; ++basis) {
        std::vector<double> e(c, 0.0);
        e[basis] = 1.0;
        for (int p = 0; p < k; ++p) {
          double d = 0;
          for (std::size_t i = 0; i < c; ++i) d += e[i] * axes[p][i];
          for (std::size_t i = 0; i < c; ++i) e[i] -= d * axes[p][i];
        }
        const double en = norm2(e);
        if (en > 0.5) {
          for (auto& x : e) x /= en;
          v = e;
          break;
        }
      }
      lambda = 0.0;
    }

    local.eigenvalues[k] = lambda;
    axes[k] = v;
    // deflate
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) work[i * c + j] -= lambda * v[i] * v[j];
  }

  local.variance_ratio =
      trace > 0.0
          ? (local.eigenvalues[0] + local.eigenvalues[1] + local.eigenvalues[2]) / trace
          : 0.0;

  std::vector<std::array<double, 3>> out(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::array<double, 3> y{};
    for (int k = 0; k < 3; ++k) {
      double acc = 0;
      for (std::size_t i = 0; i < c; ++i) acc += (embeddings[idx][i] - mean[i]) * axes[k][i];
      y[k] = acc;
    }
    const double ny = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
    if (ny < kEps) {
      out[idx] = {0.0, 0.0, 1.0};
      local.degenerate_points = true;
    } else {
      out[idx] = {y[0] / ny, y[1] / ny, y[2] / ny};
    }
  }
  if (info) *info = local;
  return out;
}

double scott_bandwidth(std::size_t n, double sigma_bar) {
  CSG_CHECK(n >= 2, Contract, "scott_bandwidth: needs at least two points");
  return std::pow(static_cast<double>(n), -1.0 / 6.0) * sigma_bar;
}

KdeGrid kde_density(const std::vector<std::array<double, 3>>& points, std::size_t n_lon,
                    std::size_t n_lat) {
  const std::size_t n = points.size();
  CSG_CHECK(n >= 2, Contract, "kde_density: needs at least two points");
  CSG_CHECK(n_lon >= 2 && n_lat >= 2, Contract, "kde_density: grid too small");

  // mean marginal sample standard deviation in ambient coordinates
  double sigma_bar = 0.0;
  for (int k = 0; k < 3; ++k) {
    double mean = 0;
    for (const auto& p : points) mean += p[k];
    mean /= static_cast<double>(n);
    double var = 0;
    for (const auto& p : points) var += (p[k] - mean) * (p[k] - mean);
    var /= static_cast<double>(n - 1);
    sigma_bar += std::sqrt(var);
  }
  sigma_bar /= 3.0;

  KdeGrid grid;
  grid.n_lon = n_lon;
  grid.n_lat = n_lat;
  grid.bandwidth = std::max(scott_bandwidth(n, sigma_bar), 1e-6);
  grid.density.assign(n_lon * n_lat, 0.0);

  const double h = grid.bandwidth;
  const double norm = 1.0 / (static_cast<double>(n) * std::pow(2.0 * kPi, 1.5) * h * h * h);
  const double inv2h2 = 1.0 / (2.0 * h * h);

  for (std::size_t j = 0; j < n_lat; ++j) {
    const double theta = kPi * (static_cast<double>(j) + 0.5) / static_cast<double>(n_lat);
    const double st = std::sin(theta), ct = std::cos(theta);
    for (std::size_t i = 0; i < n_lon; ++i) {
      const double phi = 2.0 * kPi * (static_cast<double>(i) + 0.5) / static_cast<double>(n_lon);
      const double gx = st * std::cos(phi), gy = st * std::sin(phi), gz = ct;
      double acc = 0.0;
      for (const auto& p : points) {
        const double dx = gx - p[0], dy = gy - p[1], dz = gz - p[2];
        acc += std::exp(-(dx * dx + dy * dy + dz * dz) * inv2h2);
      }
      grid.density[j * n_lon + i] = norm * acc;
    }
  }

  // quadrature weights: dA = sin(theta) dtheta dphi at cell centers
  const double dtheta = kPi / static_cast<double>(n_lat);
  const double dphi = 2.0 * kPi / static_cast<double>(n_lon);
  double integral = 0.0;
  for (std::size_t j = 0; j < n_lat; ++j) {
    const double w = std::sin(kPi * (static_cast<double>(j) + 0.5) / static_cast<double>(n_lat)) *
                     dtheta * dphi;
    for (std::size_t i = 0; i < n_lon; ++i) integral += grid.density[j * n_lon + i] * w;
  }
  grid.raw_integral = integral;
  if (integral > 1e-12) {
    for (auto& d : grid.density) d /= integral;
  } else {
    // all mass fell between grid points; report a uniform density instead
    for (auto& d : grid.density) d = 1.0 / (4.0 * kPi);
  }
  return grid;
}

DiversityReport diversity_report(const std::vector<std::vector<double>>& embeddings,
                                 std::size_t n_lon, std::size_t n_lat) {
  DiversityReport report;
  report.n = embeddings.size();
  std::size_t clamped = 0;
  for (int s : {0, 1, 2}) {
    std::size_t c = 0;
    report.energies[s] = hse(embeddings, s, &c);
    clamped = std::max(clamped, c);
  }
  report.clamped_pairs = clamped;
  auto points = project_to_sphere(embeddings, &report.pca);
  report.kde = kde_density(points, n_lon, n_lat);
  return report;
}

nlohmann::json report_to_json(const DiversityReport& report) {
  nlohmann::json j;
  j["n"] = report.n;
  nlohmann::json energies = nlohmann::json::object();
  for (auto& [s, e] : report.energies) energies[std::to_string(s)] = e;
  j["energies"] = energies;
  j["clamped_pairs"] = report.clamped_pairs;
  j["pca"] = {{"method", "top3-power-iteration, l2-normalized projection"},
              {"eigenvalues", report.pca.eigenvalues},
              {"variance_ratio", report.pca.variance_ratio},
              {"rank_deficient", report.pca.rank_deficient},
              {"degenerate_points", report.pca.degenerate_points}};
  j["kde"] = {{"n_lon", report.kde.n_lon},
              {"n_lat", report.kde.n_lat},
              {"bandwidth", report.kde.bandwidth},
              {"raw_integral", report.kde.raw_integral}};
  return j;
}

void write_report_json(const DiversityReport& report, const std::string& path) {
  std::ofstream os(path);
  CSG_CHECK(os.good(), Io, "write_report_json: cannot open " + path);
  os << report_to_json(report).dump(2) << "\n";
}

void write_kde_csv(const KdeGrid& grid, const std::string& path) {
  Tensor t = Tensor::from_data({grid.n_lat, grid.n_lon}, grid.density);
  write_csv_2d(t, path);
}

}  // namespace csg
