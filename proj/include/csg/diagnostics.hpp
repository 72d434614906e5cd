#pragma once

// Feature-diversity diagnostics: pairwise hyperspherical energy over
// l2-normalized embeddings, PCA projection of high-dimensional features onto
// the 2-sphere, and a Gaussian KDE over a longitude×latitude grid with
// Scott's-rule bandwidth.

#include <array>
#include <cstddef>

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

namespace csg {

struct PcaProjectionInfo {
  std::array<double, 3> eigenvalues{};  // top three, descending
  double variance_ratio = 0.0;          // captured / total variance
  bool rank_deficient = false;          // orthonormal completion was used
  bool degenerate_points = false;       // some projections had ~zero norm
};

struct KdeGrid {
  std::size_t n_lon = 0, n_lat = 0;
  std::vector<double> density;  // lat-major: density[lat * n_lon + lon]
  double bandwidth = 0.0;
  double raw_integral = 0.0;  // area-weighted sum before renormalization
};

struct DiversityReport {
  std::size_t n = 0;
  std::map<int, double> energies;  // s in {0,1,2}
  std::size_t clamped_pairs = 0;   // ordered pairs clamped to distance 1e-12
  PcaProjectionInfo pca;
  KdeGrid kde;
};

// Ordered-pair double sum over pairwise distances of the normalized inputs:
// s=0 sums log(1/d), s>0 sums d^-s. Distances below 1e-12 are clamped and
// counted.
double hse(const std::vector<std::vector<double>>& embeddings, int s,
           std::size_t* clamped_pairs = nullptr);

// Top-3 PCA directions by power iteration with deflation (200 iterations,
// tol 1e-10), projections l2-normalized onto the sphere.
std::vector<std::array<double, 3>> project_to_sphere(
    const std::vector<std::vector<double>>& embeddings, PcaProjectionInfo* info = nullptr);

// h = n^(-1/6) * sigma_bar (Scott's rule for d=2 in ambient 3-space).
double scott_bandwidth(std::size_t n, double sigma_bar);

// Gaussian KDE evaluated at grid cell centers and renormalized so the
// area-weighted sum over the sphere is 1.
KdeGrid kde_density(const std::vector<std::array<double, 3>>& points, std::size_t n_lon,
                    std::size_t n_lat);

DiversityReport diversity_report(const std::vector<std::vector<double>>& embeddings,
                                 std::size_t n_lon = 64, std::size_t n_lat = 32);

nlohmann::json report_to_json(const DiversityReport& report);
void write_report_json(const DiversityReport& report, const std::string& path);
// rows = latitude, cols = longitude
void write_kde_csv(const KdeGrid& grid, const std::string& path);

}  // namespace csg
