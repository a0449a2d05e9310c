#pragma once

#include "csmri/kspace.hpp"

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace csmri {

using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// n points of dimension d, one per row.
struct PointCloud
{
  RealMatrix points;
  std::string label;

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

struct Bar
{
  double birth = 0.0;
  double death = std::numeric_limits<double>::infinity();

  bool finite() const { return death != std::numeric_limits<double>::infinity(); }
};

// Dimension-0 persistence. Canonical form: deaths ascending, the single infinite bar last.
struct Barcode
{
  std::vector<Bar> bars;
  double scale_max = 0.0; // largest finite death

  Index size() const { return static_cast<Index>(bars.size()); }
  std::vector<double> finite_deaths() const;
};

RealMatrix pairwise_distances(PointCloud const &pc);

// Rips filtration of a distance matrix: Kruskal over sorted edges with union-find. When two
// components merge, the one with the larger representative index dies at the edge length.
Barcode betti0_barcode(RealMatrix const &dist);

struct CurvePoint
{
  double epsilon;
  int count;
};

// Step function beta0(eps) = #{bars with death > eps}, listed at eps = 0 and at every distinct
// finite death. With normalize, eps is divided by the largest finite death.
std::vector<CurvePoint> betti0_curve(Barcode const &bc, bool normalize);

// Area under beta0(eps) / n over normalised eps in [0, 1]. Lies in (0, 1]; smaller merges faster.
double complexity_summary(Barcode const &bc);

// Bilinear downsample of each magnitude image to (h, w), vectorised row-major.
PointCloud image_cloud(std::span<RealArray const> images, int h, int w, std::string label = {});

RealArray resize_bilinear(RealArray const &img, int h, int w);

void write_barcode_csv(std::filesystem::path const &path, Barcode const &bc);
void write_curve_csv(std::filesystem::path const &path, std::vector<CurvePoint> const &curve);

} // namespace csmri
