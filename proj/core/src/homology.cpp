#include "csmri/homology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace csmri {

std::vector<double> Barcode::finite_deaths() const
{
  std::vector<double> out;
  for (auto const &b : bars) {
    if (b.finite()) {
      out.push_back(b.death);
    }
  }
  return out;
}

RealMatrix pairwise_distances(PointCloud const &pc)
{
  if (!pc.points.allFinite()) {
    throw std::invalid_argument("pairwise_distances: point cloud contains non-finite values");
  }
  Index const n = pc.size();
  RealMatrix d = RealMatrix::Zero(n, n);
  for (Index i = 0; i < n; i++) {
    for (Index j = i + 1; j < n; j++) {
      double const v = (pc.points.row(i) - pc.points.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

namespace {

class DisjointSets
{
public:
  explicit DisjointSets(Index n)
    : parent_(n)
  {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }

  Index find(Index i)
  {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  // Root stays the smaller index.
  void join(Index older, Index younger) { parent_[younger] = older; }

private:
  std::vector<Index> parent_;
};

struct Edge
{
  double w;
  Index i;
  Index j;
};

} // namespace

Barcode betti0_barcode(RealMatrix const &dist)
{
  Index const n = dist.rows();
  if (n < 2 || dist.cols() != n) {
    throw std::invalid_argument("betti0_barcode: need a square distance matrix with at least two points");
  }
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; i++) {
    for (Index j = i + 1; j < n; j++) {
      edges.push_back({dist(i, j), i, j});
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](Edge const &a, Edge const &b) { return a.w < b.w; });

  Barcode bc;
  DisjointSets sets(n);
  for (auto const &e : edges) {
    Index const a = sets.find(e.i);
    Index const b = sets.find(e.j);
    if (a == b) {
      continue;
    }
    sets.join(std::min(a, b), std::max(a, b));
    bc.bars.push_back({0.0, e.w});
    if (static_cast<Index>(bc.bars.size()) == n - 1) {
      break;
    }
  }
  bc.scale_max = bc.bars.empty() ? 0.0 : bc.bars.back().death;
  bc.bars.push_back({});
  return bc;
}

std::vector<CurvePoint> betti0_curve(Barcode const &bc, bool normalize)
{
  auto const deaths = bc.finite_deaths();
  double const scale = normalize && bc.scale_max > 0.0 ? bc.scale_max : 1.0;
  int const n = static_cast<int>(bc.bars.size());
  std::vector<CurvePoint> curve;
  // Every point is its own component at eps = 0; zero-length bars drop out immediately after.
  curve.push_back({0.0, n});
  for (std::size_t k = 0; k < deaths.size(); k++) {
    if (k + 1 < deaths.size() && deaths[k + 1] == deaths[k]) {
      continue;
    }
    curve.push_back({deaths[k] / scale, n - static_cast<int>(k + 1)});
  }
  return curve;
}

double complexity_summary(Barcode const &bc)
{
  if (bc.bars.empty()) {
    throw std::invalid_argument("complexity_summary: empty barcode");
  }
  double const scale = bc.scale_max > 0.0 ? bc.scale_max : 1.0;
  double area = 0.0;
  for (auto const &b : bc.bars) {
    area += b.finite() ? std::min(b.death / scale, 1.0) : 1.0;
  }
  return area / static_cast<double>(bc.bars.size());
}

RealArray resize_bilinear(RealArray const &img, int h, int w)
{
  if (h == img.rows() && w == img.cols()) {
    return img;
  }
  Index const H = img.rows();
  Index const W = img.cols();
  double const sy = static_cast<double>(H) / h;
  double const sx = static_cast<double>(W) / w;
  RealArray out(h, w);
  for (int r = 0; r < h; r++) {
    double const y = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
    Index const y0 = static_cast<Index>(std::floor(y));
    Index const y1 = std::min(y0 + 1, H - 1);
    double const wy = y - y0;
    for (int c = 0; c < w; c++) {
      double const x = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
      Index const x0 = static_cast<Index>(std::floor(x));
      Index const x1 = std::min(x0 + 1, W - 1);
      double const wx = x - x0;
      out(r, c) = (1 - wy) * ((1 - wx) * img(y0, x0) + wx * img(y0, x1)) +
                  wy * ((1 - wx) * img(y1, x0) + wx * img(y1, x1));
    }
  }
  return out;
}

PointCloud image_cloud(std::span<RealArray const> images, int h, int w, std::string label)
{
  if (images.empty()) {
    throw std::invalid_argument("image_cloud: no images");
  }
  PointCloud pc{RealMatrix(static_cast<Index>(images.size()), static_cast<Index>(h) * w), std::move(label)};
  for (std::size_t i = 0; i < images.size(); i++) {
    if (images[i].rows() != images[0].rows() || images[i].cols() != images[0].cols()) {
      throw std::invalid_argument("image_cloud: images differ in shape");
    }
    RealArray const small = resize_bilinear(images[i], h, w);
    pc.points.row(static_cast<Index>(i)) = Eigen::Map<Eigen::RowVectorXd const>(small.data(), small.size());
  }
  return pc;
}

void write_barcode_csv(std::filesystem::path const &path, Barcode const &bc)
{
  std::ofstream os(path);
  if (!os) {
    throw std::runtime_error("cannot write " + path.string());
  }
  os.precision(17);
  os << "bar_index,birth,death,finite\n";
  for (std::size_t i = 0; i < bc.bars.size(); i++) {
    auto const &b = bc.bars[i];
    os << i << ',' << b.birth << ',';
    if (b.finite()) {
      os << b.death << ",1\n";
    } else {
      os << "inf,0\n";
    }
  }
}

void write_curve_csv(std::filesystem::path const &path, std::vector<CurvePoint> const &curve)
{
  std::ofstream os(path);
  if (!os) {
    throw std::runtime_error("cannot write " + path.string());
  }
  os.precision(17);
  os << "epsilon,betti0\n";
  for (auto const &p : curve) {
    os << p.epsilon << ',' << p.count << '\n';
  }
}

} // namespace csmri
