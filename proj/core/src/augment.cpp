#include "csmri/kspace.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace csmri {

namespace {

// Forward map in (x = column, y = row) coordinates about the image centre.
Eigen::Matrix2d forward_map(AugmentTransform const &t)
{
  double const a = t.rotation_deg * std::numbers::pi / 180.0;
  Eigen::Matrix2d rot;
  rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  // Snap to exact values so that 180 degree rotations and flips stay pixel-exact.
  rot = rot.unaryExpr([](double v) { return std::abs(v) < 1e-15 ? 0.0 : v; });
  Eigen::Matrix2d flip = Eigen::Matrix2d::Identity();
  if (t.flip_h) {
    flip(0, 0) = -1.0;
  }
  if (t.flip_v) {
    flip(1, 1) = -1.0;
  }
  Eigen::Matrix2d shear;
  shear << 1.0, t.shear, 0.0, 1.0;
  return flip * rot * shear;
}

std::vector<AugmentTransform> build_catalog()
{
  double const shears[] = {0.0, 0.1, -0.1};
  bool const flips[][2] = {{false, false}, {true, false}, {false, true}, {true, true}};
  double const rotations[] = {0.0, 10.0, -10.0, 180.0};

  std::vector<AugmentTransform> out;
  std::vector<Eigen::Matrix2d> seen;
  for (double s : shears) {
    for (auto const &f : flips) {
      for (double r : rotations) {
        AugmentTransform t{s, f[0], f[1], r};
        Eigen::Matrix2d const m = forward_map(t);
        bool dup = false;
        for (auto const &o : seen) {
          dup = dup || (m - o).cwiseAbs().maxCoeff() < 1e-12;
        }
        if (!dup && out.size() < static_cast<std::size_t>(kTransformCount)) {
          out.push_back(t);
          seen.push_back(m);
        }
      }
    }
  }
  return out;
}

Cx bilinear(CxArray const &img, double y, double x)
{
  Index const H = img.rows();
  Index const W = img.cols();
  double const fy = std::floor(y);
  double const fx = std::floor(x);
  double const wy = y - fy;
  double const wx = x - fx;
  auto const at = [&](Index r, Index c) -> Cx {
    if (r < 0 || r >= H || c < 0 || c >= W) {
      return Cx(0.0, 0.0);
    }
    return img(r, c);
  };
  Index const r0 = static_cast<Index>(fy);
  Index const c0 = static_cast<Index>(fx);
  Cx v = (1.0 - wy) * (1.0 - wx) * at(r0, c0);
  if (wx > 0.0) {
    v += (1.0 - wy) * wx * at(r0, c0 + 1);
  }
  if (wy > 0.0) {
    v += wy * (1.0 - wx) * at(r0 + 1, c0);
    if (wx > 0.0) {
      v += wy * wx * at(r0 + 1, c0 + 1);
    }
  }
  return v;
}

} // namespace

std::vector<AugmentTransform> const &augment_catalog()
{
  static std::vector<AugmentTransform> const catalog = build_catalog();
  return catalog;
}

ComplexImage augment(ComplexImage const &img, int transform_id)
{
  if (transform_id < 0 || transform_id >= kTransformCount) {
    throw std::invalid_argument("augment: transform id " + std::to_string(transform_id) + " outside [0, 31]");
  }
  if (transform_id == 0) {
    return img;
  }
  Eigen::Matrix2d const inv = forward_map(augment_catalog()[transform_id]).inverse();
  Index const H = img.rows();
  Index const W = img.cols();
  double const cy = (H - 1) / 2.0;
  double const cx = (W - 1) / 2.0;

  ComplexImage out{CxArray(H, W), img.coil};
  for (Index r = 0; r < H; r++) {
    for (Index c = 0; c < W; c++) {
      Eigen::Vector2d const dst(c - cx, r - cy);
      Eigen::Vector2d const src = inv * dst;
      // Round away sub-ulp noise so exact maps land on exact pixel centres.
      double sx = src.x() + cx;
      double sy = src.y() + cy;
      if (std::abs(sx - std::round(sx)) < 1e-9) {
        sx = std::round(sx);
      }
      if (std::abs(sy - std::round(sy)) < 1e-9) {
        sy = std::round(sy);
      }
      out.data(r, c) = bilinear(img.data, sy, sx);
    }
  }
  return out;
}

} // namespace csmri
