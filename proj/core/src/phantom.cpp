#include "csmri/kspace.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace csmri {

namespace {

class Draw
{
public:
  explicit Draw(std::uint64_t seed)
    : rng_(seed)
  {
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(rng_() >> 11) * 0x1.0p-53); }

  int integer(int lo, int hi) { return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1)); }

private:
  std::mt19937_64 rng_;
};

struct Ellipse
{
  double cu, cv, a, b, angle, value;

  bool contains(double u, double v) const
  {
    double const ca = std::cos(angle);
    double const sa = std::sin(angle);
    double const du = u - cu;
    double const dv = v - cv;
    double const x = (ca * du + sa * dv) / a;
    double const y = (-sa * du + ca * dv) / b;
    return x * x + y * y <= 1.0;
  }
};

} // namespace

std::vector<ComplexImage> make_phantom(int rows, int cols, int n_coils, std::uint64_t seed)
{
  check_image_shape(rows, cols);
  if (n_coils < 1) {
    throw std::invalid_argument("make_phantom: need at least one coil");
  }
  constexpr double pi = std::numbers::pi;
  Draw draw(seed);

  // Skull, brain and a handful of interior structures, Shepp-Logan style.
  double const cu = draw.uniform(-0.05, 0.05);
  double const cv = draw.uniform(-0.05, 0.05);
  double const a = draw.uniform(0.6, 0.85);
  double const b = draw.uniform(0.65, 0.9);
  double const tilt = draw.uniform(-0.25, 0.25);
  std::vector<Ellipse> ellipses{{cu, cv, a, b, tilt, 1.0}, {cu, cv, 0.9 * a, 0.92 * b, tilt, -0.7}};
  int const n_inner = draw.integer(3, 6);
  for (int i = 0; i < n_inner; i++) {
    double const r = draw.uniform(0.0, 0.45);
    double const t = draw.uniform(0.0, 2.0 * pi);
    double const sign = draw.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
    ellipses.push_back({cu + r * a * std::cos(t), cv + r * b * std::sin(t), draw.uniform(0.05, 0.25),
                        draw.uniform(0.05, 0.25), draw.uniform(0.0, pi), sign * draw.uniform(0.1, 0.3)});
  }
  double const bias_u = draw.uniform(-0.1, 0.1);
  double const bias_v = draw.uniform(-0.1, 0.1);

  // Low-order polynomial phase.
  double coef[6];
  for (auto &k : coef) {
    k = draw.uniform(-1.0, 1.0);
  }
  double const phase_amp = draw.uniform(0.3 * pi, 0.9 * pi);

  double const cy = (rows - 1) / 2.0;
  double const cx = (cols - 1) / 2.0;
  RealArray mag = RealArray::Zero(rows, cols);
  RealArray phs(rows, cols);
  double phs_max = 0.0;
  for (Index r = 0; r < rows; r++) {
    double const v = (r - cy) / (rows / 2.0);
    for (Index c = 0; c < cols; c++) {
      double const u = (c - cx) / (cols / 2.0);
      double p = coef[0] + coef[1] * u + coef[2] * v + coef[3] * u * u + coef[4] * u * v + coef[5] * v * v;
      phs(r, c) = p;
      phs_max = std::max(phs_max, std::abs(p));
      if (!ellipses[0].contains(u, v)) {
        continue;
      }
      double val = 0.0;
      for (auto const &e : ellipses) {
        if (e.contains(u, v)) {
          val += e.value;
        }
      }
      mag(r, c) = std::max(val, 0.05) * (1.0 + bias_u * u + bias_v * v);
    }
  }
  if (phs_max > 0.0) {
    phs *= phase_amp / phs_max;
  }

  double const coil_offset = draw.uniform(0.0, 2.0 * pi / n_coils);
  std::vector<ComplexImage> out;
  out.reserve(n_coils);
  for (int k = 0; k < n_coils; k++) {
    double const theta = coil_offset + 2.0 * pi * k / n_coils;
    double const pu = 1.2 * std::cos(theta);
    double const pv = 1.2 * std::sin(theta);
    double const width = 0.9;
    ComplexImage img{CxArray(rows, cols), k};
    for (Index r = 0; r < rows; r++) {
      double const v = (r - cy) / (rows / 2.0);
      for (Index c = 0; c < cols; c++) {
        double const u = (c - cx) / (cols / 2.0);
        double const d2 = (u - pu) * (u - pu) + (v - pv) * (v - pv);
        double const sens = n_coils == 1 ? 1.0 : std::exp(-d2 / (2.0 * width * width));
        img.data(r, c) = std::polar(mag(r, c) * sens, phs(r, c));
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

} // namespace csmri
