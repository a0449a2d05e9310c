#include "csmri/kspace.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace csmri {

std::string to_string(MaskPattern p)
{
  switch (p) {
  case MaskPattern::UniformACS:
    return "uniform_acs";
  case MaskPattern::GaussianRandom:
    return "gaussian";
  case MaskPattern::Full:
    return "full";
  }
  return "unknown";
}

MaskPattern parse_mask_pattern(std::string const &name)
{
  if (name == "uniform_acs") {
    return MaskPattern::UniformACS;
  }
  if (name == "gaussian") {
    return MaskPattern::GaussianRandom;
  }
  if (name == "full") {
    return MaskPattern::Full;
  }
  throw std::invalid_argument("unknown mask pattern '" + name + "' (expected uniform_acs, gaussian or full)");
}

int SamplingMask::popcount() const
{
  return std::accumulate(lines.begin(), lines.end(), 0, [](int acc, std::uint8_t v) { return acc + (v != 0); });
}

int acs_line_count(int rows, double acs_fraction)
{
  return static_cast<int>(std::lround(acs_fraction * rows));
}

int acs_first_line(int rows, int acs_count) { return rows / 2 - acs_count / 2; }

namespace {

void check_args(int rows, int R, double acs_fraction)
{
  if (rows < 1 || R < 1) {
    throw std::invalid_argument("make_mask: rows and acceleration must be positive");
  }
  if (R > rows) {
    throw std::invalid_argument("make_mask: acceleration exceeds the number of phase-encode lines");
  }
  if (!(acs_fraction >= 0.0) || acs_fraction >= 1.0) {
    throw std::invalid_argument("make_mask: acs_fraction must lie in [0, 1)");
  }
}

std::vector<std::uint8_t> uniform_lines(int rows, int R, int acs)
{
  std::vector<std::uint8_t> lines(rows, 0);
  for (int r = 0; r < rows; r += R) {
    lines[r] = 1;
  }
  int const first = acs_first_line(rows, acs);
  for (int r = first; r < first + acs; r++) {
    lines[r] = 1;
  }
  return lines;
}

// Uniform double in [0, 1) from the top 53 bits, independent of the standard library's distributions.
double unit_draw(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace

int uniform_acs_budget(int rows, int acceleration, double acs_fraction)
{
  check_args(rows, acceleration, acs_fraction);
  auto const lines = uniform_lines(rows, acceleration, acs_line_count(rows, acs_fraction));
  return std::accumulate(lines.begin(), lines.end(), 0);
}

SamplingMask make_mask(MaskPattern pattern, int rows, int acceleration, double acs_fraction, std::uint64_t seed)
{
  check_args(rows, acceleration, acs_fraction);
  SamplingMask mask;
  mask.pattern = pattern;
  mask.acceleration = acceleration;

  switch (pattern) {
  case MaskPattern::Full:
    mask.lines.assign(rows, 1);
    mask.acceleration = 1;
    mask.acs_count = 0;
    break;
  case MaskPattern::UniformACS:
    mask.acs_count = acs_line_count(rows, acs_fraction);
    mask.lines = uniform_lines(rows, acceleration, mask.acs_count);
    break;
  case MaskPattern::GaussianRandom: {
    mask.acs_count = 0;
    int const budget = uniform_acs_budget(rows, acceleration, acs_fraction);
    double const sigma = rows / 6.0;
    std::vector<double> weight(rows);
    for (int r = 0; r < rows; r++) {
      double const d = r - rows / 2.0;
      weight[r] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    mask.lines.assign(rows, 0);
    std::mt19937_64 rng(seed);
    for (int drawn = 0; drawn < budget; drawn++) {
      double total = 0.0;
      for (int r = 0; r < rows; r++) {
        total += mask.lines[r] ? 0.0 : weight[r];
      }
      double const target = unit_draw(rng) * total;
      double cum = 0.0;
      int pick = -1;
      for (int r = 0; r < rows; r++) {
        if (mask.lines[r]) {
          continue;
        }
        pick = r;
        cum += weight[r];
        if (target < cum) {
          break;
        }
      }
      mask.lines[pick] = 1;
    }
    break;
  }
  }
  return mask;
}

} // namespace csmri
