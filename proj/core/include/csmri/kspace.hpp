#pragma once

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace csmri {

using Index = Eigen::Index;
using Cx = std::complex<double>;
using CxArray = Eigen::Array<Cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Image-space signal of one receive coil. Rows run along the phase-encode axis.
struct ComplexImage
{
  CxArray data;
  int coil = 0;

  Index rows() const { return data.rows(); }
  Index cols() const { return data.cols(); }
};

// Fourier-space counterpart of a ComplexImage, DC stored at (rows/2, cols/2).
struct KSpaceGrid
{
  CxArray data;
  int coil = 0;

  Index rows() const { return data.rows(); }
  Index cols() const { return data.cols(); }
};

enum class MaskPattern
{
  UniformACS,
  GaussianRandom,
  Full
};

std::string to_string(MaskPattern p);
MaskPattern parse_mask_pattern(std::string const &name);

// Phase-encode line selection. lines[r] != 0 means k-space row r is acquired.
struct SamplingMask
{
  std::vector<std::uint8_t> lines;
  MaskPattern pattern = MaskPattern::Full;
  int acceleration = 1;
  int acs_count = 0;

  int popcount() const;
  Index size() const { return static_cast<Index>(lines.size()); }
};

// Magnitude/phase artifact labels for one aliased image and its ground truth.
struct ArtifactPair
{
  RealArray input_mag;
  RealArray label_mag;
  RealArray input_phase;
  RealArray label_phase;
};

// Throws std::invalid_argument unless rows/cols are powers of two >= 8.
void check_image_shape(Index rows, Index cols);

// Unitary, DC-centred 2D DFT and its inverse.
KSpaceGrid dft2(ComplexImage const &img);
ComplexImage idft2(KSpaceGrid const &ks);

// Number of ACS rows round(acs_fraction * rows), and the first ACS row.
int acs_line_count(int rows, double acs_fraction);
int acs_first_line(int rows, int acs_count);

// Rows acquired by UniformACS for these arguments. GaussianRandom draws the same budget.
int uniform_acs_budget(int rows, int acceleration, double acs_fraction);

SamplingMask make_mask(MaskPattern pattern, int rows, int acceleration, double acs_fraction, std::uint64_t seed);

KSpaceGrid subsample(KSpaceGrid const &ks, SamplingMask const &mask);

// Minimum-norm reconstruction of Cartesian undersampled data: the inverse DFT with missing rows zero.
ComplexImage zero_fill_recon(KSpaceGrid const &ks_sub);

// Wraps an angle into (-pi, pi].
double wrap_phase(double angle);

RealArray magnitude(CxArray const &x);
RealArray phase(CxArray const &x);

ArtifactPair compute_artifact(ComplexImage const &aliased, ComplexImage const &truth);

// Augmentation catalogue. Transform ids enumerate (shear, flip, rotation) with
// shear in {0, +0.1, -0.1} along x, flip in {none, horizontal, vertical, both}
// and rotation in {0, +10, -10, 180} degrees, shear-major, skipping geometric
// duplicates, truncated at 32 entries. Id 0 is the identity.
inline constexpr int kTransformCount = 32;

struct AugmentTransform
{
  double shear = 0.0;
  bool flip_h = false;
  bool flip_v = false;
  double rotation_deg = 0.0;
};

std::vector<AugmentTransform> const &augment_catalog();

// Bilinear resampling about the image centre, applied to real and imaginary parts.
ComplexImage augment(ComplexImage const &img, int transform_id);

// Random ellipse phantom with a smooth phase map, multiplied by n_coils Gaussian sensitivities.
std::vector<ComplexImage> make_phantom(int rows, int cols, int n_coils, std::uint64_t seed);

// Square root of sum of squares across coils.
RealArray ssos(std::span<ComplexImage const> coils);

} // namespace csmri
