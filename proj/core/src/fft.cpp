#include "csmri/kspace.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <stdexcept>
#include <string>

namespace csmri {

namespace {

bool is_pow2(Index n) { return n > 0 && (n & (n - 1)) == 0; }

void check_finite(CxArray const &x, char const *what)
{
  if (!x.real().allFinite() || !x.imag().allFinite()) {
    throw std::invalid_argument(std::string(what) + ": input contains non-finite values");
  }
}

// Cyclic shift by half the extent on both axes. Involutive for even sizes.
CxArray half_shift(CxArray const &x)
{
  Index const H = x.rows();
  Index const W = x.cols();
  CxArray out(H, W);
  for (Index r = 0; r < H; r++) {
    Index const rr = (r + H / 2) % H;
    for (Index c = 0; c < W; c++) {
      out(rr, (c + W / 2) % W) = x(r, c);
    }
  }
  return out;
}

enum class Direction
{
  Forward,
  Inverse
};

CxArray transform(CxArray const &in, Direction dir)
{
  Index const H = in.rows();
  Index const W = in.cols();
  CxArray x = half_shift(in);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);

  std::vector<Cx> src(std::max(H, W)), dst(std::max(H, W));
  for (Index r = 0; r < H; r++) {
    for (Index c = 0; c < W; c++) {
      src[c] = x(r, c);
    }
    if (dir == Direction::Forward) {
      fft.fwd(dst.data(), src.data(), W);
    } else {
      fft.inv(dst.data(), src.data(), W);
    }
    for (Index c = 0; c < W; c++) {
      x(r, c) = dst[c];
    }
  }
  for (Index c = 0; c < W; c++) {
    for (Index r = 0; r < H; r++) {
      src[r] = x(r, c);
    }
    if (dir == Direction::Forward) {
      fft.fwd(dst.data(), src.data(), H);
    } else {
      fft.inv(dst.data(), src.data(), H);
    }
    for (Index r = 0; r < H; r++) {
      x(r, c) = dst[r];
    }
  }
  x *= 1.0 / std::sqrt(static_cast<double>(H * W));
  return half_shift(x);
}

} // namespace

void check_image_shape(Index rows, Index cols)
{
  if (rows < 8 || cols < 8 || !is_pow2(rows) || !is_pow2(cols)) {
    throw std::invalid_argument("image dimensions must be powers of two >= 8, got " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

KSpaceGrid dft2(ComplexImage const &img)
{
  check_image_shape(img.rows(), img.cols());
  check_finite(img.data, "dft2");
  return KSpaceGrid{transform(img.data, Direction::Forward), img.coil};
}

ComplexImage idft2(KSpaceGrid const &ks)
{
  check_image_shape(ks.rows(), ks.cols());
  check_finite(ks.data, "idft2");
  return ComplexImage{transform(ks.data, Direction::Inverse), ks.coil};
}

} // namespace csmri
