#include "csmri/kspace.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace csmri {

KSpaceGrid subsample(KSpaceGrid const &ks, SamplingMask const &mask)
{
  if (mask.size() != ks.rows()) {
    throw std::invalid_argument("subsample: mask length " + std::to_string(mask.size()) +
                                " does not match k-space rows " + std::to_string(ks.rows()));
  }
  KSpaceGrid out{ks.data, ks.coil};
  for (Index r = 0; r < ks.rows(); r++) {
    if (!mask.lines[r]) {
      out.data.row(r).setZero();
    }
  }
  return out;
}

ComplexImage zero_fill_recon(KSpaceGrid const &ks_sub) { return idft2(ks_sub); }

double wrap_phase(double angle)
{
  constexpr double pi = std::numbers::pi;
  double w = std::remainder(angle, 2.0 * pi);
  if (w <= -pi) {
    w += 2.0 * pi;
  }
  return w;
}

RealArray magnitude(CxArray const &x) { return x.abs(); }

RealArray phase(CxArray const &x)
{
  RealArray out(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); i++) {
    out(i) = std::arg(x(i));
  }
  return out;
}

ArtifactPair compute_artifact(ComplexImage const &aliased, ComplexImage const &truth)
{
  if (aliased.rows() != truth.rows() || aliased.cols() != truth.cols()) {
    throw std::invalid_argument("compute_artifact: aliased and truth images differ in shape");
  }
  ArtifactPair p;
  p.input_mag = magnitude(aliased.data);
  p.input_phase = phase(aliased.data);
  p.label_mag = p.input_mag - magnitude(truth.data);
  RealArray const truth_phase = phase(truth.data);
  p.label_phase.resize(truth.rows(), truth.cols());
  for (Index i = 0; i < p.label_phase.size(); i++) {
    p.label_phase(i) = wrap_phase(p.input_phase(i) - truth_phase(i));
  }
  return p;
}

RealArray ssos(std::span<ComplexImage const> coils)
{
  if (coils.empty()) {
    throw std::invalid_argument("ssos: no coil images");
  }
  RealArray acc = RealArray::Zero(coils[0].rows(), coils[0].cols());
  for (auto const &c : coils) {
    if (c.rows() != acc.rows() || c.cols() != acc.cols()) {
      throw std::invalid_argument("ssos: coil images differ in shape");
    }
    acc += c.data.abs2();
  }
  return acc.sqrt();
}

} // namespace csmri
