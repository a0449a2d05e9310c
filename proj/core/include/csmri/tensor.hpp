#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csmri {

// (batch, channel, height, width), row-major with width fastest.
struct Shape
{
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t count() const
  {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(Shape const &) const = default;
  std::string str() const
  {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

template <typename Real>
class BasicTensor
{
public:
  using value_type = Real;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, Real fill = Real(0))
    : shape_(shape)
    , data_(shape.count(), fill)
  {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw std::invalid_argument("tensor: negative dimension in " + shape.str());
    }
  }

  Shape const &shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real *data() { return data_.data(); }
  Real const *data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<Real const> values() const { return data_; }

  Real &operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const
  {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  Real &operator()(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  Real operator()(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  // Contiguous (C, H, W) block of one sample and (H, W) plane of one channel.
  Real *sample(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane(); }
  Real const *sample(int n) const { return data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane(); }
  Real *plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  Real const *plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const
  {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
  }

private:
  Shape shape_;
  std::vector<Real> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(BasicTensor<From> const &x)
{
  BasicTensor<To> out(x.shape());
  std::transform(x.values().begin(), x.values().end(), out.values().begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

// Finite check after every op in debug builds.
template <typename Real>
void debug_check_finite([[maybe_unused]] BasicTensor<Real> const &x, [[maybe_unused]] char const *op)
{
#ifndef NDEBUG
  if (!x.all_finite()) {
    throw std::runtime_error(std::string(op) + ": produced non-finite values");
  }
#endif
}

} // namespace csmri
