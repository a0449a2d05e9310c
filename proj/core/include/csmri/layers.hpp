#pragma once

#include "csmri/tensor.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace csmri {

// Convolution weights laid out (n_out, n_in, k1, k2); bias is (1, n_out, 1, 1).
template <typename Real>
struct ConvParams
{
  BasicTensor<Real> weight;
  BasicTensor<Real> bias;

  int out_channels() const { return weight.shape().n; }
  int in_channels() const { return weight.shape().c; }
  int kernel_h() const { return weight.shape().h; }
  int kernel_w() const { return weight.shape().w; }
};

template <typename Real>
struct ConvGrads
{
  BasicTensor<Real> dx;
  BasicTensor<Real> dweight;
  BasicTensor<Real> dbias;
};

// Cross-correlation. 3x3 kernels pad by one so the output keeps H x W, 1x1 kernels do not pad.
template <typename Real>
BasicTensor<Real> conv2d(BasicTensor<Real> const &x, ConvParams<Real> const &p);

template <typename Real>
ConvGrads<Real> conv2d_backward(BasicTensor<Real> const &x, ConvParams<Real> const &p, BasicTensor<Real> const &dy);

// Normal(0, 2 / (fan_in + fan_out)) weights with fan = k1 * k2 * channels, zero bias.
template <typename Real>
ConvParams<Real> xavier_init(int k1, int k2, int n_in, int n_out, std::uint64_t seed);

enum class BNMode
{
  Train,
  Infer
};

// gamma/beta/running statistics are (1, C, 1, 1).
template <typename Real>
struct BNParams
{
  BasicTensor<Real> gamma;
  BasicTensor<Real> beta;
  BasicTensor<Real> running_mean;
  BasicTensor<Real> running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;

  static BNParams identity(int channels);
  int channels() const { return gamma.shape().c; }
};

template <typename Real>
struct BNCache
{
  BasicTensor<Real> xhat;
  std::vector<double> inv_std;
};

template <typename Real>
struct BNGrads
{
  BasicTensor<Real> dx;
  BasicTensor<Real> dgamma;
  BasicTensor<Real> dbeta;
};

// Train mode normalises with batch statistics and updates the running statistics in p.
template <typename Real>
BasicTensor<Real> batch_norm(BasicTensor<Real> const &x, BNParams<Real> &p, BNMode mode, BNCache<Real> *cache = nullptr);

// Gradient of the train-mode transform, using the cache filled by batch_norm.
template <typename Real>
BNGrads<Real> batch_norm_backward(BasicTensor<Real> const &dy, BNParams<Real> const &p, BNCache<Real> const &cache);

template <typename Real>
BasicTensor<Real> relu(BasicTensor<Real> const &x);

// Passes dy where x > 0; the subgradient at 0 is 0.
template <typename Real>
BasicTensor<Real> relu_backward(BasicTensor<Real> const &x, BasicTensor<Real> const &dy);

// Argmax position inside each 2x2 patch: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
struct PoolSwitches
{
  Shape pooled;
  std::vector<std::uint8_t> index;

  Shape source() const { return {pooled.n, pooled.c, pooled.h * 2, pooled.w * 2}; }
};

template <typename Real>
std::pair<BasicTensor<Real>, PoolSwitches> max_pool_2x2(BasicTensor<Real> const &x);

template <typename Real>
BasicTensor<Real> max_pool_2x2_backward(BasicTensor<Real> const &dy, PoolSwitches const &sw);

template <typename Real>
BasicTensor<Real> unpool_2x2(BasicTensor<Real> const &x, PoolSwitches const &sw);

template <typename Real>
BasicTensor<Real> unpool_2x2_backward(BasicTensor<Real> const &dy, PoolSwitches const &sw);

// Nearest-neighbour 2x upsampling, the switch-free alternative to unpool_2x2.
template <typename Real>
BasicTensor<Real> upsample_nearest_2x(BasicTensor<Real> const &x);

template <typename Real>
BasicTensor<Real> upsample_nearest_2x_backward(BasicTensor<Real> const &dy);

template <typename Real>
BasicTensor<Real> concat_channels(BasicTensor<Real> const &a, BasicTensor<Real> const &b);

// Splits dy into the parts belonging to the first a_channels channels and the rest.
template <typename Real>
std::pair<BasicTensor<Real>, BasicTensor<Real>> concat_channels_backward(BasicTensor<Real> const &dy, int a_channels);

template <typename Real>
BasicTensor<Real> add(BasicTensor<Real> const &a, BasicTensor<Real> const &b);

} // namespace csmri
