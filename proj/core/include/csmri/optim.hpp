#pragma once

#include "csmri/tensor.hpp"

#include <span>
#include <vector>

namespace csmri {

template <typename Real>
struct SgdState
{
  std::vector<BasicTensor<Real>> velocity;
};

// v <- momentum * v - lr * g;  p <- p + v.  Velocities are created on first use.
template <typename Real>
void sgd_momentum_step(std::span<BasicTensor<Real> *const> params, std::span<BasicTensor<Real> const *const> grads,
                       SgdState<Real> &state, double lr, double momentum = 0.9);

template <typename Real>
struct LossResult
{
  double loss = 0.0;
  BasicTensor<Real> grad;
};

// Mean squared error over all elements and its gradient 2 (pred - target) / count.
template <typename Real>
LossResult<Real> mse_loss(BasicTensor<Real> const &pred, BasicTensor<Real> const &target);

// Log-linear decay from lr_start at epoch 0 to lr_end at epoch epochs - 1.
double log_lr(int epoch, int epochs, double lr_start, double lr_end);

} // namespace csmri
