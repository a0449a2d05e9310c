#include "csmri/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace csmri {

template <typename Real>
void sgd_momentum_step(std::span<BasicTensor<Real> *const> params, std::span<BasicTensor<Real> const *const> grads,
                       SgdState<Real> &state, double lr, double momentum)
{
  if (params.size() != grads.size()) {
    throw std::invalid_argument("sgd_momentum_step: parameter and gradient counts differ");
  }
  if (state.velocity.empty()) {
    for (auto const *p : params) {
      state.velocity.emplace_back(p->shape());
    }
  }
  if (state.velocity.size() != params.size()) {
    throw std::invalid_argument("sgd_momentum_step: optimizer state belongs to a different parameter set");
  }
  for (std::size_t k = 0; k < params.size(); k++) {
    auto &p = *params[k];
    auto const &g = *grads[k];
    auto &v = state.velocity[k];
    if (!(p.shape() == g.shape()) || !(p.shape() == v.shape())) {
      throw std::invalid_argument("sgd_momentum_step: shape mismatch for parameter " + std::to_string(k));
    }
    for (std::size_t i = 0; i < p.size(); i++) {
      v[i] = static_cast<Real>(momentum * v[i] - lr * g[i]);
      p[i] += v[i];
    }
  }
}

template <typename Real>
LossResult<Real> mse_loss(BasicTensor<Real> const &pred, BasicTensor<Real> const &target)
{
  if (!(pred.shape() == target.shape())) {
    throw std::invalid_argument("mse_loss: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  }
  LossResult<Real> r{0.0, BasicTensor<Real>(pred.shape())};
  double const count = static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); i++) {
    double const d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    r.grad[i] = static_cast<Real>(2.0 * d / count);
  }
  r.loss = acc / count;
  return r;
}

double log_lr(int epoch, int epochs, double lr_start, double lr_end)
{
  if (epochs <= 1 || lr_start == lr_end) {
    return lr_start;
  }
  if (!(lr_start > 0.0 && lr_end > 0.0)) {
    throw std::invalid_argument("log_lr: a log-spaced schedule needs positive endpoints");
  }
  double const t = static_cast<double>(epoch) / (epochs - 1);
  return std::pow(10.0, std::log10(lr_start) + t * (std::log10(lr_end) - std::log10(lr_start)));
}

template void sgd_momentum_step(std::span<BasicTensor<float> *const>, std::span<BasicTensor<float> const *const>,
                                SgdState<float> &, double, double);
template void sgd_momentum_step(std::span<BasicTensor<double> *const>, std::span<BasicTensor<double> const *const>,
                                SgdState<double> &, double, double);
template LossResult<float> mse_loss(BasicTensor<float> const &, BasicTensor<float> const &);
template LossResult<double> mse_loss(BasicTensor<double> const &, BasicTensor<double> const &);

} // namespace csmri
