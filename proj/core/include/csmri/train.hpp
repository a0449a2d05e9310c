#pragma once

#include "csmri/kspace.hpp"
#include "csmri/optim.hpp"
#include "csmri/unet.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace csmri {

struct TrainSample
{
  RealArray input;
  RealArray target;
};

struct TrainOptions
{
  int batch_size = 3;
  double momentum = 0.9;
};

// One pass over a shuffled copy of the dataset: forward, MSE, backward and SGD-momentum update per
// mini-batch. Returns the mean mini-batch loss. The shuffle is a pure function of epoch_seed.
template <typename Real>
double train_epoch(Network<Real> &net, std::span<TrainSample const> dataset, SgdState<Real> &state, double lr,
                   std::uint64_t epoch_seed, TrainOptions const &opts = {});

// Inference-mode predictions, batch_size images at a time.
template <typename Real>
std::vector<RealArray> predict(Network<Real> &net, std::span<RealArray const> inputs, int batch_size = 8);

// Inference-mode MSE over the whole dataset.
template <typename Real>
double evaluation_loss(Network<Real> &net, std::span<TrainSample const> dataset, int batch_size = 8);

template <typename Real>
BasicTensor<Real> stack_images(std::span<RealArray const *const> images);

template <typename Real>
RealArray unstack_image(BasicTensor<Real> const &t, int n);

} // namespace csmri
