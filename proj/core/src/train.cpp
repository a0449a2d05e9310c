#include "csmri/train.hpp"

#include <numeric>
#include <random>
#include <stdexcept>

namespace csmri {

template <typename Real>
BasicTensor<Real> stack_images(std::span<RealArray const *const> images)
{
  if (images.empty()) {
    throw std::invalid_argument("stack_images: no images");
  }
  int const H = static_cast<int>(images[0]->rows());
  int const W = static_cast<int>(images[0]->cols());
  BasicTensor<Real> t({static_cast<int>(images.size()), 1, H, W});
  for (std::size_t n = 0; n < images.size(); n++) {
    auto const &img = *images[n];
    if (img.rows() != H || img.cols() != W) {
      throw std::invalid_argument("stack_images: images differ in shape");
    }
    Real *dst = t.sample(static_cast<int>(n));
    for (Index i = 0; i < img.size(); i++) {
      dst[i] = static_cast<Real>(img(i));
    }
  }
  return t;
}

template <typename Real>
RealArray unstack_image(BasicTensor<Real> const &t, int n)
{
  RealArray img(t.shape().h, t.shape().w);
  Real const *src = t.plane(n, 0);
  for (Index i = 0; i < img.size(); i++) {
    img(i) = src[i];
  }
  return img;
}

namespace {

// Fisher-Yates with a fixed draw rule so the order does not depend on the standard library.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed)
{
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; i--) {
    std::size_t const j = rng() % i;
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

} // namespace

template <typename Real>
double train_epoch(Network<Real> &net, std::span<TrainSample const> dataset, SgdState<Real> &state, double lr,
                   std::uint64_t epoch_seed, TrainOptions const &opts)
{
  if (dataset.empty()) {
    throw std::invalid_argument("train_epoch: empty dataset");
  }
  if (opts.batch_size < 1) {
    throw std::invalid_argument("train_epoch: batch size must be positive");
  }
  auto const order = shuffled_order(dataset.size(), epoch_seed);
  double total = 0.0;
  int batches = 0;
  std::vector<RealArray const *> in_ptrs, tgt_ptrs;
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    std::size_t const end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
    in_ptrs.clear();
    tgt_ptrs.clear();
    for (std::size_t i = start; i < end; i++) {
      in_ptrs.push_back(&dataset[order[i]].input);
      tgt_ptrs.push_back(&dataset[order[i]].target);
    }
    auto const x = stack_images<Real>(in_ptrs);
    auto const y = stack_images<Real>(tgt_ptrs);
    auto const pred = net.forward(x, BNMode::Train);
    auto const loss = mse_loss(pred, y);
    net.backward(loss.grad);

    auto slots = net.parameters();
    std::vector<BasicTensor<Real> *> params;
    std::vector<BasicTensor<Real> const *> grads;
    for (auto const &s : slots) {
      params.push_back(s.value);
      grads.push_back(s.grad);
    }
    sgd_momentum_step<Real>(params, grads, state, lr, opts.momentum);
    total += loss.loss;
    batches++;
  }
  return total / batches;
}

template <typename Real>
std::vector<RealArray> predict(Network<Real> &net, std::span<RealArray const> inputs, int batch_size)
{
  std::vector<RealArray> out;
  out.reserve(inputs.size());
  std::vector<RealArray const *> ptrs;
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    std::size_t const end = std::min(inputs.size(), start + static_cast<std::size_t>(batch_size));
    ptrs.clear();
    for (std::size_t i = start; i < end; i++) {
      ptrs.push_back(&inputs[i]);
    }
    auto const y = net.forward(stack_images<Real>(ptrs), BNMode::Infer);
    for (int n = 0; n < y.shape().n; n++) {
      out.push_back(unstack_image(y, n));
    }
  }
  return out;
}

template <typename Real>
double evaluation_loss(Network<Real> &net, std::span<TrainSample const> dataset, int batch_size)
{
  if (dataset.empty()) {
    throw std::invalid_argument("evaluation_loss: empty dataset");
  }
  std::vector<RealArray> inputs;
  inputs.reserve(dataset.size());
  for (auto const &s : dataset) {
    inputs.push_back(s.input);
  }
  auto const preds = predict(net, std::span<RealArray const>(inputs), batch_size);
  double acc = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < dataset.size(); i++) {
    acc += (preds[i] - dataset[i].target).square().sum();
    count += static_cast<double>(preds[i].size());
  }
  return acc / count;
}

#define CSMRI_INSTANTIATE_TRAIN(R)                                                                                     \
  template double train_epoch(Network<R> &, std::span<TrainSample const>, SgdState<R> &, double, std::uint64_t,        \
                              TrainOptions const &);                                                                   \
  template std::vector<RealArray> predict(Network<R> &, std::span<RealArray const>, int);                              \
  template double evaluation_loss(Network<R> &, std::span<TrainSample const>, int);                                    \
  template BasicTensor<R> stack_images(std::span<RealArray const *const>);                                             \
  template RealArray unstack_image(BasicTensor<R> const &, int);

CSMRI_INSTANTIATE_TRAIN(float)
CSMRI_INSTANTIATE_TRAIN(double)

} // namespace csmri
