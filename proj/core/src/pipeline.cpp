#include "csmri/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace csmri {

std::string ItemInfo::id() const
{
  return "p" + std::to_string(phantom) + "_c" + std::to_string(coil) + "_t" + std::to_string(transform);
}

int default_train_count(int n_phantoms) { return static_cast<int>(std::lround(n_phantoms * 66.0 / 81.0)); }

DatasetItem simulate_item(ComplexImage const &truth, SamplingMask const &mask, ItemInfo info)
{
  ComplexImage aliased = zero_fill_recon(subsample(dft2(truth), mask));
  ArtifactPair pair = compute_artifact(aliased, truth);
  return {std::move(pair), std::move(aliased), truth, info};
}

DatasetSplit build_dataset(std::span<std::vector<ComplexImage> const> phantoms, SamplingMask const &mask,
                           DatasetOptions const &opts)
{
  if (phantoms.empty()) {
    throw std::invalid_argument("build_dataset: no phantoms");
  }
  int const n = static_cast<int>(phantoms.size());
  int const n_train = opts.train_count.value_or(default_train_count(n));
  if (n_train < 0 || n_train > n) {
    throw std::invalid_argument("build_dataset: train count outside [0, phantom count]");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opts.split_seed);
  for (int i = n; i > 1; i--) {
    std::swap(order[i - 1], order[rng() % static_cast<std::uint64_t>(i)]);
  }

  DatasetSplit split;
  split.split_seed = opts.split_seed;
  split.train_phantoms.assign(order.begin(), order.begin() + n_train);
  split.test_phantoms.assign(order.begin() + n_train, order.end());
  std::sort(split.train_phantoms.begin(), split.train_phantoms.end());
  std::sort(split.test_phantoms.begin(), split.test_phantoms.end());

  for (int p : split.train_phantoms) {
    for (auto const &coil : phantoms[p]) {
      int const transforms = opts.augment ? kTransformCount : 1;
      for (int t = 0; t < transforms; t++) {
        split.train.push_back(simulate_item(augment(coil, t), mask, {p, coil.coil, t}));
      }
    }
  }
  for (int p : split.test_phantoms) {
    for (auto const &coil : phantoms[p]) {
      split.test.push_back(simulate_item(coil, mask, {p, coil.coil, 0}));
    }
  }
  return split;
}

double nmse(RealArray const &x, RealArray const &ref)
{
  if (x.rows() != ref.rows() || x.cols() != ref.cols()) {
    throw std::invalid_argument("nmse: shape mismatch");
  }
  double const denom = ref.square().sum();
  if (!(denom > 0.0)) {
    throw std::invalid_argument("nmse: reference has zero norm");
  }
  return (x - ref).square().sum() / denom;
}

double masked_phase_nmse(RealArray const &phase, RealArray const &ref_phase, BoolArray const &mask)
{
  if (phase.rows() != ref_phase.rows() || phase.cols() != ref_phase.cols() || mask.rows() != phase.rows() ||
      mask.cols() != phase.cols()) {
    throw std::invalid_argument("masked_phase_nmse: shape mismatch");
  }
  double num = 0.0;
  double den = 0.0;
  for (Index i = 0; i < phase.size(); i++) {
    if (mask(i)) {
      double const d = wrap_phase(phase(i) - ref_phase(i));
      num += d * d;
      den += ref_phase(i) * ref_phase(i);
    }
  }
  if (!(den > 0.0)) {
    throw std::invalid_argument("masked_phase_nmse: reference has zero norm inside the mask");
  }
  return num / den;
}

PhaseMask make_phase_mask(RealArray const &recon_mag, double threshold_fraction)
{
  if ((recon_mag < 0.0).any()) {
    throw std::invalid_argument("make_phase_mask: magnitude image has negative values");
  }
  double const peak = recon_mag.maxCoeff();
  if (peak <= 0.0) {
    return {BoolArray::Constant(recon_mag.rows(), recon_mag.cols(), false), threshold_fraction};
  }
  return {recon_mag >= threshold_fraction * peak, threshold_fraction};
}

double label_scale(std::span<TrainSample const> data)
{
  double acc = 0.0;
  double count = 0.0;
  for (auto const &s : data) {
    acc += s.target.square().sum();
    count += static_cast<double>(s.target.size());
  }
  return acc > 0.0 ? std::sqrt(count / acc) : 1.0;
}

template <typename Real>
ArtifactPredictor network_predictor(Network<Real> &net, double scale)
{
  return [&net, scale](RealArray const &x, int) {
    std::vector<RealArray> in{x * scale};
    return RealArray(predict(net, std::span<RealArray const>(in), 1).front() / scale);
  };
}

namespace {

template <typename Real>
std::vector<RealArray> predict_all(Network<Real> &net, std::vector<RealArray> const &inputs, double scale)
{
  std::vector<RealArray> scaled;
  scaled.reserve(inputs.size());
  for (auto const &x : inputs) {
    scaled.push_back(x * scale);
  }
  auto out = predict(net, std::span<RealArray const>(scaled), 8);
  for (auto &y : out) {
    y /= scale;
  }
  return out;
}

template <typename Real>
TrainedNetwork<Real> fit(std::vector<TrainSample> train, NetworkSpec const &spec, TrainHyper const &hyper,
                         std::function<double(Network<Real> &, double)> const &evaluate,
                         TrainControl<Real> const &control)
{
  if (train.empty()) {
    throw std::invalid_argument("training set is empty");
  }
  TrainedNetwork<Real> out = control.resume ? control.resume->trained
                                            : TrainedNetwork<Real>{Network<Real>(spec, hyper.seed), {}, 1.0};
  SgdState<Real> state = control.resume ? control.resume->state : SgdState<Real>{};
  if (control.resume) {
    if (format_network_spec(out.net.spec()) != format_network_spec(spec)) {
      throw std::invalid_argument("resume: saved network spec differs from the requested one");
    }
    if (static_cast<int>(out.curve.size()) > hyper.epochs) {
      throw std::invalid_argument("resume: saved run has more epochs than requested");
    }
  } else if (hyper.standardize) {
    out.scale = label_scale(train);
  }
  if (hyper.standardize) {
    for (auto &s : train) {
      s.input *= out.scale;
      s.target *= out.scale;
    }
  }
  TrainOptions const opts{hyper.batch_size, hyper.momentum};
  for (int e = static_cast<int>(out.curve.size()); e < hyper.epochs; e++) {
    double const lr = log_lr(e, hyper.epochs, hyper.lr_start, hyper.lr_end);
    double const loss =
      train_epoch(out.net, std::span<TrainSample const>(train), state, lr, hyper.seed * 7919 + e + 1, opts);
    CurveRow const row{e, lr, loss, evaluate(out.net, out.scale)};
    out.curve.push_back(row);
    if (control.on_epoch) {
      control.on_epoch(row);
    }
    if (control.checkpoint) {
      control.checkpoint(out, state);
    }
  }
  return out;
}

RealArray masked(RealArray const &x, BoolArray const &mask) { return mask.select(x, 0.0); }

} // namespace

template <typename Real>
TrainedNetwork<Real> train_magnitude_network(DatasetSplit const &split, NetworkSpec const &spec,
                                             TrainHyper const &hyper, TrainControl<Real> const &control)
{
  bool const artifact = hyper.target == LearningTarget::Artifact;
  std::vector<TrainSample> train;
  train.reserve(split.train.size());
  for (auto const &it : split.train) {
    train.push_back({it.pair.input_mag, artifact ? it.pair.label_mag : it.pair.input_mag - it.pair.label_mag});
  }
  std::vector<RealArray> test_in;
  std::vector<RealArray> test_truth;
  for (auto const &it : split.test) {
    test_in.push_back(it.pair.input_mag);
    test_truth.push_back(it.pair.input_mag - it.pair.label_mag);
  }
  auto const evaluate = [&](Network<Real> &net, double scale) {
    if (test_in.empty()) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    auto const pred = predict_all(net, test_in, scale);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); i++) {
      RealArray const rec = artifact ? RealArray(test_in[i] - pred[i]) : pred[i];
      acc += nmse(rec, test_truth[i]);
    }
    return acc / static_cast<double>(pred.size());
  };
  return fit<Real>(std::move(train), spec, hyper, evaluate, control);
}

std::vector<PhaseMask> phase_masks(std::span<DatasetItem const> items, ArtifactPredictor const &mag_predictor,
                                   double threshold_fraction)
{
  std::vector<PhaseMask> out;
  out.reserve(items.size());
  for (auto const &it : items) {
    RealArray const rec = (it.pair.input_mag - mag_predictor(it.pair.input_mag, it.info.coil)).max(0.0);
    out.push_back(make_phase_mask(rec, threshold_fraction));
  }
  return out;
}

template <typename Real>
TrainedNetwork<Real> train_phase_network(DatasetSplit const &split, std::span<PhaseMask const> train_masks,
                                         std::span<PhaseMask const> test_masks, NetworkSpec const &spec,
                                         TrainHyper const &hyper, TrainControl<Real> const &control)
{
  if (train_masks.size() != split.train.size() || test_masks.size() != split.test.size()) {
    throw std::invalid_argument("train_phase_network: need one phase mask per training and test image");
  }
  std::vector<TrainSample> train;
  train.reserve(split.train.size());
  for (std::size_t i = 0; i < split.train.size(); i++) {
    auto const &p = split.train[i].pair;
    auto const &m = train_masks[i].mask;
    train.push_back({masked(p.input_phase, m), masked(p.label_phase, m)});
  }
  std::vector<RealArray> test_in;
  std::vector<RealArray> test_truth;
  for (std::size_t i = 0; i < split.test.size(); i++) {
    test_in.push_back(masked(split.test[i].pair.input_phase, test_masks[i].mask));
    test_truth.push_back(phase(split.test[i].truth.data));
  }
  auto const evaluate = [&](Network<Real> &net, double scale) {
    if (test_in.empty()) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    auto const pred = predict_all(net, test_in, scale);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); i++) {
      RealArray const rec = (test_in[i] - pred[i]).unaryExpr([](double v) { return wrap_phase(v); });
      acc += masked_phase_nmse(rec, test_truth[i], test_masks[i].mask);
    }
    return acc / static_cast<double>(pred.size());
  };
  return fit<Real>(std::move(train), spec, hyper, evaluate, control);
}

double zero_filled_nmse(std::span<DatasetItem const> items)
{
  if (items.empty()) {
    throw std::invalid_argument("zero_filled_nmse: no items");
  }
  double acc = 0.0;
  for (auto const &it : items) {
    acc += nmse(it.pair.input_mag, it.pair.input_mag - it.pair.label_mag);
  }
  return acc / static_cast<double>(items.size());
}

double zero_filled_phase_nmse(std::span<DatasetItem const> items, std::span<PhaseMask const> masks)
{
  if (items.empty() || items.size() != masks.size()) {
    throw std::invalid_argument("zero_filled_phase_nmse: need one mask per item");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < items.size(); i++) {
    acc += masked_phase_nmse(items[i].pair.input_phase, phase(items[i].truth.data), masks[i].mask);
  }
  return acc / static_cast<double>(items.size());
}

ReconResult reconstruct(ArtifactPredictor const &mag_net, ArtifactPredictor const &phase_net,
                        std::span<ComplexImage const> aliased_coils, std::span<ComplexImage const> truth_coils,
                        double threshold_fraction)
{
  if (!mag_net || !phase_net) {
    throw std::invalid_argument("reconstruct: magnitude and phase networks are required");
  }
  if (aliased_coils.empty()) {
    throw std::invalid_argument("reconstruct: no coil images");
  }
  if (!truth_coils.empty() && truth_coils.size() != aliased_coils.size()) {
    throw std::invalid_argument("reconstruct: truth and aliased coil counts differ");
  }
  auto const t0 = std::chrono::steady_clock::now();
  ReconResult res;
  for (auto const &coil : aliased_coils) {
    if (coil.rows() != aliased_coils[0].rows() || coil.cols() != aliased_coils[0].cols()) {
      throw std::invalid_argument("reconstruct: coil images differ in shape");
    }
    RealArray const in_mag = magnitude(coil.data);
    RealArray const mag = (in_mag - mag_net(in_mag, coil.coil)).max(0.0);
    PhaseMask pm = make_phase_mask(mag, threshold_fraction);
    RealArray const in_phase = masked(phase(coil.data), pm.mask);
    RealArray const phs =
      masked((in_phase - phase_net(in_phase, coil.coil)).unaryExpr([](double v) { return wrap_phase(v); }), pm.mask);
    ComplexImage rec{CxArray(coil.rows(), coil.cols()), coil.coil};
    for (Index i = 0; i < rec.data.size(); i++) {
      rec.data(i) = std::polar(mag(i), phs(i));
    }
    res.coils.push_back(std::move(rec));
    res.masks.push_back(std::move(pm));
  }
  res.ssos = ssos(res.coils);
  auto const t1 = std::chrono::steady_clock::now();
  res.wall_time = std::chrono::duration<double>(t1 - t0).count();

  double const nan = std::numeric_limits<double>::quiet_NaN();
  res.nmse_mag = nan;
  res.nmse_zero_fill = nan;
  if (!truth_coils.empty()) {
    RealArray const truth_ssos = ssos(truth_coils);
    res.nmse_mag = nmse(res.ssos, truth_ssos);
    res.nmse_zero_fill = nmse(ssos(aliased_coils), truth_ssos);
    for (std::size_t c = 0; c < res.coils.size(); c++) {
      bool const any = res.masks[c].mask.any();
      res.nmse_phase.push_back(any ? masked_phase_nmse(phase(res.coils[c].data), phase(truth_coils[c].data),
                                                       res.masks[c].mask)
                                   : nan);
    }
  }
  return res;
}

template ArtifactPredictor network_predictor(Network<float> &, double);
template ArtifactPredictor network_predictor(Network<double> &, double);
template TrainedNetwork<float> train_magnitude_network(DatasetSplit const &, NetworkSpec const &, TrainHyper const &,
                                                       TrainControl<float> const &);
template TrainedNetwork<double> train_magnitude_network(DatasetSplit const &, NetworkSpec const &, TrainHyper const &,
                                                        TrainControl<double> const &);
template TrainedNetwork<float> train_phase_network(DatasetSplit const &, std::span<PhaseMask const>,
                                                   std::span<PhaseMask const>, NetworkSpec const &,
                                                   TrainHyper const &, TrainControl<float> const &);
template TrainedNetwork<double> train_phase_network(DatasetSplit const &, std::span<PhaseMask const>,
                                                    std::span<PhaseMask const>, NetworkSpec const &,
                                                    TrainHyper const &, TrainControl<double> const &);

} // namespace csmri
