#pragma once

#include "csmri/kspace.hpp"
#include "csmri/train.hpp"
#include "csmri/unet.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace csmri {

// Provenance of one dataset item.
struct ItemInfo
{
  int phantom = 0;
  int coil = 0;
  int transform = 0;

  std::string id() const;
};

struct DatasetItem
{
  ArtifactPair pair;
  ComplexImage aliased;
  ComplexImage truth;
  ItemInfo info;
};

struct DatasetSplit
{
  std::vector<DatasetItem> train;
  std::vector<DatasetItem> test;
  std::vector<int> train_phantoms;
  std::vector<int> test_phantoms;
  std::uint64_t split_seed = 0;
};

// Training phantoms for n phantoms at the 66:15 ratio, rounded.
int default_train_count(int n_phantoms);

struct DatasetOptions
{
  bool augment = false;
  std::uint64_t split_seed = 0;
  std::optional<int> train_count; // defaults to default_train_count
};

// Per coil image: dft2, subsample, zero-fill, compute_artifact. Phantoms are split (not items),
// and with augment every training coil image is expanded through all kTransformCount transforms
// before the k-space simulation.
DatasetSplit build_dataset(std::span<std::vector<ComplexImage> const> phantoms, SamplingMask const &mask,
                           DatasetOptions const &opts);

// Simulates one coil image through the acquisition and returns (aliased, truth).
DatasetItem simulate_item(ComplexImage const &truth, SamplingMask const &mask, ItemInfo info);

// ||x - ref||^2 / ||ref||^2.
double nmse(RealArray const &x, RealArray const &ref);

// NMSE over the pixels where mask is true, using wrapped phase differences.
double masked_phase_nmse(RealArray const &phase, RealArray const &ref_phase, BoolArray const &mask);

struct PhaseMask
{
  BoolArray mask;
  double threshold_fraction = 0.05;
};

// True where recon_mag >= threshold_fraction * max(recon_mag). All false for an all-zero image.
PhaseMask make_phase_mask(RealArray const &recon_mag, double threshold_fraction = 0.05);

enum class LearningTarget
{
  Artifact,
  Image
};

struct TrainHyper
{
  int epochs = 50;
  int batch_size = 3;
  double lr_start = 1e-2;
  double lr_end = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  LearningTarget target = LearningTarget::Artifact;
  // Multiply inputs and labels by one factor that gives the training labels unit RMS.
  bool standardize = true;
};

struct CurveRow
{
  int epoch;
  double lr;
  double train_loss;
  double test_nmse;
};

template <typename Real>
struct TrainedNetwork
{
  Network<Real> net;
  std::vector<CurveRow> curve;
  double scale = 1.0; // data factor applied before the network, undone after it
};

// 1 / RMS over every label pixel, or 1 when the labels are all zero.
double label_scale(std::span<TrainSample const> data);

// Artifact image predicted for one single-channel input image of the given coil.
using ArtifactPredictor = std::function<RealArray(RealArray const &, int coil)>;

// Predicts net(scale * x) / scale.
template <typename Real>
ArtifactPredictor network_predictor(Network<Real> &net, double scale = 1.0);

// Called after every epoch with that epoch's curve row.
using EpochCallback = std::function<void(CurveRow const &)>;

// Everything needed to continue a run after its last finished epoch.
template <typename Real>
struct TrainProgress
{
  TrainedNetwork<Real> trained;
  SgdState<Real> state;
};

template <typename Real>
struct TrainControl
{
  EpochCallback on_epoch;
  // Receives the state after every epoch, e.g. to write a checkpoint.
  std::function<void(TrainedNetwork<Real> const &, SgdState<Real> const &)> checkpoint;
  // Continues from this state instead of a fresh network. Its curve length is the next epoch.
  std::optional<TrainProgress<Real>> resume;
};

// Trains input_mag -> label_mag (or -> |truth| for LearningTarget::Image). test_nmse is the mean per-item
// magnitude NMSE of the subtracted (or direct) reconstruction on the held-out items.
template <typename Real>
TrainedNetwork<Real> train_magnitude_network(DatasetSplit const &split, NetworkSpec const &spec,
                                             TrainHyper const &hyper, TrainControl<Real> const &control = {});

// Phase masks from the magnitude reconstructions |aliased| - predictor(|aliased|).
std::vector<PhaseMask> phase_masks(std::span<DatasetItem const> items, ArtifactPredictor const &mag_predictor,
                                   double threshold_fraction = 0.05);

// Trains (input_phase * mask) -> (label_phase * mask). test_nmse is the mean masked phase NMSE of
// wrap(input - prediction) against the true phase.
template <typename Real>
TrainedNetwork<Real> train_phase_network(DatasetSplit const &split, std::span<PhaseMask const> train_masks,
                                         std::span<PhaseMask const> test_masks, NetworkSpec const &spec,
                                         TrainHyper const &hyper, TrainControl<Real> const &control = {});

// Mean magnitude NMSE of the zero-filled inputs against the truth over a set of items.
double zero_filled_nmse(std::span<DatasetItem const> items);
double zero_filled_phase_nmse(std::span<DatasetItem const> items, std::span<PhaseMask const> masks);

struct ReconResult
{
  std::vector<ComplexImage> coils;
  std::vector<PhaseMask> masks;
  RealArray ssos;
  double nmse_mag = 0.0;           // SSOS against the true SSOS, NaN without truth
  double nmse_zero_fill = 0.0;     // zero-filled SSOS against the true SSOS, NaN without truth
  std::vector<double> nmse_phase;  // per coil, inside the phase mask
  double wall_time = 0.0;          // seconds
};

// Per coil: mag = max(|aliased| - mag_net(|aliased|), 0); mask from mag; phase = wrap(angle * mask -
// phase_net(angle * mask)) inside the mask and 0 outside; recombine and take the SSOS.
ReconResult reconstruct(ArtifactPredictor const &mag_net, ArtifactPredictor const &phase_net,
                        std::span<ComplexImage const> aliased_coils, std::span<ComplexImage const> truth_coils = {},
                        double threshold_fraction = 0.05);

} // namespace csmri
