#pragma once

#include "csmri/homology.hpp"
#include "csmri/tools/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace csmri::tools {

// Output layout under cfg.out_dir: dataset/, train/, recon/, barcode/ and rf/, each holding the
// config.txt it ran with.
std::filesystem::path dataset_dir(ExperimentConfig const &cfg);
std::filesystem::path train_dir(ExperimentConfig const &cfg);
std::filesystem::path recon_dir(ExperimentConfig const &cfg);
std::filesystem::path barcode_dir(ExperimentConfig const &cfg);
std::filesystem::path rf_dir(ExperimentConfig const &cfg);

// Truth coil images of phantom i, identical wherever they are generated.
std::vector<ComplexImage> config_phantom(ExperimentConfig const &cfg, int index);

struct LoadedDataset
{
  std::vector<std::vector<ComplexImage>> phantoms;
  SamplingMask mask;
  std::vector<int> train_phantoms;
  std::vector<int> test_phantoms;
};

// Writes the truth and aliased coil images, their labels, the mask and the split as PTF files plus
// dataset/manifest.txt. Augmented copies are made at training time.
void cmd_simulate(ExperimentConfig const &cfg, std::ostream &log);

// Throws when the dataset is missing or was simulated with different acquisition settings.
LoadedDataset load_dataset(ExperimentConfig const &cfg);

// Trains the magnitude network, then the phase network when cfg.train_phase. Every epoch is
// checkpointed; a rerun with the same config continues after the last finished epoch.
void cmd_train(ExperimentConfig const &cfg, std::ostream &log);

enum class ReconSource
{
  Networks,
  Oracle,    // the true artifacts
  ZeroModel  // predicts no artifact, i.e. the zero-filled images
};

struct ReconSummary
{
  std::vector<int> phantoms;
  std::vector<double> nmse_mag;
  std::vector<double> nmse_zero_fill;
  std::vector<double> nmse_phase;
  std::vector<double> wall_time;
};

// Reconstructs every test phantom and writes metrics.csv, timing.csv and PGM images.
ReconSummary cmd_reconstruct(ExperimentConfig const &cfg, ReconSource source, std::ostream &log);

struct CloudSummary
{
  std::string name;
  int images = 0;
  double auc = 0.0;
  Barcode barcode;
};

// Image, uniform+ACS artifact and Gaussian artifact clouds over the first barcode_images phantoms.
std::vector<CloudSummary> barcode_clouds(ExperimentConfig const &cfg);

// Writes auc.csv plus barcode_<cloud>.csv and curve_<cloud>.csv for every cloud.
std::vector<CloudSummary> cmd_barcode(ExperimentConfig const &cfg, std::ostream &log);

// Writes rf/rf.csv and prints the same table.
void cmd_rf(ExperimentConfig const &cfg, std::ostream &out);

} // namespace csmri::tools
