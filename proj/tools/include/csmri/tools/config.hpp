#pragma once

#include "csmri/keyvalue.hpp"
#include "csmri/kspace.hpp"
#include "csmri/pipeline.hpp"
#include "csmri/unet.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace csmri::tools {

// Every knob of an experiment. Defaults are the desk-scale setup.
struct ExperimentConfig
{
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  // phantoms and acquisition
  int phantoms = 200;
  int image_size = 64;
  int coils = 4;
  MaskPattern mask = MaskPattern::UniformACS;
  int acceleration = 4;
  double acs_fraction = 0.05;
  int train_count = 165; // 0 selects the 66:15 ratio
  bool augment = false;

  // network
  NetworkMode network = NetworkMode::MultiScale;
  int n_scales = 3;
  int layers_per_stage = 4;
  int base_channels = 16;
  SkipMode skip = SkipMode::Concat;
  UnpoolMode unpool = UnpoolMode::Switches;

  // training
  int epochs = 50;
  int batch_size = 3;
  double lr_start = 1e-2;
  double lr_end = 1e-3;
  double momentum = 0.9;
  LearningTarget target = LearningTarget::Artifact;
  bool standardize = true;
  bool train_phase = true;
  bool f64 = false;
  double phase_threshold = 0.05;

  // homology
  int barcode_images = 60;
  int barcode_size = 32;

  // Unknown keys and malformed values throw std::invalid_argument.
  static ExperimentConfig from_key_values(KeyValues const &kv);
  static ExperimentConfig load(std::filesystem::path const &path);
  KeyValues to_key_values() const;

  void validate() const;

  NetworkSpec network_spec() const;
  TrainHyper train_hyper() const;
  DatasetOptions dataset_options() const;
  SamplingMask sampling_mask() const;
  SamplingMask sampling_mask(MaskPattern pattern) const;

  // Independent seeds for the random parts of a run, all derived from seed.
  std::uint64_t phantom_seed(int index) const;
  std::uint64_t mask_seed() const;
  std::uint64_t split_seed() const;
  std::uint64_t network_seed() const;
};

// Writes dir/config.txt with every key, defaults included.
void write_config(std::filesystem::path const &dir, ExperimentConfig const &cfg);

} // namespace csmri::tools
