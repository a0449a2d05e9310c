#include "csmri/tools/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

namespace csmri::tools {

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0)
{
  return splitmix(splitmix(seed ^ splitmix(stream)) + index);
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

template <typename E>
E pick(std::string const &key, std::string const &value, std::initializer_list<std::pair<char const *, E>> options)
{
  for (auto const &[name, e] : options) {
    if (value == name) {
      return e;
    }
  }
  std::string names;
  for (auto const &o : options) {
    names += names.empty() ? o.first : std::string("|") + o.first;
  }
  throw std::invalid_argument("config key '" + key + "': expected " + names + ", got '" + value + "'");
}

using Setter = std::function<void(ExperimentConfig &, std::string const &, std::string const &)>;

std::map<std::string, Setter> const &setters()
{
  using C = ExperimentConfig;
  static std::map<std::string, Setter> const table{
    {"out_dir", [](C &c, auto const &, auto const &v) { c.out_dir = v; }},
    {"seed", [](C &c, auto const &k, auto const &v) { c.seed = parse_u64(k, v); }},
    {"phantoms", [](C &c, auto const &k, auto const &v) { c.phantoms = parse_int(k, v); }},
    {"image_size", [](C &c, auto const &k, auto const &v) { c.image_size = parse_int(k, v); }},
    {"coils", [](C &c, auto const &k, auto const &v) { c.coils = parse_int(k, v); }},
    {"mask", [](C &c, auto const &k, auto const &v) {
       c.mask = pick<MaskPattern>(k, v, {{"uniform_acs", MaskPattern::UniformACS},
                                         {"gaussian", MaskPattern::GaussianRandom},
                                         {"full", MaskPattern::Full}});
     }},
    {"acceleration", [](C &c, auto const &k, auto const &v) { c.acceleration = parse_int(k, v); }},
    {"acs_fraction", [](C &c, auto const &k, auto const &v) { c.acs_fraction = parse_double(k, v); }},
    {"train_count", [](C &c, auto const &k, auto const &v) { c.train_count = parse_int(k, v); }},
    {"augment", [](C &c, auto const &k, auto const &v) { c.augment = parse_bool(k, v); }},
    {"network", [](C &c, auto const &k, auto const &v) {
       c.network = pick<NetworkMode>(k, v, {{"multi_scale", NetworkMode::MultiScale},
                                            {"single_scale", NetworkMode::SingleScale}});
     }},
    {"n_scales", [](C &c, auto const &k, auto const &v) { c.n_scales = parse_int(k, v); }},
    {"layers_per_stage", [](C &c, auto const &k, auto const &v) { c.layers_per_stage = parse_int(k, v); }},
    {"base_channels", [](C &c, auto const &k, auto const &v) { c.base_channels = parse_int(k, v); }},
    {"skip", [](C &c, auto const &k, auto const &v) {
       c.skip = pick<SkipMode>(k, v, {{"concat", SkipMode::Concat}, {"add", SkipMode::Add}});
     }},
    {"unpool", [](C &c, auto const &k, auto const &v) {
       c.unpool = pick<UnpoolMode>(k, v, {{"switches", UnpoolMode::Switches}, {"nearest", UnpoolMode::Nearest}});
     }},
    {"epochs", [](C &c, auto const &k, auto const &v) { c.epochs = parse_int(k, v); }},
    {"batch_size", [](C &c, auto const &k, auto const &v) { c.batch_size = parse_int(k, v); }},
    {"lr_start", [](C &c, auto const &k, auto const &v) { c.lr_start = parse_double(k, v); }},
    {"lr_end", [](C &c, auto const &k, auto const &v) { c.lr_end = parse_double(k, v); }},
    {"momentum", [](C &c, auto const &k, auto const &v) { c.momentum = parse_double(k, v); }},
    {"target", [](C &c, auto const &k, auto const &v) {
       c.target = pick<LearningTarget>(k, v, {{"artifact", LearningTarget::Artifact}, {"image", LearningTarget::Image}});
     }},
    {"standardize", [](C &c, auto const &k, auto const &v) { c.standardize = parse_bool(k, v); }},
    {"train_phase", [](C &c, auto const &k, auto const &v) { c.train_phase = parse_bool(k, v); }},
    {"f64", [](C &c, auto const &k, auto const &v) { c.f64 = parse_bool(k, v); }},
    {"phase_threshold", [](C &c, auto const &k, auto const &v) { c.phase_threshold = parse_double(k, v); }},
    {"barcode_images", [](C &c, auto const &k, auto const &v) { c.barcode_images = parse_int(k, v); }},
    {"barcode_size", [](C &c, auto const &k, auto const &v) { c.barcode_size = parse_int(k, v); }},
  };
  return table;
}

} // namespace

ExperimentConfig ExperimentConfig::from_key_values(KeyValues const &kv)
{
  ExperimentConfig cfg;
  for (auto const &[k, v] : kv) {
    auto it = setters().find(k);
    if (it == setters().end()) {
      throw std::invalid_argument("unknown config key '" + k + "'");
    }
    it->second(cfg, k, v);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(std::filesystem::path const &path)
{
  return from_key_values(read_key_values(path));
}

KeyValues ExperimentConfig::to_key_values() const
{
  return {
    {"out_dir", out_dir},
    {"seed", std::to_string(seed)},
    {"phantoms", std::to_string(phantoms)},
    {"image_size", std::to_string(image_size)},
    {"coils", std::to_string(coils)},
    {"mask", to_string(mask)},
    {"acceleration", std::to_string(acceleration)},
    {"acs_fraction", format_double(acs_fraction)},
    {"train_count", std::to_string(train_count)},
    {"augment", bool_text(augment)},
    {"network", network == NetworkMode::MultiScale ? "multi_scale" : "single_scale"},
    {"n_scales", std::to_string(n_scales)},
    {"layers_per_stage", std::to_string(layers_per_stage)},
    {"base_channels", std::to_string(base_channels)},
    {"skip", skip == SkipMode::Concat ? "concat" : "add"},
    {"unpool", unpool == UnpoolMode::Switches ? "switches" : "nearest"},
    {"epochs", std::to_string(epochs)},
    {"batch_size", std::to_string(batch_size)},
    {"lr_start", format_double(lr_start)},
    {"lr_end", format_double(lr_end)},
    {"momentum", format_double(momentum)},
    {"target", target == LearningTarget::Artifact ? "artifact" : "image"},
    {"standardize", bool_text(standardize)},
    {"train_phase", bool_text(train_phase)},
    {"f64", bool_text(f64)},
    {"phase_threshold", format_double(phase_threshold)},
    {"barcode_images", std::to_string(barcode_images)},
    {"barcode_size", std::to_string(barcode_size)},
  };
}

void ExperimentConfig::validate() const
{
  auto require = [](bool ok, char const *what) {
    if (!ok) {
      throw std::invalid_argument(std::string("config: ") + what);
    }
  };
  require(phantoms >= 2, "phantoms must be at least 2");
  require(coils >= 1, "coils must be positive");
  require(acceleration >= 1, "acceleration must be positive");
  require(acs_fraction >= 0.0 && acs_fraction <= 1.0, "acs_fraction must lie in [0, 1]");
  require(train_count >= 0 && train_count < phantoms, "train_count must lie in [0, phantoms)");
  require(epochs >= 1, "epochs must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require((lr_start > 0.0 && lr_end > 0.0) || (lr_start == 0.0 && lr_end == 0.0),
          "learning rates must both be positive or both zero");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(phase_threshold >= 0.0 && phase_threshold <= 1.0, "phase_threshold must lie in [0, 1]");
  require(barcode_images >= 2, "barcode_images must be at least 2");
  require(barcode_size >= 1, "barcode_size must be positive");
  check_image_shape(image_size, image_size);
  network_spec().validate();
}

NetworkSpec ExperimentConfig::network_spec() const
{
  NetworkSpec s;
  s.mode = network;
  s.n_scales = network == NetworkMode::SingleScale ? 1 : n_scales;
  s.layers_per_stage = layers_per_stage;
  s.base_channels = base_channels;
  s.input_h = s.input_w = image_size;
  s.skip = skip;
  s.unpool = unpool;
  return s;
}

TrainHyper ExperimentConfig::train_hyper() const
{
  TrainHyper h;
  h.epochs = epochs;
  h.batch_size = batch_size;
  h.lr_start = lr_start;
  h.lr_end = lr_end;
  h.momentum = momentum;
  h.seed = network_seed();
  h.target = target;
  h.standardize = standardize;
  return h;
}

DatasetOptions ExperimentConfig::dataset_options() const
{
  DatasetOptions o;
  o.augment = augment;
  o.split_seed = split_seed();
  if (train_count > 0) {
    o.train_count = train_count;
  }
  return o;
}

SamplingMask ExperimentConfig::sampling_mask() const { return sampling_mask(mask); }

SamplingMask ExperimentConfig::sampling_mask(MaskPattern pattern) const
{
  return make_mask(pattern, image_size, acceleration, acs_fraction, mask_seed());
}

std::uint64_t ExperimentConfig::phantom_seed(int index) const
{
  return derive(seed, 1, static_cast<std::uint64_t>(index));
}
std::uint64_t ExperimentConfig::mask_seed() const { return derive(seed, 2); }
std::uint64_t ExperimentConfig::split_seed() const { return derive(seed, 3); }
std::uint64_t ExperimentConfig::network_seed() const { return derive(seed, 4); }

void write_config(std::filesystem::path const &dir, ExperimentConfig const &cfg)
{
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / "config.txt");
  os << format_key_values(cfg.to_key_values());
  if (!os) {
    throw std::runtime_error("cannot write " + (dir / "config.txt").string());
  }
}

} // namespace csmri::tools
