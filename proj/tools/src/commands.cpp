#include "csmri/tools/commands.hpp"

#include "csmri/image_io.hpp"
#include "csmri/param_io.hpp"
#include "csmri/ptf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace csmri::tools {

namespace fs = std::filesystem;

namespace {

std::string item_name(int phantom, int coil)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%04d_c%d", phantom, coil);
  return buf;
}

std::string phantom_name(int phantom)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%04d", phantom);
  return buf;
}

void make_dirs(fs::path const &dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string());
  }
}

class CsvFile
{
public:
  CsvFile(fs::path path, std::string const &header)
    : path_(std::move(path))
    , os_(path_)
  {
    if (!os_) {
      throw std::runtime_error("cannot write " + path_.string());
    }
    os_ << header << '\n';
  }

  template <typename... T>
  void row(T const &...fields)
  {
    bool first = true;
    ((os_ << (first ? "" : ",") << text(fields), first = false), ...);
    os_ << '\n';
  }

private:
  static std::string text(double v) { return format_double(v); }
  static std::string text(int v) { return std::to_string(v); }
  static std::string text(std::string const &v) { return v; }
  static std::string text(char const *v) { return v; }

  fs::path path_;
  std::ofstream os_;
};

std::string join_ints(std::vector<int> const &v)
{
  std::string s;
  for (int x : v) {
    s += (s.empty() ? "" : ",") + std::to_string(x);
  }
  return s;
}

std::vector<int> split_ints(std::string const &key, std::string const &text)
{
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    out.push_back(parse_int(key, tok));
  }
  return out;
}

std::string lookup(KeyValues const &kv, std::string const &key, fs::path const &where)
{
  for (auto const &[k, v] : kv) {
    if (k == key) {
      return v;
    }
  }
  throw std::runtime_error(where.string() + " lacks key '" + key + "'");
}

KeyValues without_out_dir(ExperimentConfig const &cfg)
{
  KeyValues kv = cfg.to_key_values();
  std::erase_if(kv, [](auto const &p) { return p.first == "out_dir"; });
  return kv;
}

// ---- training checkpoints ----

template <typename Real>
void save_checkpoint(fs::path const &dir, TrainedNetwork<Real> const &t, SgdState<Real> const &s,
                     LearningTarget target)
{
  fs::path const tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  KeyValues meta{{"epochs_done", std::to_string(t.curve.size())},
                 {"scale", format_double(t.scale)},
                 {"target", target == LearningTarget::Artifact ? "artifact" : "image"},
                 {"velocity_tensors", std::to_string(s.velocity.size())}};
  for (auto const &row : t.curve) {
    meta.emplace_back("curve." + std::to_string(row.epoch),
                      format_double(row.lr) + "," + format_double(row.train_loss) + "," + format_double(row.test_nmse));
  }
  // save_network needs a mutable network only to enumerate its tensors.
  auto &net = const_cast<Network<Real> &>(t.net);
  save_network(net, tmp, meta);
  for (std::size_t k = 0; k < s.velocity.size(); k++) {
    ptf::save(tmp / ("velocity_" + std::to_string(k) + ".ptf"), tensor_record(s.velocity[k]));
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

template <typename Real>
TrainProgress<Real> load_checkpoint(fs::path const &dir)
{
  fs::path const manifest = dir / "manifest.txt";
  KeyValues const meta = manifest_meta(manifest);
  TrainProgress<Real> p{{load_network<Real>(manifest), {}, parse_double("scale", lookup(meta, "scale", manifest))}, {}};
  int const done = parse_int("epochs_done", lookup(meta, "epochs_done", manifest));
  for (int e = 0; e < done; e++) {
    std::string const key = "curve." + std::to_string(e);
    std::stringstream ss(lookup(meta, key, manifest));
    std::string lr, loss, nmse;
    std::getline(ss, lr, ',');
    std::getline(ss, loss, ',');
    std::getline(ss, nmse, ',');
    p.trained.curve.push_back({e, parse_double(key, lr), parse_double(key, loss), parse_double(key, nmse)});
  }
  int const nv = parse_int("velocity_tensors", lookup(meta, "velocity_tensors", manifest));
  for (int k = 0; k < nv; k++) {
    p.state.velocity.push_back(record_tensor<Real>(ptf::load(dir / ("velocity_" + std::to_string(k) + ".ptf"))));
  }
  return p;
}

LearningTarget saved_target(fs::path const &dir)
{
  fs::path const manifest = dir / "manifest.txt";
  return lookup(manifest_meta(manifest), "target", manifest) == "image" ? LearningTarget::Image
                                                                          : LearningTarget::Artifact;
}

template <typename Real, typename Train>
TrainedNetwork<Real> train_resumable(fs::path const &dir, std::string const &name, int epochs, LearningTarget target,
                                     Train &&train, std::ostream &log)
{
  TrainControl<Real> control;
  if (fs::exists(dir / "manifest.txt")) {
    auto progress = load_checkpoint<Real>(dir);
    int const done = static_cast<int>(progress.trained.curve.size());
    if (done == epochs) {
      log << name << ": all " << epochs << " epochs already done\n";
      return std::move(progress.trained);
    }
    log << name << ": resuming after epoch " << done << "\n";
    control.resume = std::move(progress);
  }
  control.on_epoch = [&](CurveRow const &r) {
    log << name << " epoch " << r.epoch << " lr " << r.lr << " loss " << r.train_loss << " test nmse " << r.test_nmse
        << std::endl;
  };
  control.checkpoint = [&](TrainedNetwork<Real> const &t, SgdState<Real> const &s) {
    save_checkpoint(dir, t, s, target);
  };
  return train(control);
}

void write_curves(fs::path const &path, std::vector<std::pair<std::string, std::vector<CurveRow>>> const &curves)
{
  CsvFile csv(path, "network,epoch,lr,train_loss,test_nmse");
  for (auto const &[name, rows] : curves) {
    for (auto const &r : rows) {
      csv.row(name, r.epoch, r.lr, r.train_loss, r.test_nmse);
    }
  }
}

ArtifactPredictor as_artifact(ArtifactPredictor net, LearningTarget target)
{
  if (target == LearningTarget::Artifact) {
    return net;
  }
  return [net = std::move(net)](RealArray const &x, int coil) { return RealArray(x - net(x, coil)); };
}

ArtifactPredictor zero_predictor()
{
  return [](RealArray const &x, int) { return RealArray(RealArray::Zero(x.rows(), x.cols())); };
}

template <typename Real>
void run_train(ExperimentConfig const &cfg, std::ostream &log)
{
  LoadedDataset const data = load_dataset(cfg);
  DatasetSplit const split = build_dataset(data.phantoms, data.mask, cfg.dataset_options());
  if (split.train_phantoms != data.train_phantoms || split.test_phantoms != data.test_phantoms) {
    throw std::runtime_error("dataset split on disk does not match the config");
  }
  fs::path const dir = train_dir(cfg);
  if (fs::exists(dir / "config.txt")) {
    auto const previous = ExperimentConfig::load(dir / "config.txt");
    if (without_out_dir(previous) != without_out_dir(cfg)) {
      throw std::runtime_error(dir.string() + " holds a run with a different config; use a fresh --out");
    }
  }
  make_dirs(dir);
  write_config(dir, cfg);
  log << "training on " << split.train.size() << " images, testing on " << split.test.size() << "\n";

  NetworkSpec const spec = cfg.network_spec();
  TrainHyper const hyper = cfg.train_hyper();
  std::vector<std::pair<std::string, std::vector<CurveRow>>> curves;

  auto mag = train_resumable<Real>(
    dir / "magnitude", "magnitude", hyper.epochs, hyper.target,
    [&](TrainControl<Real> &control) {
      auto on_epoch = control.on_epoch;
      std::vector<CurveRow> rows = control.resume ? control.resume->trained.curve : std::vector<CurveRow>{};
      control.on_epoch = [&, on_epoch, rows](CurveRow const &r) mutable {
        on_epoch(r);
        rows.push_back(r);
        write_curves(dir / "curves.csv", {{"magnitude", rows}});
      };
      return train_magnitude_network<Real>(split, spec, hyper, control);
    },
    log);
  curves.emplace_back("magnitude", mag.curve);
  write_curves(dir / "curves.csv", curves);

  CsvFile metrics(dir / "metrics.csv", "network,epochs,final_train_loss,final_test_nmse,zero_filled_nmse");
  metrics.row(std::string("magnitude"), static_cast<int>(mag.curve.size()), mag.curve.back().train_loss,
              mag.curve.back().test_nmse, zero_filled_nmse(split.test));
  if (!cfg.train_phase) {
    return;
  }

  auto const mag_artifact = as_artifact(network_predictor(mag.net, mag.scale), hyper.target);
  auto const train_masks = phase_masks(split.train, mag_artifact, cfg.phase_threshold);
  auto const test_masks = phase_masks(split.test, mag_artifact, cfg.phase_threshold);
  TrainHyper phase_hyper = hyper;
  phase_hyper.target = LearningTarget::Artifact;
  phase_hyper.seed = hyper.seed + 1;
  auto phs = train_resumable<Real>(
    dir / "phase", "phase", phase_hyper.epochs, phase_hyper.target,
    [&](TrainControl<Real> &control) {
      auto on_epoch = control.on_epoch;
      std::vector<CurveRow> rows = control.resume ? control.resume->trained.curve : std::vector<CurveRow>{};
      control.on_epoch = [&, on_epoch, rows](CurveRow const &r) mutable {
        on_epoch(r);
        rows.push_back(r);
        write_curves(dir / "curves.csv", {curves[0], {"phase", rows}});
      };
      return train_phase_network<Real>(split, train_masks, test_masks, spec, phase_hyper, control);
    },
    log);
  curves.emplace_back("phase", phs.curve);
  write_curves(dir / "curves.csv", curves);
  metrics.row(std::string("phase"), static_cast<int>(phs.curve.size()), phs.curve.back().train_loss,
              phs.curve.back().test_nmse, zero_filled_phase_nmse(split.test, test_masks));
}

template <typename Real>
struct LoadedModel
{
  Network<Real> net;
  double scale;
  LearningTarget target;
};

template <typename Real>
LoadedModel<Real> load_model(fs::path const &dir, ExperimentConfig const &cfg)
{
  if (!fs::exists(dir / "manifest.txt")) {
    throw std::runtime_error("no trained model at " + dir.string() + "; run train first");
  }
  auto p = load_checkpoint<Real>(dir);
  NetworkSpec const &s = p.trained.net.spec();
  if (s.input_h != cfg.image_size || s.input_w != cfg.image_size) {
    throw std::runtime_error("model at " + dir.string() + " expects " + std::to_string(s.input_h) + "x" +
                             std::to_string(s.input_w) + " images, config has " + std::to_string(cfg.image_size));
  }
  return {std::move(p.trained.net), p.trained.scale, saved_target(dir)};
}

template <typename Real>
ReconSummary run_reconstruct(ExperimentConfig const &cfg, ReconSource source, std::ostream &log)
{
  LoadedDataset const data = load_dataset(cfg);
  fs::path const dir = recon_dir(cfg);
  make_dirs(dir);
  write_config(dir, cfg);

  std::optional<LoadedModel<Real>> mag_model;
  std::optional<LoadedModel<Real>> phase_model;
  if (source == ReconSource::Networks) {
    mag_model = load_model<Real>(train_dir(cfg) / "magnitude", cfg);
    if (cfg.train_phase) {
      phase_model = load_model<Real>(train_dir(cfg) / "phase", cfg);
    }
  }

  ReconSummary summary;
  CsvFile metrics(dir / "metrics.csv", "phantom,nmse_mag,nmse_zero_fill,nmse_phase");
  CsvFile timing(dir / "timing.csv", "phantom,wall_time_s");
  for (int p : data.test_phantoms) {
    auto const &truth = data.phantoms[static_cast<std::size_t>(p)];
    std::vector<ComplexImage> aliased;
    std::vector<ArtifactPair> pairs;
    for (auto const &coil : truth) {
      auto item = simulate_item(coil, data.mask, {p, coil.coil, 0});
      aliased.push_back(std::move(item.aliased));
      pairs.push_back(std::move(item.pair));
    }

    ArtifactPredictor mag = zero_predictor();
    ArtifactPredictor phs = zero_predictor();
    if (source == ReconSource::Oracle) {
      mag = [&](RealArray const &, int c) { return pairs[static_cast<std::size_t>(c)].label_mag; };
      phs = [&](RealArray const &, int c) {
        auto const i = static_cast<std::size_t>(c);
        BoolArray const live = make_phase_mask(magnitude(truth[i].data), cfg.phase_threshold).mask;
        return RealArray(live.select(pairs[i].label_phase, 0.0));
      };
    } else if (source == ReconSource::Networks) {
      mag = as_artifact(network_predictor(mag_model->net, mag_model->scale), mag_model->target);
      if (phase_model) {
        phs = network_predictor(phase_model->net, phase_model->scale);
      }
    }

    ReconResult const res = reconstruct(mag, phs, aliased, truth, cfg.phase_threshold);
    double phase_sum = 0.0;
    int phase_n = 0;
    for (double v : res.nmse_phase) {
      if (!std::isnan(v)) {
        phase_sum += v;
        phase_n++;
      }
    }
    double const phase_mean = phase_n ? phase_sum / phase_n : std::numeric_limits<double>::quiet_NaN();
    metrics.row(p, res.nmse_mag, res.nmse_zero_fill, phase_mean);
    timing.row(p, res.wall_time);
    log << phantom_name(p) << ": nmse " << res.nmse_mag << " (zero-filled " << res.nmse_zero_fill << "), wall time "
        << res.wall_time * 1e3 << " ms\n";

    RealArray const truth_ssos = ssos(truth);
    double const hi = truth_ssos.maxCoeff();
    write_pgm(dir / (phantom_name(p) + "_recon.pgm"), res.ssos, 0.0, hi);
    write_pgm(dir / (phantom_name(p) + "_zero_fill.pgm"), ssos(aliased), 0.0, hi);
    write_pgm(dir / (phantom_name(p) + "_truth.pgm"), truth_ssos, 0.0, hi);

    summary.phantoms.push_back(p);
    summary.nmse_mag.push_back(res.nmse_mag);
    summary.nmse_zero_fill.push_back(res.nmse_zero_fill);
    summary.nmse_phase.push_back(phase_mean);
    summary.wall_time.push_back(res.wall_time);
  }
  return summary;
}

} // namespace

fs::path dataset_dir(ExperimentConfig const &cfg) { return fs::path(cfg.out_dir) / "dataset"; }
fs::path train_dir(ExperimentConfig const &cfg) { return fs::path(cfg.out_dir) / "train"; }
fs::path recon_dir(ExperimentConfig const &cfg) { return fs::path(cfg.out_dir) / "recon"; }
fs::path barcode_dir(ExperimentConfig const &cfg) { return fs::path(cfg.out_dir) / "barcode"; }
fs::path rf_dir(ExperimentConfig const &cfg) { return fs::path(cfg.out_dir) / "rf"; }

std::vector<ComplexImage> config_phantom(ExperimentConfig const &cfg, int index)
{
  return make_phantom(cfg.image_size, cfg.image_size, cfg.coils, cfg.phantom_seed(index));
}

void cmd_simulate(ExperimentConfig const &cfg, std::ostream &log)
{
  fs::path const dir = dataset_dir(cfg);
  for (char const *sub : {"truth", "aliased", "labels"}) {
    make_dirs(dir / sub);
  }
  write_config(dir, cfg);

  SamplingMask const mask = cfg.sampling_mask();
  std::vector<std::vector<ComplexImage>> phantoms;
  for (int i = 0; i < cfg.phantoms; i++) {
    phantoms.push_back(config_phantom(cfg, i));
  }
  DatasetOptions opts = cfg.dataset_options();
  opts.augment = false;
  DatasetSplit const split = build_dataset(phantoms, mask, opts);
  for (auto const *part : {&split.train, &split.test}) {
    for (auto const &it : *part) {
      std::string const name = item_name(it.info.phantom, it.info.coil);
      ptf::save(dir / "truth" / (name + ".ptf"), ptf::from_complex(it.truth.data));
      ptf::save(dir / "aliased" / (name + ".ptf"), ptf::from_complex(it.aliased.data));
      ptf::save(dir / "labels" / (name + "_mag.ptf"), ptf::from_real(it.pair.label_mag));
      ptf::save(dir / "labels" / (name + "_phase.ptf"), ptf::from_real(it.pair.label_phase));
    }
  }
  ptf::save(dir / "mask.ptf", ptf::from_mask(mask));
  ptf::write_mask_csv(dir / "mask.csv", mask);

  KeyValues manifest{{"phantoms", std::to_string(cfg.phantoms)},
                     {"coils", std::to_string(cfg.coils)},
                     {"image_size", std::to_string(cfg.image_size)},
                     {"mask", to_string(mask.pattern)},
                     {"sampled_lines", std::to_string(mask.popcount())},
                     {"acs_lines", std::to_string(mask.acs_count)},
                     {"train", join_ints(split.train_phantoms)},
                     {"test", join_ints(split.test_phantoms)}};
  std::ofstream os(dir / "manifest.txt");
  os << format_key_values(manifest);
  if (!os) {
    throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  }
  log << "simulated " << cfg.phantoms << " phantoms x " << cfg.coils << " coils, " << mask.popcount() << "/"
      << mask.size() << " k-space rows, " << split.train_phantoms.size() << " train / " << split.test_phantoms.size()
      << " test phantoms -> " << dir.string() << "\n";
}

LoadedDataset load_dataset(ExperimentConfig const &cfg)
{
  fs::path const dir = dataset_dir(cfg);
  fs::path const manifest_path = dir / "manifest.txt";
  if (!fs::exists(manifest_path)) {
    throw std::runtime_error("no dataset at " + dir.string() + "; run simulate first");
  }
  ExperimentConfig const saved = ExperimentConfig::load(dir / "config.txt");
  KeyValues const a = saved.to_key_values();
  KeyValues const b = cfg.to_key_values();
  for (char const *key :
       {"seed", "phantoms", "image_size", "coils", "mask", "acceleration", "acs_fraction", "train_count"}) {
    if (lookup(a, key, dir / "config.txt") != lookup(b, key, dir / "config.txt")) {
      throw std::runtime_error("dataset at " + dir.string() + " was simulated with a different '" + key + "'");
    }
  }
  KeyValues const manifest = read_key_values(manifest_path);
  LoadedDataset data;
  data.train_phantoms = split_ints("train", lookup(manifest, "train", manifest_path));
  data.test_phantoms = split_ints("test", lookup(manifest, "test", manifest_path));

  auto const mask_rec = ptf::load(dir / "mask.ptf");
  data.mask = cfg.sampling_mask();
  if (mask_rec.payload.size() != data.mask.lines.size()) {
    throw std::runtime_error("mask on disk has the wrong length");
  }
  for (std::size_t r = 0; r < mask_rec.payload.size(); r++) {
    if ((mask_rec.payload[r] != 0.0f) != (data.mask.lines[r] != 0)) {
      throw std::runtime_error("mask on disk differs from the config mask at row " + std::to_string(r));
    }
  }

  for (int p = 0; p < cfg.phantoms; p++) {
    std::vector<ComplexImage> coils;
    for (int c = 0; c < cfg.coils; c++) {
      fs::path const file = dir / "truth" / (item_name(p, c) + ".ptf");
      coils.push_back({ptf::to_complex(ptf::load(file)), c});
      if (coils.back().rows() != cfg.image_size || coils.back().cols() != cfg.image_size) {
        throw std::runtime_error(file.string() + " has the wrong image size");
      }
    }
    data.phantoms.push_back(std::move(coils));
  }
  return data;
}

void cmd_train(ExperimentConfig const &cfg, std::ostream &log)
{
  if (cfg.f64) {
    run_train<double>(cfg, log);
  } else {
    run_train<float>(cfg, log);
  }
}

ReconSummary cmd_reconstruct(ExperimentConfig const &cfg, ReconSource source, std::ostream &log)
{
  return cfg.f64 ? run_reconstruct<double>(cfg, source, log) : run_reconstruct<float>(cfg, source, log);
}

std::vector<CloudSummary> barcode_clouds(ExperimentConfig const &cfg)
{
  SamplingMask const uniform = cfg.sampling_mask(MaskPattern::UniformACS);
  SamplingMask const gaussian = cfg.sampling_mask(MaskPattern::GaussianRandom);
  std::vector<RealArray> images;
  std::vector<RealArray> art_uniform;
  std::vector<RealArray> art_gaussian;
  for (int i = 0; i < cfg.barcode_images; i++) {
    ComplexImage const truth = config_phantom(cfg, i).front();
    images.push_back(magnitude(truth.data));
    art_uniform.push_back(simulate_item(truth, uniform, {i, 0, 0}).pair.label_mag);
    art_gaussian.push_back(simulate_item(truth, gaussian, {i, 0, 0}).pair.label_mag);
  }
  std::vector<CloudSummary> out;
  for (auto const &[name, set] : {std::pair{"image", &images}, std::pair{"artifact_uniform_acs", &art_uniform},
                                  std::pair{"artifact_gaussian", &art_gaussian}}) {
    PointCloud const pc = image_cloud(*set, cfg.barcode_size, cfg.barcode_size, name);
    Barcode bc = betti0_barcode(pairwise_distances(pc));
    out.push_back({name, static_cast<int>(pc.size()), complexity_summary(bc), std::move(bc)});
  }
  return out;
}

std::vector<CloudSummary> cmd_barcode(ExperimentConfig const &cfg, std::ostream &log)
{
  fs::path const dir = barcode_dir(cfg);
  make_dirs(dir);
  write_config(dir, cfg);
  auto clouds = barcode_clouds(cfg);
  CsvFile auc(dir / "auc.csv", "cloud,images,auc");
  for (auto const &c : clouds) {
    auc.row(c.name, c.images, c.auc);
    write_barcode_csv(dir / ("barcode_" + c.name + ".csv"), c.barcode);
    write_curve_csv(dir / ("curve_" + c.name + ".csv"), betti0_curve(c.barcode, true));
    log << c.name << ": " << c.images << " images, auc " << c.auc << "\n";
  }
  return clouds;
}

void cmd_rf(ExperimentConfig const &cfg, std::ostream &out)
{
  fs::path const dir = rf_dir(cfg);
  make_dirs(dir);
  write_config(dir, cfg);
  auto const rows = receptive_field(cfg.network_spec());
  std::ostringstream table;
  table << "index,name,rf,jump,rf_h,rf_w\n";
  for (auto const &r : rows) {
    table << r.index << ',' << r.name << ',' << format_double(r.rf) << ',' << format_double(r.jump) << ',' << r.rf_h
          << ',' << r.rf_w << '\n';
  }
  std::ofstream os(dir / "rf.csv");
  os << table.str();
  if (!os) {
    throw std::runtime_error("cannot write " + (dir / "rf.csv").string());
  }
  out << table.str();
}

} // namespace csmri::tools
