#include "csmri/tools/commands.hpp"
#include "csmri/tools/config.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <optional>

using namespace csmri::tools;

int main(int argc, char **argv)
{
  CLI::App app{"Compressed-sensing MRI artifact learning"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool f64 = false;
  app.add_option("--config", config_path, "key=value experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides out_dir)");
  app.add_option("--seed", seed, "master seed (overrides seed)");
  app.add_flag("--f64", f64, "double precision, bit-reproducible outputs");

  auto *simulate = app.add_subcommand("simulate", "generate phantoms, masks and artifact labels");
  auto *train = app.add_subcommand("train", "train the magnitude and phase networks");
  auto *reconstruct = app.add_subcommand("reconstruct", "reconstruct the test phantoms");
  bool oracle = false;
  bool zero_model = false;
  auto *oracle_flag = reconstruct->add_flag("--oracle", oracle, "subtract the true artifacts");
  reconstruct->add_flag("--zero-model", zero_model, "predict no artifact")->excludes(oracle_flag);
  auto *barcode = app.add_subcommand("barcode", "betti-0 barcodes of image and artifact clouds");
  auto *rf = app.add_subcommand("rf", "receptive field per layer");

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    return app.exit(e);
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
    if (!out_dir.empty()) {
      cfg.out_dir = out_dir;
    }
    if (seed) {
      cfg.seed = *seed;
    }
    if (f64) {
      cfg.f64 = true;
    }
    cfg.validate();

    if (simulate->parsed()) {
      cmd_simulate(cfg, std::cerr);
    } else if (train->parsed()) {
      cmd_train(cfg, std::cerr);
    } else if (reconstruct->parsed()) {
      auto const source = oracle ? ReconSource::Oracle : zero_model ? ReconSource::ZeroModel : ReconSource::Networks;
      cmd_reconstruct(cfg, source, std::cerr);
    } else if (barcode->parsed()) {
      cmd_barcode(cfg, std::cerr);
    } else if (rf->parsed()) {
      cmd_rf(cfg, std::cout);
    }
  } catch (std::exception const &e) {
    std::cerr << "csmri: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
