#include <cstdlib>
#include <ostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <omp.h>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/pipeline.hpp"

namespace jigsawhsi {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;

// JIGSAWHSI_THREADS caps the OpenMP team size. Returns false on a bad value.
bool apply_thread_cap(std::ostream& err) {
  const char* raw = std::getenv("JIGSAWHSI_THREADS");
  if (raw == nullptr || *raw == '\0') return true;
  char* end = nullptr;
  const long n = std::strtol(raw, &end, 10);
  if (*end != '\0' || n < 1) {
    fmt::print(err, "error: JIGSAWHSI_THREADS must be a positive integer, got '{}'\n", raw);
    return false;
  }
  omp_set_num_threads(static_cast<int>(n));
  return true;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hyperspectral pixel classification with a multi-scale convolutional network", "jigsawhsi"};
  app.require_subcommand(1);

  std::string config;
  std::string model;
  std::string decomposer;
  std::string cube;
  std::string output;
  std::string labels;

  auto* train = app.add_subcommand("train", "reduce, tile, train and evaluate as described by a config file");
  train->add_option("-c,--config", config, "run configuration (INI)")->required();

  auto* evaluate = app.add_subcommand("evaluate", "recompute the test metrics of a saved model");
  evaluate->add_option("-m,--model", model, "checkpoint header (model.ckpt)")->required();
  evaluate->add_option("-d,--decomposer", decomposer, "decomposer header or payload")->required();
  evaluate->add_option("-c,--config", config, "configuration used for training")->required();

  auto* predict = app.add_subcommand("predict", "classify every pixel of a cube");
  predict->add_option("-m,--model", model, "checkpoint header (model.ckpt)")->required();
  predict->add_option("-d,--decomposer", decomposer, "decomposer header or payload")->required();
  predict->add_option("-i,--input", cube, "cube header")->required();
  predict->add_option("-o,--output", output, "output prefix; writes <prefix>_full.hdr and _masked.hdr")->required();
  predict->add_option("-l,--labels", labels, "ground truth; enables the masked map");

  SyntheticSceneParams synth_params;
  auto* synth = app.add_subcommand("synth", "write a synthetic scene and a matching config.ini");
  synth->add_option("-o,--output", output, "output directory")->required();
  synth->add_option("--size", synth_params.height, "scene height and width")->check(CLI::PositiveNumber);
  synth->add_option("--bands", synth_params.bands, "spectral bands")->check(CLI::PositiveNumber);
  synth->add_option("--classes", synth_params.num_classes, "number of classes")->check(CLI::PositiveNumber);
  synth->add_option("--blobs", synth_params.blob_count, "number of class regions")->check(CLI::PositiveNumber);
  synth->add_option("--noise", synth_params.noise_sigma, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", synth_params.seed, "scene seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (!apply_thread_cap(err)) return kExitUsage;

  try {
    if (train->parsed()) return cmd_train(config, out);
    if (evaluate->parsed()) return cmd_evaluate(model, decomposer, config, out);
    if (predict->parsed()) return cmd_predict(model, decomposer, cube, output, labels, out);
    if (synth->parsed()) {
      synth_params.width = synth_params.height;
      return cmd_synth(output, synth_params, out);
    }
  } catch (const IoError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace jigsawhsi
