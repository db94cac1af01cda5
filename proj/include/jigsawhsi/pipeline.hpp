#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "jigsawhsi/config.hpp"
#include "jigsawhsi/decompose.hpp"
#include "jigsawhsi/hsi_io.hpp"
#include "jigsawhsi/metrics.hpp"
#include "jigsawhsi/network.hpp"
#include "jigsawhsi/tiler.hpp"
#include "jigsawhsi/trainer.hpp"

namespace jigsawhsi {

// Sub-seeds drawn from the run seed, one stream per stage.
inline constexpr std::uint64_t kDecompositionStream = 1;
inline constexpr std::uint64_t kSplitStream = 2;
inline constexpr std::uint64_t kInitStream = 3;
inline constexpr std::uint64_t kTrainStream = 4;

/// Train/test partition of the labeled pixels. `train`/`test` index the
/// labeled pixels in raster order (i.e. the tiles of build_dataset);
/// `train_pixels` are the matching row-major pixel indices.
struct LabeledSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> train_pixels;
};

/// The split every command agrees on, seeded from the run seed.
LabeledSplit split_labeled(const LabelRaster& labels, const RunConfig& cfg);

struct PipelineResult {
  Decomposer decomposer;
  HSICube reduced;
  TileSplit tiles;
  Model<float> model;
  TrainHistory history;
  Evaluation test;
};

/// reduce -> tile -> split -> build -> train -> evaluate on the test part.
PipelineResult run_pipeline(const RunConfig& cfg, const HSICube& cube, const LabelRaster& labels,
                            const TrainHooks& hooks = {});

/// Test-split evaluation of an existing model, reproducing the split of the
/// training run.
Evaluation evaluate_saved(const RunConfig& cfg, const Model<float>& model, const Decomposer& decomposer,
                          const HSICube& cube, const LabelRaster& labels);

/// CLI entry points. Each returns the process exit status and writes
/// progress to `out` and errors to `err`.
int cmd_train(const std::filesystem::path& config_path, std::ostream& out);
int cmd_evaluate(const std::filesystem::path& model_path, const std::filesystem::path& decomposer_path,
                 const std::filesystem::path& config_path, std::ostream& out);
int cmd_predict(const std::filesystem::path& model_path, const std::filesystem::path& decomposer_path,
                const std::filesystem::path& cube_path, const std::filesystem::path& output_prefix,
                const std::filesystem::path& labels_path, std::ostream& out);

/// Writes a synthetic scene (cube.hdr, labels.hdr) and a ready-to-run
/// config.ini into `dir`.
int cmd_synth(const std::filesystem::path& dir, const SyntheticSceneParams& params, std::ostream& out);

/// Small-scene settings used by `synth` (S=9, c=6, n=5, batch 64, patience 10).
RunConfig desk_scale_config(const std::filesystem::path& cube, const std::filesystem::path& labels,
                            const std::filesystem::path& output_dir);

/// Full command line: subcommand dispatch, JIGSAWHSI_THREADS, and mapping of
/// exceptions to exit codes (1 usage, 2 I/O, 3 validation).
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace jigsawhsi
