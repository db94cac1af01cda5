#include "jigsawhsi/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/random.hpp"

namespace jigsawhsi {

namespace {

constexpr std::string_view kModule = "cli";

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(kModule, fmt::format("cannot write '{}'", path.string()));
  f << text;
  if (!f) throw IoError(kModule, fmt::format("short write to '{}'", path.string()));
}

void require_file(const std::filesystem::path& path, std::string_view what) {
  if (!std::filesystem::exists(path)) {
    throw IoError(kModule, fmt::format("{} not found: '{}'", what, path.string()));
  }
}

// "-d decomposer.bin" and "-d decomposer.hdr" both name the same artifact.
std::filesystem::path header_for(const std::filesystem::path& path, std::string_view header_ext) {
  if (path.extension() == ".bin") {
    auto header = path;
    header.replace_extension(header_ext);
    return header;
  }
  return path;
}

void check_class_names(const RunConfig& cfg, std::size_t num_classes) {
  if (!cfg.class_names.empty() && cfg.class_names.size() != num_classes) {
    throw ValidationError("config", fmt::format("class_names lists {} names but the labels have {} classes",
                                                cfg.class_names.size(), num_classes));
  }
}

TileSet test_tiles(const RunConfig& cfg, const HSICube& reduced, const LabelRaster& labels) {
  const TileSet all = build_dataset(reduced, labels, cfg.window_size);
  const LabeledSplit split = split_labeled(labels, cfg);
  return all.subset(split.test);
}

}  // namespace

LabeledSplit split_labeled(const LabelRaster& labels, const RunConfig& cfg) {
  std::vector<std::uint16_t> values;
  std::vector<std::size_t> pixels;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.labels[i] != 0) {
      values.push_back(labels.labels[i]);
      pixels.push_back(i);
    }
  }
  if (values.empty()) throw ValidationError("tiler", "label raster has no labeled pixels");
  SplitIndices idx = split_indices(values, labels.num_classes, cfg.train_frac,
                                   mix_seed(cfg.training.seed, kSplitStream), cfg.stratified);
  LabeledSplit out;
  out.train_pixels.reserve(idx.train.size());
  for (auto i : idx.train) out.train_pixels.push_back(pixels[i]);
  out.train = std::move(idx.train);
  out.test = std::move(idx.test);
  return out;
}

PipelineResult run_pipeline(const RunConfig& cfg, const HSICube& cube, const LabelRaster& labels,
                            const TrainHooks& hooks) {
  cfg.validate();
  if (cube.height != labels.height || cube.width != labels.width) {
    throw ValidationError("tiler", fmt::format("cube is {}x{} but labels are {}x{}", cube.height, cube.width,
                                               labels.height, labels.width));
  }
  check_class_names(cfg, labels.num_classes);
  const std::uint64_t seed = cfg.training.seed;
  const LabeledSplit split = split_labeled(labels, cfg);

  std::optional<std::span<const std::size_t>> fit_pixels;
  if (cfg.fit_scope == FitScope::Train) fit_pixels = std::span<const std::size_t>(split.train_pixels);
  ReducedCube reduced =
      reduce_cube(cube, cfg.decomposition, cfg.input_channels, mix_seed(seed, kDecompositionStream), fit_pixels);

  const TileSet all = build_dataset(reduced.cube, labels, cfg.window_size);
  TileSplit tiles{all.subset(split.train), all.subset(split.test)};
  if (tiles.test.empty()) throw ValidationError("tiler", "test split is empty; lower train_frac");

  Model<float> model(cfg.network_spec(labels.num_classes), mix_seed(seed, kInitStream));
  TrainConfig tc = cfg.training;
  tc.seed = mix_seed(seed, kTrainStream);
  tc.stratified = cfg.stratified;
  TrainHistory history = train(model, tiles.train, tc, hooks);

  Evaluation test = evaluate(model, tiles.test);
  if (!cfg.class_names.empty()) test.confusion.set_class_names(cfg.class_names);
  return PipelineResult{std::move(reduced.decomposer), std::move(reduced.cube), std::move(tiles),
                        std::move(model),              std::move(history),     std::move(test)};
}

Evaluation evaluate_saved(const RunConfig& cfg, const Model<float>& model, const Decomposer& decomposer,
                          const HSICube& cube, const LabelRaster& labels) {
  cfg.validate();
  check_class_names(cfg, labels.num_classes);
  if (decomposer.method != cfg.decomposition || decomposer.components != cfg.input_channels) {
    throw ValidationError(kModule, fmt::format("decomposer is {} with {} components but the config asks for {} "
                                               "with {}",
                                               to_string(decomposer.method), decomposer.components,
                                               to_string(cfg.decomposition), cfg.input_channels));
  }
  if (!(model.spec() == cfg.network_spec(labels.num_classes))) {
    throw ValidationError(kModule, "checkpoint network does not match the config (window, channels, layers or "
                                   "class count differ)");
  }
  const HSICube reduced = apply_decomposer(decomposer, cube);
  Evaluation ev = evaluate(model, test_tiles(cfg, reduced, labels));
  if (!cfg.class_names.empty()) ev.confusion.set_class_names(cfg.class_names);
  return ev;
}

int cmd_train(const std::filesystem::path& config_path, std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  require_file(cfg.cube, "cube header");
  require_file(cfg.labels, "labels header");
  const HSICube cube = read_cube(cfg.cube);
  const LabelRaster labels = read_labels(cfg.labels);
  fmt::print(out, "scene {}x{}x{}, {} labeled pixels, {} classes\n", cube.height, cube.width, cube.bands,
             labels.labeled_count(), labels.num_classes);

  const PipelineResult r = run_pipeline(cfg, cube, labels);
  fmt::print(out, "{} reduced to {} components; {} train / {} test tiles; {} parameters\n",
             to_string(cfg.decomposition), cfg.input_channels, r.tiles.train.size(), r.tiles.test.size(),
             r.model.parameter_count());
  fmt::print(out, "stopped after {} epochs (best {}{})\n", r.history.stopped_epoch, r.history.best_epoch,
             r.history.early_stopped ? ", early stop" : "");

  std::filesystem::create_directories(cfg.output_dir);
  save_checkpoint(r.model, cfg.output_dir / "model.ckpt");
  save_decomposer(r.decomposer, cfg.output_dir / "decomposer.hdr");
  write_text(cfg.output_dir / "history.csv", r.history.to_csv());
  write_text(cfg.output_dir / "metrics.txt", metrics_report(r.test.confusion));
  write_text(cfg.output_dir / "confusion.csv", r.test.confusion.to_csv());
  fmt::print(out, "{}\n", metrics_summary(r.test.confusion));
  fmt::print(out, "artifacts written to {}\n", cfg.output_dir.string());
  return 0;
}

int cmd_evaluate(const std::filesystem::path& model_path, const std::filesystem::path& decomposer_path,
                 const std::filesystem::path& config_path, std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  const auto model_header = header_for(model_path, ".ckpt");
  const auto decomposer_header = header_for(decomposer_path, ".hdr");
  require_file(model_header, "checkpoint");
  require_file(decomposer_header, "decomposer");
  require_file(cfg.cube, "cube header");
  require_file(cfg.labels, "labels header");
  const Model<float> model = load_checkpoint(model_header);
  const Decomposer decomposer = load_decomposer(decomposer_header);
  const HSICube cube = read_cube(cfg.cube);
  const LabelRaster labels = read_labels(cfg.labels);
  const Evaluation ev = evaluate_saved(cfg, model, decomposer, cube, labels);
  fmt::print(out, "{}", metrics_report(ev.confusion));
  return 0;
}

int cmd_predict(const std::filesystem::path& model_path, const std::filesystem::path& decomposer_path,
                const std::filesystem::path& cube_path, const std::filesystem::path& output_prefix,
                const std::filesystem::path& labels_path, std::ostream& out) {
  const auto model_header = header_for(model_path, ".ckpt");
  const auto decomposer_header = header_for(decomposer_path, ".hdr");
  require_file(model_header, "checkpoint");
  require_file(decomposer_header, "decomposer");
  require_file(cube_path, "cube header");
  const Model<float> model = load_checkpoint(model_header);
  const Decomposer decomposer = load_decomposer(decomposer_header);
  if (decomposer.components != model.spec().channels) {
    throw ValidationError(kModule, fmt::format("decomposer yields {} components but the model expects {}",
                                               decomposer.components, model.spec().channels));
  }
  const HSICube reduced = apply_decomposer(decomposer, read_cube(cube_path));
  const std::size_t window = model.spec().window;

  if (output_prefix.has_parent_path()) std::filesystem::create_directories(output_prefix.parent_path());
  const std::filesystem::path full_path = output_prefix.string() + "_full.hdr";
  write_class_map(classify_scene(model, reduced, window), full_path);
  fmt::print(out, "wrote {} and {}\n", full_path.string(), graymap_path(full_path).string());

  if (!labels_path.empty()) {
    require_file(labels_path, "labels header");
    const LabelRaster labels = read_labels(labels_path);
    const std::filesystem::path masked_path = output_prefix.string() + "_masked.hdr";
    write_class_map(classify_scene(model, reduced, labels, window, true), masked_path);
    fmt::print(out, "wrote {} and {}\n", masked_path.string(), graymap_path(masked_path).string());
  }
  return 0;
}

RunConfig desk_scale_config(const std::filesystem::path& cube, const std::filesystem::path& labels,
                            const std::filesystem::path& output_dir) {
  RunConfig c;
  c.cube = cube;
  c.labels = labels;
  c.output_dir = output_dir;
  c.decomposition = DecompositionMethod::PCA;
  c.input_channels = 6;
  c.window_size = 9;
  c.train_frac = 0.3;
  c.filter_size = 5;
  c.branch_units = 16;
  c.dense_units = {64, 32};
  c.dropout = 0.4;
  c.training.optimizer = OptimizerKind::Adadelta;
  c.training.learning_rate = 0.1;
  c.training.batch_size = 64;
  c.training.max_epochs = 500;
  c.training.patience = 10;
  return c;
}

int cmd_synth(const std::filesystem::path& dir, const SyntheticSceneParams& params, std::ostream& out) {
  const SyntheticScene scene = generate_synthetic_scene(params);
  std::filesystem::create_directories(dir);
  write_cube(scene.cube, dir / "cube.hdr");
  write_labels(scene.labels, dir / "labels.hdr");
  const RunConfig cfg = desk_scale_config("cube.hdr", "labels.hdr", "run");
  write_text(dir / "config.ini", serialize_config(cfg));
  fmt::print(out, "wrote {}x{}x{} scene with {} classes ({} labeled pixels) to {}\n", scene.cube.height,
             scene.cube.width, scene.cube.bands, scene.labels.num_classes, scene.labels.labeled_count(),
             dir.string());
  return 0;
}

}  // namespace jigsawhsi
