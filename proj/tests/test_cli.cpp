#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "jigsawhsi/config.hpp"
#include "jigsawhsi/hsi_io.hpp"
#include "jigsawhsi/pipeline.hpp"
#include "support.hpp"

using namespace jigsawhsi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "jigsawhsi");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// synth, then shrink the run so the whole file stays fast
fs::path make_run(const testing::ScratchDir& dir) {
  const Outcome s = cli({"synth", "-o", dir.path().string(), "--size", "24", "--bands", "10", "--classes", "3",
                         "--blobs", "5", "--seed", "11"});
  REQUIRE(s.code == 0);
  RunConfig cfg = load_config(dir / "config.ini");
  cfg.window_size = 5;
  cfg.input_channels = 4;
  cfg.filter_size = 3;
  cfg.branch_units = 6;
  cfg.dense_units = {16, 16};
  cfg.training.max_epochs = 8;
  cfg.training.batch_size = 32;
  std::ofstream(dir / "config.ini") << serialize_config(cfg);
  return dir / "config.ini";
}

}  // namespace

TEST_CASE("train writes its artifacts and reruns reproduce them") {
  testing::ScratchDir dir("cli-train");
  const fs::path config = make_run(dir);
  const Outcome first = cli({"train", "-c", config.string()});
  INFO(first.err);
  REQUIRE(first.code == 0);
  const fs::path run = dir / "run";
  for (const char* name : {"model.ckpt", "model.bin", "decomposer.hdr", "decomposer.bin", "history.csv",
                           "metrics.txt", "confusion.csv"})
    CHECK(fs::exists(run / name));
  const std::string metrics = slurp(run / "metrics.txt");
  CHECK(metrics.find("Classification metrics (in percentages):") == 0);
  CHECK(first.out.find("OA: ") != std::string::npos);

  const std::string model = slurp(run / "model.bin");
  fs::remove_all(run);
  REQUIRE(cli({"train", "-c", config.string()}).code == 0);
  CHECK(slurp(run / "metrics.txt") == metrics);
  CHECK(slurp(run / "model.bin") == model);

  SUBCASE("evaluate reproduces the test metrics") {
    const Outcome ev = cli({"evaluate", "-m", (run / "model.ckpt").string(), "-d", (run / "decomposer.bin").string(),
                            "-c", config.string()});
    INFO(ev.err);
    CHECK(ev.code == 0);
    CHECK(ev.out == metrics);
  }

  SUBCASE("predict writes full and masked maps") {
    const fs::path prefix = dir / "pred";
    const Outcome p = cli({"predict", "-m", (run / "model.ckpt").string(), "-d", (run / "decomposer.hdr").string(),
                           "-i", (dir / "cube.hdr").string(), "-o", prefix.string(), "-l",
                           (dir / "labels.hdr").string()});
    INFO(p.err);
    REQUIRE(p.code == 0);
    const ClassMap full = read_class_map(dir / "pred_full.hdr");
    const ClassMap masked = read_class_map(dir / "pred_masked.hdr");
    const LabelRaster truth = read_labels(dir / "labels.hdr");
    CHECK(full.height == 24);
    CHECK(full.width == 24);
    for (std::size_t i = 0; i < full.labels.size(); ++i) {
      CHECK(full.labels[i] >= 1);
      CHECK((masked.labels[i] == 0) == (truth.labels[i] == 0));
    }
    CHECK(fs::exists(graymap_path(dir / "pred_full.hdr")));

    CHECK(cli({"predict", "-m", (run / "model.ckpt").string(), "-d", (run / "decomposer.hdr").string(), "-i",
               (dir / "cube.hdr").string(), "-o", (dir / "only").string()})
              .code == 0);
    CHECK(fs::exists(dir / "only_full.hdr"));
    CHECK_FALSE(fs::exists(dir / "only_masked.hdr"));
  }

  SUBCASE("a config that does not match the checkpoint is rejected") {
    RunConfig other = load_config(config);
    other.branch_units = 7;
    std::ofstream(dir / "other.ini") << serialize_config(other);
    const Outcome ev = cli({"evaluate", "-m", (run / "model.ckpt").string(), "-d", (run / "decomposer.hdr").string(),
                            "-c", (dir / "other.ini").string()});
    CHECK(ev.code == 3);
    CHECK_FALSE(ev.err.empty());
  }
}

TEST_CASE("exit codes") {
  testing::ScratchDir dir("cli-errors");
  const fs::path config = make_run(dir);

  SUBCASE("missing labels file is an I/O error naming the path") {
    fs::remove(dir / "labels.hdr");
    const Outcome r = cli({"train", "-c", config.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("labels.hdr") != std::string::npos);
  }
  SUBCASE("missing config file") { CHECK(cli({"train", "-c", (dir / "nope.ini").string()}).code == 2); }
  SUBCASE("invalid config value") {
    std::string text = slurp(config);
    text.replace(text.find("window_size = 5"), 15, "window_size = 26");
    std::ofstream(dir / "bad.ini") << text;
    const Outcome r = cli({"train", "-c", (dir / "bad.ini").string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("window_size must be odd") != std::string::npos);
  }
  SUBCASE("usage errors") {
    CHECK(cli({}).code == 1);
    CHECK(cli({"train"}).code == 1);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({"--help"}).code == 0);
  }
  SUBCASE("thread override is validated") {
    setenv("JIGSAWHSI_THREADS", "zero", 1);
    CHECK(cli({"synth", "-o", (dir / "x").string()}).code == 1);
    unsetenv("JIGSAWHSI_THREADS");
  }
}
