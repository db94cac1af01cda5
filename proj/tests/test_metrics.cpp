#include <doctest.h>

#include <cmath>
#include <numeric>

#include <omp.h>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/metrics.hpp"
#include "jigsawhsi/trainer.hpp"
#include "scenes.hpp"
#include "support.hpp"

using namespace jigsawhsi;

namespace {

ConfusionMatrix random_matrix(std::size_t k, Rng& rng, bool diagonal_heavy) {
  std::vector<std::int64_t> counts(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      counts[i * k + j] = static_cast<std::int64_t>(rng.below(i == j && diagonal_heavy ? 50 : 10));
  counts[0] += 1;  // never empty
  return ConfusionMatrix::from_counts(k, counts);
}

bool is_diagonal(const ConfusionMatrix& cm) {
  for (std::size_t i = 0; i < cm.num_classes(); ++i)
    for (std::size_t j = 0; j < cm.num_classes(); ++j)
      if (i != j && cm.at(i, j) != 0) return false;
  return true;
}

}  // namespace

TEST_CASE("[[9,1],[2,8]]: OA 85, Kappa 70, AA 85") {
  const auto cm = ConfusionMatrix::from_counts(2, {9, 1, 2, 8});
  // p_o = 17/20; p_e = (10*11 + 10*9)/400 = 0.5
  CHECK(overall_accuracy(cm) == doctest::Approx(85.0).epsilon(1e-12));
  CHECK(cohen_kappa(cm) == doctest::Approx(70.0).epsilon(1e-12));
  CHECK(average_accuracy(cm) == doctest::Approx(85.0).epsilon(1e-12));
  CHECK(metrics_summary(cm) == "OA: 85.00  Kappa: 70.00  AA: 85.00");
}

TEST_CASE("perfect diagonal matrices give 100/100/100") {
  for (std::size_t k = 1; k <= 6; ++k) {
    ConfusionMatrix cm(k);
    for (std::size_t i = 1; i <= k; ++i) cm.add(static_cast<std::uint16_t>(i), static_cast<std::uint16_t>(i), 3 * i);
    CHECK(overall_accuracy(cm) == 100.0);
    CHECK(cohen_kappa(cm) == 100.0);
    CHECK(average_accuracy(cm) == 100.0);
  }
  // Only one populated cell: chance agreement is 1, kappa defined as 100.
  CHECK(cohen_kappa(ConfusionMatrix::from_counts(2, {7, 0, 0, 0})) == 100.0);
}

TEST_CASE("constant predictor on balanced truth has zero kappa") {
  const auto cm = ConfusionMatrix::from_counts(2, {10, 0, 10, 0});
  CHECK(overall_accuracy(cm) == 50.0);
  CHECK(cohen_kappa(cm) == 0.0);
  CHECK(average_accuracy(cm) == 50.0);
}

TEST_CASE("kappa goes negative below chance") {
  CHECK(cohen_kappa(ConfusionMatrix::from_counts(2, {0, 5, 5, 0})) == doctest::Approx(-100.0));
}

TEST_CASE("empty matrices are rejected") {
  const ConfusionMatrix cm(3);
  CHECK_THROWS_AS(overall_accuracy(cm), ValidationError);
  CHECK_THROWS_AS(cohen_kappa(cm), ValidationError);
  CHECK_THROWS_AS(average_accuracy(cm), ValidationError);
  CHECK_THROWS_AS(ConfusionMatrix::from_counts(2, {1, -1, 0, 0}), ValidationError);
  CHECK_THROWS_AS(ConfusionMatrix(2).add(0, 1), ValidationError);
}

TEST_CASE("per-class report layout") {
  auto cm = ConfusionMatrix::from_counts(3, {46, 0, 0, 2, 10, 2, 0, 0, 0});
  cm.set_class_names({"Alfalfa", "Oats", "Empty"});
  CHECK(per_class_report(cm) ==
        "Accuracy by target (in percentages):\n"
        "100.0000 : Alfalfa\n"
        " 71.4286 : Oats\n"
        "     n/a : Empty\n");
  // AA skips the empty row.
  CHECK(average_accuracy(cm) == doctest::Approx((100.0 + 100.0 * 10.0 / 14.0) / 2.0));
  CHECK_FALSE(class_recall(cm, 2).has_value());
}

TEST_CASE("metric properties on random matrices") {
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t k = 2 + rng.below(6);
    const auto cm = random_matrix(k, rng, rep % 2 == 0);
    const double oa = overall_accuracy(cm), aa = average_accuracy(cm), kappa = cohen_kappa(cm);
    CHECK(oa >= 0.0);
    CHECK(oa <= 100.0);
    CHECK(aa >= 0.0);
    CHECK(aa <= 100.0);
    CHECK(kappa <= 100.0 + 1e-12);
    CHECK((std::abs(kappa - 100.0) < 1e-12) == is_diagonal(cm));

    // kappa >= 0 exactly when agreement is at least chance
    double pe = 0.0;
    const double n = static_cast<double>(cm.total());
    for (std::size_t i = 0; i < k; ++i)
      pe += static_cast<double>(cm.row_total(i)) * static_cast<double>(cm.col_total(i)) / (n * n);
    if (oa / 100.0 >= pe) CHECK(kappa >= -1e-12);

    // scale invariance
    std::vector<std::int64_t> scaled = cm.counts();
    const std::int64_t factor = 1 + static_cast<std::int64_t>(rng.below(9));
    for (auto& v : scaled) v *= factor;
    const auto big = ConfusionMatrix::from_counts(k, scaled);
    CHECK(overall_accuracy(big) == doctest::Approx(oa).epsilon(1e-12));
    CHECK(average_accuracy(big) == doctest::Approx(aa).epsilon(1e-12));
    CHECK(cohen_kappa(big) == doctest::Approx(kappa).epsilon(1e-12));

    // recalls average to AA
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c)
      if (auto r = class_recall(cm, c)) {
        sum += *r;
        ++present;
      }
    CHECK(sum / static_cast<double>(present) == doctest::Approx(aa).epsilon(1e-12));
  }
}

TEST_CASE("confusion matrix bookkeeping and CSV") {
  ConfusionMatrix cm(2, {"water", "soil"});
  cm.add(1, 1);
  cm.add(1, 2);
  cm.add(2, 2, 4);
  CHECK(cm.total() == 6);
  CHECK(cm.trace() == 5);
  CHECK(cm.row_total(0) == 2);
  CHECK(cm.col_total(1) == 5);
  CHECK(cm.to_csv() == "truth\\predicted,water,soil\nwater,1,1\nsoil,0,4\n");
}

TEST_CASE("argmax breaks ties towards the lowest class") {
  const std::vector<float> p{0.2f, 0.4f, 0.4f};
  CHECK(argmax_label(p) == 2);
  const std::vector<float> flat{0.25f, 0.25f, 0.25f, 0.25f};
  CHECK(argmax_label(flat) == 1);
}

TEST_CASE("classify_scene: shape, masking, determinism across threads") {
  const auto s = scenes::small();
  const Model<float> model(scenes::tiny_spec(), 2);
  const ClassMap masked = classify_scene(model, s.reduced, s.scene.labels, 5, true, 37);
  const ClassMap full = classify_scene(model, s.reduced, 5, 64);
  CHECK(masked.height == 20);
  CHECK(masked.width == 20);
  CHECK(full.labels.size() == 400);
  for (std::size_t i = 0; i < 400; ++i) {
    CHECK((masked.labels[i] == 0) == (s.scene.labels.labels[i] == 0));
    if (masked.labels[i] != 0) CHECK(masked.labels[i] == full.labels[i]);
    CHECK(full.labels[i] >= 1);
    CHECK(full.labels[i] <= 3);
  }
  omp_set_num_threads(3);
  const ClassMap again = classify_scene(model, s.reduced, 5, 16);
  omp_set_num_threads(1);
  CHECK(again.labels == full.labels);
  CHECK_THROWS_AS(classify_scene(model, s.reduced, 7, 16), ValidationError);
}

TEST_CASE("a trained model reproduces the ground truth of a noise-free scene") {
  const auto s = scenes::small(3, 0.0);
  Model<float> model(scenes::tiny_spec(), 3);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 100;
  cfg.patience = 100;
  cfg.val_fraction = 0.0;  // a held-out slice saturates long before the boundaries are learned
  cfg.monitor = MonitorScope::TrainLoss;
  cfg.seed = 3;
  train(model, s.tiles, cfg);
  const ClassMap map = classify_scene(model, s.reduced, s.scene.labels, 5, true);
  CHECK(map.labels == s.scene.labels.labels);
}
