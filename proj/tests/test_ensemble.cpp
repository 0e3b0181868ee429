#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dermaug/ensemble.hpp"
#include "dermaug/error.hpp"
#include "support.hpp"

using namespace dermaug;

namespace {

ModelSpec tiny_model() {
  ModelSpec s;
  s.input_size = 16;
  s.widths = {8, 8};
  return s;
}

EnsembleMember member(const ModelSpec& spec, std::uint64_t seed) {
  NormStats st;
  st.mean = {0.4 + 0.01 * double(seed % 5), 0.5, 0.45};
  st.std = {0.2, 0.25 + 0.01 * double(seed % 3), 0.3};
  return {init_params(spec, seed), st};
}

EnsembleModel model_of(const ModelSpec& spec, std::initializer_list<std::uint64_t> seeds) {
  EnsembleModel m{spec, {}};
  for (auto s : seeds) m.members.push_back(member(spec, s));
  return m;
}

SoftLabel member_softmax(const EnsembleMember& m, const ModelSpec& spec, const Image& img) {
  return predict_softmax(m.params, spec, m.stats, std::span<const Image>(&img, 1))[0];
}

std::vector<SoftLabel> table_labels(std::span<const int> counts) {
  std::vector<SoftLabel> labels;
  for (int c = 0; c < 7; ++c)
    for (int i = 0; i < counts[c]; ++i) labels.push_back(SoftLabel::one_hot(c));
  return labels;
}

}  // namespace

TEST_CASE("folds: even deal of a single class") {
  const auto labels = std::vector<SoftLabel>(10, SoftLabel::one_hot(3));
  const auto plan = stratified_kfold(labels, 5, 1);
  REQUIRE(plan.folds.size() == 5);
  for (const auto& f : plan.folds) CHECK(f.size() == 2);
  CHECK_NOTHROW(plan.validate(10));
}

TEST_CASE("folds: stratified within one of count / k, exact partition, deterministic") {
  const std::array<int, 7> counts = {23, 135, 11, 7, 22, 3, 3};
  const auto labels = table_labels(counts);
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto plan = stratified_kfold(labels, 5, seed);
    std::vector<int> seen(labels.size(), 0);
    for (const auto& f : plan.folds)
      for (auto i : f) ++seen[i];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    for (int c = 0; c < 7; ++c)
      for (const auto& f : plan.folds) {
        const auto n = std::count_if(f.begin(), f.end(), [&](std::size_t i) { return labels[i].argmax() == c; });
        CHECK(std::abs(double(n) - counts[c] / 5.0) < 1.0);
      }
    std::size_t largest = 0, smallest = labels.size();
    for (const auto& f : plan.folds) largest = std::max(largest, f.size()), smallest = std::min(smallest, f.size());
    CHECK(largest - smallest <= 1);
    CHECK(plan.warnings.size() == 2);
    CHECK(plan.folds == stratified_kfold(labels, 5, seed).folds);
  }
  CHECK(stratified_kfold(labels, 5, 1).folds != stratified_kfold(labels, 5, 2).folds);

  const auto plan = stratified_kfold(labels, 5, 1);
  const auto train0 = plan.training_indices(0);
  CHECK(std::is_sorted(train0.begin(), train0.end()));
  CHECK(train0.size() + plan.folds[0].size() == labels.size());
}

TEST_CASE("folds: k below two and broken partitions are rejected") {
  const auto labels = std::vector<SoftLabel>(4, SoftLabel::one_hot(0));
  CHECK_THROWS_AS(stratified_kfold(labels, 1, 1), ConfigError);
  FoldPlan bad{2, {{0, 1}, {1, 2}}, {}};
  CHECK_THROWS_AS(bad.validate(3), DataError);
  FoldPlan missing{2, {{0}, {2}}, {}};
  CHECK_THROWS_AS(missing.validate(3), DataError);
}

TEST_CASE("predict: single member without TTA is that member's softmax") {
  const auto spec = tiny_model();
  const auto m = model_of(spec, {4});
  const auto img = testing::random_image(16, 16, 1);
  CHECK(predict(m, img, false) == member_softmax(m.members[0], spec, img));
}

TEST_CASE("predict: two members average exactly") {
  const auto spec = tiny_model();
  const auto m = model_of(spec, {4, 5});
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto img = testing::random_image(16, 16, s);
    const auto p = member_softmax(m.members[0], spec, img), q = member_softmax(m.members[1], spec, img);
    const auto e = predict(m, img, false);
    for (int k = 0; k < 7; ++k) CHECK(e.probs[k] == (p.probs[k] + q.probs[k]) / 2);
  }
}

TEST_CASE("predict: TTA is a no-op on rotation-symmetric input") {
  const auto spec = tiny_model();
  const auto m = model_of(spec, {1, 2, 3});
  const auto img = testing::constant_image(16, 16, 0.37);
  const auto on = predict(m, img, true), off = predict(m, img, false);
  for (int k = 0; k < 7; ++k) CHECK(std::abs(on.probs[k] - off.probs[k]) <= 1e-12);
}

TEST_CASE("predict: TTA averages the member's eight views") {
  const auto spec = tiny_model();
  const auto m = model_of(spec, {6});
  const auto img = testing::random_image(16, 16, 2);
  std::array<double, 7> mean{};
  for (const auto& v : tta_views(img)) {
    const auto p = member_softmax(m.members[0], spec, v);
    for (int k = 0; k < 7; ++k) mean[k] += p.probs[k] / kTtaViewCount;
  }
  const auto out = predict(m, img, true);
  for (int k = 0; k < 7; ++k) CHECK(out.probs[k] == doctest::Approx(mean[k]).epsilon(1e-14));
}

TEST_CASE("predict: order invariance, convex bounds, identical members") {
  const auto spec = tiny_model();
  const auto m = model_of(spec, {11, 12, 13, 14, 15});
  auto reversed = m;
  std::reverse(reversed.members.begin(), reversed.members.end());
  auto rotated = m;
  std::rotate(rotated.members.begin(), rotated.members.begin() + 2, rotated.members.end());
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto img = testing::random_image(16, 16, 100 + s);
    for (bool tta : {false, true}) {
      const auto e = predict(m, img, tta);
      CHECK(e == predict(reversed, img, tta));
      CHECK(e == predict(rotated, img, tta));
      CHECK(std::abs(e.sum() - 1.0) <= 1e-9);
      for (int k = 0; k < 7; ++k) {
        double lo = 1.0, hi = 0.0;
        for (const auto& mem : m.members) {
          const auto p = predict(EnsembleModel{spec, {mem}}, img, tta).probs[k];
          lo = std::min(lo, p), hi = std::max(hi, p);
        }
        CHECK(e.probs[k] >= lo);
        CHECK(e.probs[k] <= hi);
      }
    }
  }

  const auto single = model_of(spec, {21});
  auto same = single;
  for (int i = 0; i < 4; ++i) same.members.push_back(single.members[0]);
  const auto img = testing::random_image(16, 16, 7);
  CHECK(predict(same, img, true) == predict(single, img, true));
  CHECK(predict(same, img, false) == predict(single, img, false));
}

TEST_CASE("predict: mismatched images and empty ensembles are errors") {
  const auto spec = tiny_model();
  CHECK_THROWS_AS(predict(model_of(spec, {1}), testing::random_image(20, 20, 1), false), ShapeError);
  CHECK_THROWS_AS(predict(EnsembleModel{spec, {}}, testing::random_image(16, 16, 1), false), ShapeError);
}

TEST_CASE("predict_dataset: header-only when empty, valid rows, CSV round trip") {
  const auto spec = tiny_model();
  const auto m = model_of(spec, {1, 2});
  CHECK(write_labels_csv(predict_dataset(m, Dataset{}, true)) == std::string(kLabelsHeader) + "\n");

  Dataset d;
  for (int i = 0; i < 6; ++i) d.add({"img_" + std::to_string(i), testing::random_image(16, 16, i), std::nullopt});
  const auto rows = predict_dataset(m, d, true);
  REQUIRE(rows.size() == 6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].id == d[i].id);
    CHECK(std::abs(rows[i].label.sum() - 1.0) <= 1e-9);
    CHECK(rows[i].label == predict(m, d[i].image, true));
  }
  const auto back = load_labels_csv(write_labels_csv(rows));
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].id == rows[i].id);
    CHECK(back[i].label == rows[i].label);
  }
}

TEST_CASE("ensemble files round-trip") {
  const auto spec = tiny_model();
  const auto m = model_of(spec, {3, 4, 5});
  testing::TempDir dir("ensemble");
  save_ensemble(dir.path(), m);
  const auto back = load_ensemble(dir / "manifest.txt");
  CHECK(back.spec == m.spec);
  REQUIRE(back.members.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.members[i].params == m.members[i].params);
    CHECK(back.members[i].stats == m.members[i].stats);
  }
  CHECK_THROWS(load_ensemble(dir / "nope.txt"));
}

TEST_CASE("train_ensemble: k = 2 bookkeeping and determinism") {
  SynthSpec synth;
  synth.image_size = 16;
  synth.class_counts = {4, 6, 4, 4, 4, 4, 4};
  synth.unlabeled_count = 6;
  const auto data = make_synthetic_dataset(synth, 3, 2);
  const auto labeled = data.labeled();
  TrainingConfigs cfgs;
  cfgs.model = tiny_model();
  cfgs.mt.epochs = 2;
  cfgs.mt.rampup_epochs = 1;
  cfgs.mt.batch_size_labeled = 8;
  cfgs.aug.crop_size = 16;
  const auto plan = stratified_kfold(labeled.labels(), 2, 4);
  const auto a = train_ensemble(labeled, data.unlabeled(), plan, cfgs, 5);
  REQUIRE(a.model.members.size() == 2);
  REQUIRE(a.reports.size() == 2);
  for (int i = 0; i < 2; ++i) {
    const auto& r = a.reports[i];
    CHECK(r.fold == i);
    CHECK(r.validation_indices == plan.folds[i]);
    const std::set<std::size_t> train(r.train_indices.begin(), r.train_indices.end());
    for (auto v : r.validation_indices) CHECK(train.count(v) == 0);
    CHECK(train.size() + r.validation_indices.size() == labeled.size());
    CHECK(r.history.size() == 2);
    CHECK((r.heldout_bacc >= 0.0 && r.heldout_bacc <= 1.0));
    CHECK(a.model.members[i].stats == compute_norm_stats(labeled.subset(r.train_indices)));
  }
  CHECK(a.model.members[0].params != a.model.members[1].params);

  const auto b = train_ensemble(labeled, data.unlabeled(), plan, cfgs, 5);
  for (int i = 0; i < 2; ++i) {
    CHECK(a.model.members[i].params == b.model.members[i].params);
    CHECK(a.reports[i].heldout_bacc == b.reports[i].heldout_bacc);
  }
}
