#include "dermaug/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dermaug/error.hpp"
#include "dermaug/kvdoc.hpp"
#include "dermaug/metrics.hpp"
#include "dermaug/rng.hpp"

namespace dermaug {
namespace {

constexpr std::uint64_t kFoldStream = 0xF01D;
constexpr std::uint64_t kMemberSeedStream = 0x3E3B;
constexpr std::size_t kViewChunk = 64;

// Mean that is independent of input order and never leaves [min, max].
double stable_mean(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return std::clamp(sum / static_cast<double>(values.size()), values.front(), values.back());
}

// probs[image][class] for one member, averaged over its views.
std::vector<std::array<double, kNumClasses>> member_probs(const EnsembleMember& m, const ModelSpec& spec,
                                                          std::span<const Image> images, bool use_tta) {
  const std::size_t views_per_image = use_tta ? kTtaViewCount : 1;
  std::vector<Image> views;
  views.reserve(images.size() * views_per_image);
  for (const auto& img : images) {
    Image n = normalize(img, m.stats);
    if (use_tta) {
      for (auto& v : tta_views(n)) views.push_back(std::move(v));
    } else {
      views.push_back(std::move(n));
    }
  }
  std::vector<double> flat(views.size() * kNumClasses);
  for (std::size_t begin = 0; begin < views.size(); begin += kViewChunk) {
    const std::size_t end = std::min(begin + kViewChunk, views.size());
    const Tensor probs = softmax(forward_logits(
        m.params, spec, images_to_batch(std::span<const Image>(views.data() + begin, end - begin))));
    std::copy(probs.data.begin(), probs.data.end(), flat.begin() + begin * kNumClasses);
  }
  std::vector<std::array<double, kNumClasses>> out(images.size());
  std::vector<double> scratch(views_per_image);
  for (std::size_t i = 0; i < images.size(); ++i)
    for (int k = 0; k < kNumClasses; ++k) {
      for (std::size_t v = 0; v < views_per_image; ++v) scratch[v] = flat[(i * views_per_image + v) * kNumClasses + k];
      out[i][k] = stable_mean(scratch);
    }
  return out;
}

}  // namespace

void FoldPlan::validate(std::size_t n) const {
  if (k < 2 || folds.size() != static_cast<std::size_t>(k)) throw DataError("fold plan: need k >= 2 folds");
  std::vector<int> seen(n, 0);
  for (const auto& f : folds)
    for (std::size_t i : f) {
      if (i >= n) throw DataError("fold plan: index " + std::to_string(i) + " out of range");
      if (seen[i]++) throw DataError("fold plan: index " + std::to_string(i) + " appears twice");
    }
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) throw DataError("fold plan: index " + std::to_string(i) + " missing");
}

std::vector<std::size_t> FoldPlan::training_indices(int i) const {
  std::vector<std::size_t> out;
  for (int f = 0; f < k; ++f)
    if (f != i) out.insert(out.end(), folds[f].begin(), folds[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan stratified_kfold(std::span<const SoftLabel> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k", "need at least 2 folds");
  FoldPlan plan;
  plan.k = k;
  plan.folds.resize(k);
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i].argmax()].push_back(i);

  std::size_t next = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < static_cast<std::size_t>(k))
      plan.warnings.push_back(std::string(kClassNames[c]) + " has " + std::to_string(idx.size()) +
                              " samples, fewer than k = " + std::to_string(k) +
                              "; it is absent from some validation folds");
    auto rng = RngStream::derive(seed, {kFoldStream, static_cast<std::uint64_t>(c)});
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    for (std::size_t i : idx) plan.folds[next++ % k].push_back(i);
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

void EnsembleModel::validate() const {
  spec.validate();
  if (members.empty()) throw ShapeError("ensemble has no members");
  for (const auto& m : members) {
    check_params(m.params, spec);
    for (double s : m.stats.std)
      if (!(s > 0.0)) throw ShapeError("ensemble member has a non-positive normalization std");
  }
}

EnsembleTrainResult train_ensemble(const Dataset& labeled, const Dataset& unlabeled, const FoldPlan& plan,
                                   const TrainingConfigs& cfgs, std::uint64_t seed) {
  plan.validate(labeled.size());
  EnsembleTrainResult result;
  result.model.spec = cfgs.model;
  for (int i = 0; i < plan.k; ++i) {
    MemberReport report;
    report.fold = i;
    report.train_indices = plan.training_indices(i);
    report.validation_indices = plan.folds[i];
    const Dataset train = labeled.subset(report.train_indices);
    const std::uint64_t member_seed = RngStream::derive(seed, {kMemberSeedStream, std::uint64_t(i)}).next_u64();
    FoldResult fold = train_fold(train, unlabeled, cfgs.model, cfgs.mt, cfgs.aug, member_seed);

    if (report.validation_indices.empty()) {
      report.heldout_bacc = std::numeric_limits<double>::quiet_NaN();
    } else {
      const Dataset val = labeled.subset(report.validation_indices);
      std::vector<Image> images;
      for (const auto& e : val) images.push_back(center_crop(e.image, cfgs.model.input_size));
      const auto preds = predict_softmax(fold.teacher, cfgs.model, fold.stats, images);
      report.heldout_bacc = balanced_accuracy(confusion_matrix(preds, val.labels()));
    }
    report.history = std::move(fold.history);
    result.model.members.push_back({std::move(fold.teacher), fold.stats});
    result.reports.push_back(std::move(report));
  }
  return result;
}

std::vector<SoftLabel> predict_images(const EnsembleModel& model, std::span<const Image> images, bool use_tta) {
  model.validate();
  for (const auto& img : images)
    if (img.height != model.spec.input_size || img.width != model.spec.input_size || img.channels != kChannels)
      throw ShapeError("predict: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                       " does not match model input " + std::to_string(model.spec.input_size));
  std::vector<std::vector<std::array<double, kNumClasses>>> per_member;
  for (const auto& m : model.members) per_member.push_back(member_probs(m, model.spec, images, use_tta));

  std::vector<SoftLabel> out(images.size());
  std::vector<double> scratch(model.members.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    for (int k = 0; k < kNumClasses; ++k) {
      for (std::size_t m = 0; m < per_member.size(); ++m) scratch[m] = per_member[m][i][k];
      out[i].probs[k] = stable_mean(scratch);
    }
  return out;
}

SoftLabel predict(const EnsembleModel& model, const Image& image, bool use_tta) {
  return predict_images(model, std::span<const Image>(&image, 1), use_tta).front();
}

std::vector<LabelRow> predict_dataset(const EnsembleModel& model, const Dataset& dataset, bool use_tta) {
  std::vector<Image> images;
  images.reserve(dataset.size());
  for (const auto& e : dataset) images.push_back(e.image);
  const auto probs = images.empty() ? std::vector<SoftLabel>{} : predict_images(model, images, use_tta);
  std::vector<LabelRow> rows;
  rows.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) rows.push_back({dataset[i].id, probs[i]});
  return rows;
}

void save_ensemble(const std::filesystem::path& dir, const EnsembleModel& model) {
  model.validate();
  std::filesystem::create_directories(dir);
  KvDocument doc;
  doc.set("model.input_size", std::to_string(model.spec.input_size));
  std::string widths;
  for (std::size_t i = 0; i < model.spec.widths.size(); ++i)
    widths += (i ? "," : "") + std::to_string(model.spec.widths[i]);
  doc.set("model.widths", widths);
  doc.set("model.se_reduction", std::to_string(model.spec.se_reduction));
  doc.set("members", std::to_string(model.members.size()));
  for (std::size_t i = 0; i < model.members.size(); ++i) {
    const auto& m = model.members[i];
    const std::string prefix = "member." + std::to_string(i) + ".";
    const std::string file = "member_" + std::to_string(i) + ".params";
    save_params(dir / file, m.params);
    doc.set(prefix + "checkpoint", file);
    doc.set(prefix + "mean", format_double(m.stats.mean[0]) + "," + format_double(m.stats.mean[1]) + "," +
                                 format_double(m.stats.mean[2]));
    doc.set(prefix + "std", format_double(m.stats.std[0]) + "," + format_double(m.stats.std[1]) + "," +
                                format_double(m.stats.std[2]));
  }
  write_text_file(dir / "manifest.txt", doc.to_string());
}

EnsembleModel load_ensemble(const std::filesystem::path& manifest) {
  const auto doc = KvDocument::parse(read_text_file(manifest));
  EnsembleModel model;
  model.spec.input_size = static_cast<int>(parse_int("model.input_size", doc.require("model.input_size")));
  model.spec.widths.clear();
  for (auto w : parse_int_list("model.widths", doc.require("model.widths"))) model.spec.widths.push_back(int(w));
  model.spec.se_reduction = static_cast<int>(parse_int("model.se_reduction", doc.require("model.se_reduction")));
  const auto count = parse_int("members", doc.require("members"));
  if (count < 1) throw ConfigError("members", "manifest lists no members");
  const auto base = manifest.parent_path();
  for (std::int64_t i = 0; i < count; ++i) {
    const std::string prefix = "member." + std::to_string(i) + ".";
    EnsembleMember m;
    m.params = load_params(base / doc.require(prefix + "checkpoint"));
    const auto mean = parse_double_list(prefix + "mean", doc.require(prefix + "mean"));
    const auto sd = parse_double_list(prefix + "std", doc.require(prefix + "std"));
    if (mean.size() != 3 || sd.size() != 3) throw ConfigError(prefix + "mean", "need three channel values");
    std::copy(mean.begin(), mean.end(), m.stats.mean.begin());
    std::copy(sd.begin(), sd.end(), m.stats.std.begin());
    model.members.push_back(std::move(m));
  }
  model.validate();
  return model;
}

}  // namespace dermaug
