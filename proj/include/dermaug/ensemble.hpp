#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dermaug/augment.hpp"
#include "dermaug/imagedata.hpp"
#include "dermaug/meanteacher.hpp"
#include "dermaug/nn.hpp"

namespace dermaug {

/// k disjoint index lists covering every labeled sample.
struct FoldPlan {
  int k = 0;
  std::vector<std::vector<std::size_t>> folds;
  /// Classes with fewer than k samples (absent from some validation folds).
  std::vector<std::string> warnings;

  /// Throws DataError unless the folds partition [0, n).
  void validate(std::size_t n) const;
  /// Every index outside fold `i`, ascending.
  std::vector<std::size_t> training_indices(int i) const;
};

/// Per class (argmax of the label), indices are shuffled by the seed and
/// dealt round-robin; the deal continues across classes so fold sizes stay
/// balanced. Throws ConfigError when k < 2.
FoldPlan stratified_kfold(std::span<const SoftLabel> labels, int k, std::uint64_t seed);

struct EnsembleMember {
  ParamSet params;
  NormStats stats;
};

struct EnsembleModel {
  ModelSpec spec;
  std::vector<EnsembleMember> members;

  /// Throws ShapeError when empty or a member does not fit the ModelSpec.
  void validate() const;
};

struct TrainingConfigs {
  ModelSpec model;
  MeanTeacherConfig mt;
  AugConfig aug;
};

struct MemberReport {
  int fold = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
  /// NaN when the validation fold is empty.
  double heldout_bacc = 0.0;
  std::vector<EpochRecord> history;
};

struct EnsembleTrainResult {
  EnsembleModel model;
  std::vector<MemberReport> reports;
};

/// Member i is the teacher of a mean-teacher run on every labeled sample
/// outside fold i, with normalization statistics from that split only.
EnsembleTrainResult train_ensemble(const Dataset& labeled, const Dataset& unlabeled, const FoldPlan& plan,
                                   const TrainingConfigs& cfgs, std::uint64_t seed);

/// Member-uniform mean of per-member TTA-averaged softmax outputs. Means are
/// computed over sorted values and clamped to their [min, max], so member
/// order never changes the bits and identical members reproduce one member.
SoftLabel predict(const EnsembleModel& model, const Image& image, bool use_tta);
std::vector<SoftLabel> predict_images(const EnsembleModel& model, std::span<const Image> images, bool use_tta);
/// One row per sample in dataset order, in the ground-truth CSV schema.
std::vector<LabelRow> predict_dataset(const EnsembleModel& model, const Dataset& dataset, bool use_tta);

/// Manifest: key/value document listing the model spec and, per member, its
/// checkpoint (relative to the manifest) and normalization statistics.
void save_ensemble(const std::filesystem::path& dir, const EnsembleModel& model);
EnsembleModel load_ensemble(const std::filesystem::path& manifest);

}  // namespace dermaug
