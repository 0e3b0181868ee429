#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dermaug/augment.hpp"
#include "dermaug/image.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/rng.hpp"

namespace dermaug {

enum class EmaGranularity { Step, Epoch };

/// How an epoch's labeled batches are filled: a plain shuffle of the split,
/// or as many draws (with replacement) of class-uniform then member-uniform
/// picks, so rare classes are seen as often as common ones.
enum class LabeledSampling { Shuffle, ClassBalanced };

struct MeanTeacherConfig {
  double ema_alpha = 0.99;
  double consistency_max_weight = 1.0;
  int rampup_epochs = 10;
  int epochs = 60;
  int batch_size_labeled = 16;
  int batch_size_unlabeled = 4;
  double lr = 0.03;
  double momentum = 0.9;
  EmaGranularity ema_granularity = EmaGranularity::Step;
  LabeledSampling sampling = LabeledSampling::ClassBalanced;

  /// Throws ConfigError naming the `mt.*` key.
  void validate() const;
  bool operator==(const MeanTeacherConfig&) const = default;
};

struct TrainState {
  ParamSet student;
  ParamSet teacher;
  ParamSet velocity;
  int epoch = 0;
  std::uint64_t step = 0;
  RngStream rng;
};

/// Student from init_params, teacher a copy of it, zero velocity.
TrainState init_train_state(const ModelSpec& spec, std::uint64_t seed);

/// teacher <- alpha * teacher + (1 - alpha) * student, coordinatewise.
void ema_update(ParamSet& teacher, const ParamSet& student, double alpha);

/// Sigmoid ramp-up: max_weight * exp(-5 (1 - min(epoch / rampup, 1))^2).
double consistency_weight(int epoch, const MeanTeacherConfig& cfg);

/// Everything a step needs besides the state and the batch.
struct StepContext {
  const ModelSpec& spec;
  const MeanTeacherConfig& cfg;
  const AugConfig& aug;
  /// Applied to every augmented view before it reaches a network.
  const NormStats& stats;
  /// Labeled training samples eligible as between-class partners.
  std::span<const Sample> partner_pool;
};

struct StepLosses {
  double class_loss = 0.0;
  double cons_loss = 0.0;
  double cons_weight = 0.0;
};

/// One mean-teacher optimizer step on the student. Labeled samples and
/// unlabeled images are raw ([0,1]) and are augmented twice with independent
/// streams: one view for the student, one for the teacher. The teacher is
/// not modified. Throws DataError on an empty labeled batch.
StepLosses train_step(TrainState& state, std::span<const Sample> labeled, std::span<const Image> unlabeled,
                      const StepContext& ctx);

// --- view construction shared by the trainers --------------------------------

/// Between-class decision for one labeled sample; shared by both of its views.
struct MixPlan {
  std::optional<std::size_t> partner;  // index into the partner pool
  double ratio = 1.0;
};

/// Per sample: one bc gate draw, then (if it fires and a sample of another
/// class exists) a partner index and a ratio in (0,1).
std::vector<MixPlan> draw_mix_plans(RngStream& rng, std::span<const Sample> labeled,
                                    std::span<const Sample> partner_pool, double bc_prob);

/// augment_stages on the sample (and on its partner, then mixed), followed by
/// normalization.
Sample make_view(const Sample& sample, const MixPlan& plan, std::span<const Sample> partner_pool,
                 RngStream& rng, const AugConfig& aug, const NormStats& stats);

/// Epoch-level shuffle shared by every trainer built on the same seed.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream, int epoch);

// --- fold training --------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double class_loss = 0.0;
  double cons_loss = 0.0;
  double cons_weight = 0.0;
  double train_bacc = 0.0;
};

struct FoldResult {
  ParamSet student;
  ParamSet teacher;  // the inference model
  NormStats stats;   // computed on this fold's labeled training split
  std::vector<EpochRecord> history;
};

/// Called after every optimizer step (after any per-step EMA merge).
using StepObserver = std::function<void(const TrainState&)>;

/// Epochs x batches of train_step with EMA merges per step or per epoch.
/// `train` must hold labeled samples of at least two classes.
FoldResult train_fold(const Dataset& train, const Dataset& unlabeled, const ModelSpec& spec,
                      const MeanTeacherConfig& cfg, const AugConfig& aug, std::uint64_t seed,
                      const StepObserver& observer = {});

/// Plain supervised training with the same data pipeline and seeding, no
/// teacher and no consistency term. Returns the student as both models.
FoldResult train_supervised(const Dataset& train, const ModelSpec& spec, const MeanTeacherConfig& cfg,
                            const AugConfig& aug, std::uint64_t seed, const StepObserver& observer = {});

/// `epoch,class_loss,cons_loss,cons_weight,train_bacc` with a header row.
std::string history_csv(std::span<const EpochRecord> history);

/// Softmax outputs of one network on normalized copies of `images`.
std::vector<SoftLabel> predict_softmax(const ParamSet& params, const ModelSpec& spec, const NormStats& stats,
                                       std::span<const Image> images);

}  // namespace dermaug
