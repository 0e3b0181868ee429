#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dermaug/image.hpp"
#include "dermaug/tensor.hpp"

namespace dermaug {

/// Toy SE-CNN: per stage conv3x3 -> ReLU -> SE block -> 2x2 average pool;
/// head is global average pool -> fully connected -> class logits.
struct ModelSpec {
  int input_size = 32;
  std::vector<int> widths = {8, 16, 32};
  int se_reduction = 4;
  int class_count = kNumClasses;
  int input_channels = kChannels;

  /// Throws ConfigError naming the `model.*` key.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Glorot-uniform weights, zero biases; a pure function of (spec, seed).
/// Names: stage<i>.conv.{weight,bias}, stage<i>.se.{reduce,expand}, head.fc.{weight,bias}.
ParamSet init_params(const ModelSpec& spec, std::uint64_t seed);
/// Throws ShapeError naming the first missing or misshapen layer.
void check_params(const ParamSet& params, const ModelSpec& spec);

/// Packs images (HWC) into an N x C x H x W batch.
Tensor images_to_batch(std::span<const Image> images);
Tensor images_to_batch(std::span<const Image* const> images);

// --- squeeze-and-excitation ---------------------------------------------------

/// reduce is [C x C/r], expand is [C/r x C]; no biases.
struct SeBlockParams {
  Tensor reduce;
  Tensor expand;
  int reduction = 1;
};

struct SeCache {
  Tensor squeezed;    // [N x C] spatial means
  Tensor hidden_pre;  // [N x C/r] before ReLU
  Tensor gate;        // [N x C] sigmoid outputs
};

/// output[n,c,:,:] = sigmoid(expand . relu(reduce . mean_hw(x)))[n,c] * x[n,c,:,:]
Tensor se_block_forward(const Tensor& features, const SeBlockParams& p, SeCache* cache = nullptr);

struct SeGrads {
  Tensor dfeatures;
  Tensor dreduce;
  Tensor dexpand;
};
SeGrads se_block_backward(const Tensor& features, const SeBlockParams& p, const SeCache& cache,
                          const Tensor& doutput);

// --- whole network ------------------------------------------------------------

struct StageCache {
  Tensor input;
  Tensor conv_out;
  Tensor relu_out;
  SeCache se;
};

/// Activations kept for one backward pass; consumed by it.
struct ForwardCache {
  ModelSpec spec;
  ParamSet params;
  std::vector<StageCache> stages;
  Tensor pooled;  // [N x C_last] head input
  bool consumed = false;
};

struct ForwardResult {
  Tensor logits;  // [N x classes]
  ForwardCache cache;
};

ForwardResult forward(const ParamSet& params, const ModelSpec& spec, const Tensor& batch);
/// Inference-only forward; keeps no activations.
Tensor forward_logits(const ParamSet& params, const ModelSpec& spec, const Tensor& batch);

/// Exact reverse-mode gradients of every parameter. Throws InvariantError
/// when the cache was already consumed.
ParamSet backward(ForwardCache& cache, const Tensor& dlogits);

// --- losses ----------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);
/// Pulls a gradient w.r.t. softmax outputs back to the logits.
Tensor softmax_backward(const Tensor& probs, const Tensor& dprobs);

/// Mean soft-target cross-entropy; grad is (softmax - t) / N.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const SoftLabel> targets);
/// Mean squared difference over N x classes entries; grad flows to the student only.
LossResult mse_consistency(const Tensor& student_probs, const Tensor& teacher_probs);

// --- optimisation ----------------------------------------------------------------

/// v <- momentum * v + g; p <- p - lr * v.
void sgd_update(ParamSet& params, const ParamSet& grads, double lr, double momentum, ParamSet& velocity);

// --- gradient check ---------------------------------------------------------------

using BackwardFn = std::function<ParamSet(ForwardCache&, const Tensor&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates_checked = 0;
  /// Coordinates whose +-epsilon probe moved a ReLU input across zero; the
  /// loss is not differentiable on that interval, so they are not compared.
  std::size_t coordinates_skipped = 0;
};

inline constexpr double kGradCheckEpsilon = 1e-4;

/// Random parameters, a 4-image batch and random soft targets; compares
/// `backward_fn` against central differences of the cross-entropy on up to
/// 200 random coordinates per tensor (all of them for smaller tensors).
/// Coordinates whose probe flips a ReLU are counted in coordinates_skipped.
GradCheckReport grad_check_report(const ModelSpec& spec, std::uint64_t seed,
                                  const BackwardFn& backward_fn = backward);
double grad_check(const ModelSpec& spec, std::uint64_t seed, const BackwardFn& backward_fn = backward);

// --- checkpoints -------------------------------------------------------------------

/// Binary container: "DMPS" magic, u32 version, u32 tensor count, then per
/// tensor u32 name length, name bytes, u32 rank, u64 dims; then every
/// tensor's data as little-endian IEEE-754 doubles in table order.
std::vector<std::uint8_t> serialize_params(const ParamSet& params);
ParamSet deserialize_params(std::span<const std::uint8_t> bytes);
void save_params(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_params(const std::filesystem::path& path);

}  // namespace dermaug
