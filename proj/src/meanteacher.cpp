#include "dermaug/meanteacher.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>

#include "dermaug/error.hpp"
#include "dermaug/imagedata.hpp"
#include "dermaug/metrics.hpp"

namespace dermaug {
namespace {

constexpr std::uint64_t kTrainStream = 0x7EAC;
constexpr std::uint64_t kLabeledOrderStream = 0x0DE1;
constexpr std::uint64_t kUnlabeledOrderStream = 0x0DE2;
constexpr std::uint64_t kBalancedOrderStream = 0x0DE3;
constexpr std::size_t kInferenceChunk = 64;

// Runs body(i) for i in [0, n) across threads; rethrows the first failure.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(dermaug_parallel_for_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<const Image*> image_ptrs(std::span<const Sample> samples) {
  std::vector<const Image*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(&s.image);
  return out;
}

Tensor rows(const Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t k = t.dim(1);
  Tensor out({end - begin, k});
  std::copy(t.data.begin() + begin * k, t.data.begin() + end * k, out.data.begin());
  return out;
}

void check_fold_data(const Dataset& train) {
  if (train.empty()) throw DataError("degenerate fold: no labeled training samples");
  std::array<int, kNumClasses> seen{};
  for (const auto& e : train) {
    if (!e.label) throw DataError("degenerate fold: training sample '" + e.id + "' is unlabeled");
    seen[e.label->argmax()] = 1;
  }
  if (std::accumulate(seen.begin(), seen.end(), 0) < 2)
    throw DataError("degenerate fold: training split covers fewer than two classes");
}

double training_bacc(const ParamSet& params, const ModelSpec& spec, const NormStats& stats, const Dataset& train) {
  std::vector<Image> images;
  images.reserve(train.size());
  for (const auto& e : train) images.push_back(center_crop(e.image, spec.input_size));
  const auto preds = predict_softmax(params, spec, stats, images);
  const auto golds = train.labels();
  return balanced_accuracy(confusion_matrix(preds, golds));
}

struct EpochBatches {
  std::vector<std::size_t> labeled_order;
  std::vector<std::size_t> unlabeled_order;
  std::size_t steps = 0;
};

// Same length as the pool; every slot picks a class uniformly among those
// present, then a member of that class uniformly.
std::vector<std::size_t> balanced_order(const std::vector<Sample>& pool, std::uint64_t seed, int epoch) {
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool[i].label->argmax()].push_back(i);
  std::vector<int> present;
  for (int c = 0; c < kNumClasses; ++c)
    if (!by_class[c].empty()) present.push_back(c);
  auto rng = RngStream::derive(seed, {kBalancedOrderStream, static_cast<std::uint64_t>(epoch)});
  std::vector<std::size_t> order(pool.size());
  for (auto& slot : order) {
    const auto& members = by_class[present[rng.below(present.size())]];
    slot = members[rng.below(members.size())];
  }
  return order;
}

EpochBatches plan_epoch(const std::vector<Sample>& pool, std::size_t n_unlabeled, const MeanTeacherConfig& cfg,
                        std::uint64_t seed, int epoch) {
  const std::size_t n_labeled = pool.size();
  EpochBatches b;
  b.labeled_order = cfg.sampling == LabeledSampling::ClassBalanced
                        ? balanced_order(pool, seed, epoch)
                        : epoch_permutation(n_labeled, seed, kLabeledOrderStream, epoch);
  b.unlabeled_order = epoch_permutation(n_unlabeled, seed, kUnlabeledOrderStream, epoch);
  b.steps = (n_labeled + cfg.batch_size_labeled - 1) / cfg.batch_size_labeled;
  return b;
}

std::vector<Sample> labeled_batch(const std::vector<Sample>& pool, const EpochBatches& b, std::size_t step,
                                  int batch_size) {
  const std::size_t begin = step * batch_size;
  const std::size_t end = std::min(begin + batch_size, b.labeled_order.size());
  std::vector<Sample> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(pool[b.labeled_order[i]]);
  return out;
}

}  // namespace

void MeanTeacherConfig::validate() const {
  if (!(ema_alpha >= 0.0 && ema_alpha < 1.0)) throw ConfigError("mt.ema_alpha", "must lie in [0,1)");
  if (!(consistency_max_weight >= 0.0)) throw ConfigError("mt.consistency_max_weight", "must be non-negative");
  if (rampup_epochs < 0) throw ConfigError("mt.rampup_epochs", "must be non-negative");
  if (epochs < 0) throw ConfigError("mt.epochs", "must be non-negative");
  if (rampup_epochs > epochs) throw ConfigError("mt.rampup_epochs", "must not exceed mt.epochs");
  if (batch_size_labeled < 1) throw ConfigError("mt.batch_size_labeled", "must be positive");
  if (batch_size_unlabeled < 0) throw ConfigError("mt.batch_size_unlabeled", "must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("mt.lr", "must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("mt.momentum", "must lie in [0,1)");
}

TrainState init_train_state(const ModelSpec& spec, std::uint64_t seed) {
  ParamSet student = init_params(spec, seed);
  ParamSet velocity = student.zeros_like();
  ParamSet teacher = student;
  return {std::move(student), std::move(teacher), std::move(velocity), 0, 0, RngStream(seed, kTrainStream)};
}

void ema_update(ParamSet& teacher, const ParamSet& student, double alpha) {
  require_compatible(teacher, student, "ema_update");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("mt.ema_alpha", "EMA decay must lie in [0,1]");
  const double beta = 1.0 - alpha;
  for (std::size_t t = 0; t < teacher.size(); ++t) {
    auto& th = teacher.entry(t).second.data;
    const auto& st = student.entry(t).second.data;
    for (std::size_t i = 0; i < th.size(); ++i) th[i] = alpha * th[i] + beta * st[i];
  }
}

double consistency_weight(int epoch, const MeanTeacherConfig& cfg) {
  if (cfg.rampup_epochs <= 0 || epoch >= cfg.rampup_epochs) return cfg.consistency_max_weight;
  const double phase = 1.0 - std::min(static_cast<double>(std::max(epoch, 0)) / cfg.rampup_epochs, 1.0);
  return cfg.consistency_max_weight * std::exp(-5.0 * phase * phase);
}

std::vector<MixPlan> draw_mix_plans(RngStream& rng, std::span<const Sample> labeled,
                                    std::span<const Sample> partner_pool, double bc_prob) {
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < partner_pool.size(); ++i)
    if (partner_pool[i].label) by_class[partner_pool[i].label->argmax()].push_back(i);

  std::vector<MixPlan> plans(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (!rng.bernoulli(bc_prob) || !labeled[i].label) continue;
    const int own = labeled[i].label->argmax();
    std::size_t candidates = 0;
    for (int c = 0; c < kNumClasses; ++c)
      if (c != own) candidates += by_class[c].size();
    if (candidates == 0) continue;
    auto pick = rng.below(candidates);
    for (int c = 0; c < kNumClasses; ++c) {
      if (c == own) continue;
      if (pick < by_class[c].size()) {
        plans[i].partner = by_class[c][pick];
        break;
      }
      pick -= by_class[c].size();
    }
    plans[i].ratio = rng.uniform_open();
  }
  return plans;
}

Sample make_view(const Sample& sample, const MixPlan& plan, std::span<const Sample> partner_pool,
                 RngStream& rng, const AugConfig& aug, const NormStats& stats) {
  Sample view = augment_stages(sample, rng, aug);
  if (plan.partner) {
    const Sample other = augment_stages(partner_pool[*plan.partner], rng, aug);
    view = bc_mix_with_ratio(view, other, plan.ratio);
  }
  view.image = normalize(view.image, stats);
  return view;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = RngStream::derive(seed, {stream, static_cast<std::uint64_t>(epoch)});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

StepLosses train_step(TrainState& state, std::span<const Sample> labeled, std::span<const Image> unlabeled,
                      const StepContext& ctx) {
  if (labeled.empty()) throw DataError("train_step: empty labeled batch");
  for (const auto& s : labeled)
    if (!s.label) throw DataError("train_step: labeled batch contains an unlabeled sample");

  const std::uint64_t key = state.rng.next_u64();
  const auto plans = draw_mix_plans(state.rng, labeled, ctx.partner_pool, ctx.aug.bc_prob);
  const std::size_t n_lab = labeled.size(), n_all = n_lab + unlabeled.size();

  // views[v][i]: v = 0 student, v = 1 teacher.
  std::array<std::vector<Sample>, 2> views{std::vector<Sample>(n_all), std::vector<Sample>(n_all)};
  parallel_for(2 * n_all, [&](std::size_t job) {
    const std::size_t i = job / 2, v = job % 2;
    auto rng = RngStream::derive(key, {i, v});
    if (i < n_lab) {
      views[v][i] = make_view(labeled[i], plans[i], ctx.partner_pool, rng, ctx.aug, ctx.stats);
    } else {
      views[v][i] = make_view(Sample{unlabeled[i - n_lab], std::nullopt}, MixPlan{}, ctx.partner_pool, rng,
                              ctx.aug, ctx.stats);
    }
  });

  const auto student_images = image_ptrs(views[0]);
  auto fwd = forward(state.student, ctx.spec, images_to_batch(std::span<const Image* const>(student_images)));

  std::vector<SoftLabel> targets;
  targets.reserve(n_lab);
  for (std::size_t i = 0; i < n_lab; ++i) targets.push_back(*views[0][i].label);
  const auto ce = softmax_cross_entropy(rows(fwd.logits, 0, n_lab), targets);

  Tensor dlogits(fwd.logits.shape);
  std::copy(ce.grad.data.begin(), ce.grad.data.end(), dlogits.data.begin());

  StepLosses out;
  out.class_loss = ce.loss;
  out.cons_weight = consistency_weight(state.epoch, ctx.cfg);

  const auto teacher_images = image_ptrs(views[1]);
  const Tensor teacher_probs =
      softmax(forward_logits(state.teacher, ctx.spec, images_to_batch(std::span<const Image* const>(teacher_images))));
  const Tensor student_probs = softmax(fwd.logits);
  const auto cons = mse_consistency(student_probs, teacher_probs);
  out.cons_loss = cons.loss;
  if (out.cons_weight > 0.0) {
    const Tensor dcons = softmax_backward(student_probs, cons.grad);
    for (std::size_t i = 0; i < dlogits.size(); ++i) dlogits.data[i] += out.cons_weight * dcons.data[i];
  }

  const ParamSet grads = backward(fwd.cache, dlogits);
  sgd_update(state.student, grads, ctx.cfg.lr, ctx.cfg.momentum, state.velocity);
  ++state.step;
  return out;
}

std::vector<SoftLabel> predict_softmax(const ParamSet& params, const ModelSpec& spec, const NormStats& stats,
                                       std::span<const Image> images) {
  std::vector<SoftLabel> out;
  out.reserve(images.size());
  for (std::size_t begin = 0; begin < images.size(); begin += kInferenceChunk) {
    const std::size_t end = std::min(begin + kInferenceChunk, images.size());
    std::vector<Image> normalized;
    normalized.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) normalized.push_back(normalize(images[i], stats));
    const Tensor probs = softmax(forward_logits(params, spec, images_to_batch(std::span<const Image>(normalized))));
    for (std::size_t i = 0; i < end - begin; ++i) {
      SoftLabel l;
      std::copy_n(probs.data.begin() + i * kNumClasses, kNumClasses, l.probs.begin());
      out.push_back(l);
    }
  }
  return out;
}

FoldResult train_fold(const Dataset& train, const Dataset& unlabeled, const ModelSpec& spec,
                      const MeanTeacherConfig& cfg, const AugConfig& aug, std::uint64_t seed,
                      const StepObserver& observer) {
  cfg.validate();
  aug.validate();
  spec.validate();
  check_fold_data(train);

  FoldResult result;
  result.stats = compute_norm_stats(train);
  TrainState state = init_train_state(spec, seed);
  const auto pool = train.samples();
  std::vector<Image> unl_images;
  for (const auto& e : unlabeled) unl_images.push_back(e.image);
  const StepContext ctx{spec, cfg, aug, result.stats, pool};

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.epoch = epoch;
    const auto plan = plan_epoch(pool, unl_images.size(), cfg, seed, epoch);
    std::size_t unl_cursor = 0;
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t step = 0; step < plan.steps; ++step) {
      const auto batch = labeled_batch(pool, plan, step, cfg.batch_size_labeled);
      std::vector<Image> unl_batch;
      if (!unl_images.empty())
        for (int j = 0; j < cfg.batch_size_unlabeled; ++j)
          unl_batch.push_back(unl_images[plan.unlabeled_order[unl_cursor++ % unl_images.size()]]);
      const auto losses = train_step(state, batch, unl_batch, ctx);
      rec.class_loss += losses.class_loss;
      rec.cons_loss += losses.cons_loss;
      rec.cons_weight = losses.cons_weight;
      if (cfg.ema_granularity == EmaGranularity::Step) ema_update(state.teacher, state.student, cfg.ema_alpha);
      if (observer) observer(state);
    }
    if (cfg.ema_granularity == EmaGranularity::Epoch) ema_update(state.teacher, state.student, cfg.ema_alpha);
    rec.class_loss /= static_cast<double>(plan.steps);
    rec.cons_loss /= static_cast<double>(plan.steps);
    rec.train_bacc = training_bacc(state.teacher, spec, result.stats, train);
    result.history.push_back(rec);
  }
  result.student = std::move(state.student);
  result.teacher = std::move(state.teacher);
  return result;
}

FoldResult train_supervised(const Dataset& train, const ModelSpec& spec, const MeanTeacherConfig& cfg,
                            const AugConfig& aug, std::uint64_t seed, const StepObserver& observer) {
  cfg.validate();
  aug.validate();
  spec.validate();
  check_fold_data(train);

  FoldResult result;
  result.stats = compute_norm_stats(train);
  TrainState state = init_train_state(spec, seed);
  const auto pool = train.samples();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.epoch = epoch;
    const auto plan = plan_epoch(pool, 0, cfg, seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t step = 0; step < plan.steps; ++step) {
      const auto batch = labeled_batch(pool, plan, step, cfg.batch_size_labeled);
      const std::uint64_t key = state.rng.next_u64();
      const auto plans = draw_mix_plans(state.rng, batch, pool, aug.bc_prob);
      std::vector<Sample> views(batch.size());
      parallel_for(batch.size(), [&](std::size_t i) {
        auto rng = RngStream::derive(key, {i, 0});
        views[i] = make_view(batch[i], plans[i], pool, rng, aug, result.stats);
      });
      std::vector<SoftLabel> targets;
      for (const auto& v : views) targets.push_back(*v.label);
      const auto ptrs = image_ptrs(views);
      auto fwd = forward(state.student, spec, images_to_batch(std::span<const Image* const>(ptrs)));
      const auto ce = softmax_cross_entropy(fwd.logits, targets);
      const ParamSet grads = backward(fwd.cache, ce.grad);
      sgd_update(state.student, grads, cfg.lr, cfg.momentum, state.velocity);
      ++state.step;
      rec.class_loss += ce.loss;
      if (observer) observer(state);
    }
    rec.class_loss /= static_cast<double>(plan.steps);
    rec.train_bacc = training_bacc(state.student, spec, result.stats, train);
    result.history.push_back(rec);
  }
  result.teacher = state.student;
  result.student = std::move(state.student);
  return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::string out = "epoch,class_loss,cons_loss,cons_weight,train_bacc\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.class_loss, r.cons_loss, r.cons_weight,
                  r.train_bacc);
    out += buf;
  }
  return out;
}

}  // namespace dermaug
