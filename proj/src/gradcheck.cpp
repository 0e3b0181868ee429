#include <algorithm>
#include <cmath>
#include <numeric>

#include "dermaug/nn.hpp"
#include "dermaug/rng.hpp"

namespace dermaug {
namespace {

constexpr std::size_t kBatch = 4;
constexpr std::size_t kCoordsPerTensor = 200;

// Relative error with a small absolute floor so near-zero gradients do not
// turn round-off into large ratios.
double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Sign of every ReLU input in the network, conv and SE hidden layers alike.
std::vector<bool> relu_pattern(const ForwardCache& cache) {
  std::vector<bool> bits;
  for (const auto& st : cache.stages) {
    for (double v : st.conv_out.data) bits.push_back(v > 0.0);
    for (double v : st.se.hidden_pre.data) bits.push_back(v > 0.0);
  }
  return bits;
}

}  // namespace

GradCheckReport grad_check_report(const ModelSpec& spec, std::uint64_t seed, const BackwardFn& backward_fn) {
  RngStream rng(seed, 0x6C4E);
  ParamSet params = init_params(spec, rng.next_u64());
  // Non-zero biases so every ReLU sees both signs.
  for (auto& [name, t] : params)
    if (name.ends_with("bias"))
      for (double& v : t.data) v = rng.uniform(-0.1, 0.1);

  Tensor batch({kBatch, std::size_t(spec.input_channels), std::size_t(spec.input_size), std::size_t(spec.input_size)});
  for (double& v : batch.data) v = rng.uniform(-1.0, 1.0);
  std::vector<SoftLabel> targets(kBatch);
  for (auto& t : targets) {
    double z = 0.0;
    for (double& p : t.probs) z += (p = rng.uniform_open());
    for (double& p : t.probs) p /= z;
  }

  // Loss at `p`; `smooth` is cleared when the ReLU pattern differs from the base point's.
  std::vector<bool> base_pattern;
  auto loss_at = [&](const ParamSet& p, bool& smooth) {
    auto r = forward(p, spec, batch);
    smooth = smooth && relu_pattern(r.cache) == base_pattern;
    return softmax_cross_entropy(r.logits, targets).loss;
  };

  auto fwd = forward(params, spec, batch);
  base_pattern = relu_pattern(fwd.cache);
  const auto ce = softmax_cross_entropy(fwd.logits, targets);
  const ParamSet grads = backward_fn(fwd.cache, ce.grad);

  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& name = params.entry(t).first;
    const std::size_t size = params.entry(t).second.size();
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (size > kCoordsPerTensor) {
      for (std::size_t i = 0; i < kCoordsPerTensor; ++i) std::swap(coords[i], coords[i + rng.below(size - i)]);
      coords.resize(kCoordsPerTensor);
    }
    for (std::size_t i : coords) {
      double& v = params.entry(t).second.data[i];
      const double saved = v;
      bool smooth = true;
      v = saved + kGradCheckEpsilon;
      const double up = loss_at(params, smooth);
      v = saved - kGradCheckEpsilon;
      const double down = loss_at(params, smooth);
      v = saved;
      if (!smooth) {
        ++report.coordinates_skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * kGradCheckEpsilon);
      const double err = relative_error(grads.at(name).data[i], numeric);
      if (report.worst_parameter.empty() || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = name;
      }
      ++report.coordinates_checked;
    }
  }
  return report;
}

double grad_check(const ModelSpec& spec, std::uint64_t seed, const BackwardFn& backward_fn) {
  return grad_check_report(spec, seed, backward_fn).max_relative_error;
}

}  // namespace dermaug
