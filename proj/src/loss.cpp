#include <algorithm>
#include <cmath>

#include "dermaug/error.hpp"
#include "dermaug/nn.hpp"

namespace dermaug {

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: logits must be N x K");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &logits.data[i * k];
    const double m = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p.data[i * k + j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < k; ++j) p.data[i * k + j] /= z;
  }
  return p;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& dprobs) {
  if (probs.shape != dprobs.shape || probs.rank() != 2) throw ShapeError("softmax_backward: shape mismatch");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  Tensor d(probs.shape);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += probs.data[i * k + j] * dprobs.data[i * k + j];
    for (std::size_t j = 0; j < k; ++j) d.data[i * k + j] = probs.data[i * k + j] * (dprobs.data[i * k + j] - dot);
  }
  return d;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const SoftLabel> targets) {
  if (logits.rank() != 2 || logits.dim(1) != std::size_t(kNumClasses))
    throw ShapeError("cross-entropy: logits must be N x 7");
  const std::size_t n = logits.dim(0), k = kNumClasses;
  if (n == 0) throw ShapeError("cross-entropy: empty batch");
  if (targets.size() != n) throw ShapeError("cross-entropy: target count does not match batch");
  for (double v : logits.data)
    if (!std::isfinite(v)) throw InvariantError("cross-entropy: non-finite logit");

  LossResult r{0.0, Tensor(logits.shape)};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &logits.data[i * k];
    const double m = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < k; ++j) {
      const double t = targets[i].probs[j];
      if (t != 0.0) r.loss -= t * (row[j] - lse);
      r.grad.data[i * k + j] = (std::exp(row[j] - lse) - t) * inv_n;
    }
  }
  r.loss *= inv_n;
  return r;
}

LossResult mse_consistency(const Tensor& student_probs, const Tensor& teacher_probs) {
  if (student_probs.shape != teacher_probs.shape || student_probs.rank() != 2)
    throw ShapeError("consistency: student " + shape_string(student_probs.shape) + " vs teacher " +
                     shape_string(teacher_probs.shape));
  const double count = static_cast<double>(student_probs.size());
  if (count == 0) throw ShapeError("consistency: empty batch");
  LossResult r{0.0, Tensor(student_probs.shape)};
  for (std::size_t i = 0; i < student_probs.size(); ++i) {
    const double d = student_probs.data[i] - teacher_probs.data[i];
    r.loss += d * d;
    r.grad.data[i] = 2.0 * d / count;
  }
  r.loss /= count;
  return r;
}

}  // namespace dermaug
