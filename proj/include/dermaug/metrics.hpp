#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "dermaug/image.hpp"

namespace dermaug {

/// counts[gold][predicted].
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t support(int gold) const;
  std::uint64_t total() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Classes are the argmax of each label, lowest index on ties.
/// Throws DataError when the lists differ in length or are empty.
ConfusionMatrix confusion_matrix(std::span<const SoftLabel> preds, std::span<const SoftLabel> golds);
ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> golds);

/// Absent for classes without support.
std::array<std::optional<double>, kNumClasses> per_class_recall(const ConfusionMatrix& m);

/// Mean recall over the classes that have support; zero-support classes are
/// left out of the average. Throws DataError for an all-zero matrix.
double balanced_accuracy(const ConfusionMatrix& m);

/// Human-readable report: matrix, per-class recall, balanced accuracy.
std::string metrics_report_text(const ConfusionMatrix& m);
/// `section,row,col,value` rows covering the same content.
std::string metrics_report_csv(const ConfusionMatrix& m);

}  // namespace dermaug
