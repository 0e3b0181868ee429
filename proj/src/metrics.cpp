#include "dermaug/metrics.hpp"

#include <cstdio>
#include <sstream>
#include <vector>

#include "dermaug/error.hpp"

namespace dermaug {

std::uint64_t ConfusionMatrix::support(int gold) const {
  std::uint64_t s = 0;
  for (auto v : counts[gold]) s += v;
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (int g = 0; g < kNumClasses; ++g) s += support(g);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size())
    throw DataError("confusion matrix: " + std::to_string(preds.size()) + " predictions for " +
                    std::to_string(golds.size()) + " gold labels");
  if (preds.empty()) throw DataError("confusion matrix: no samples");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= kNumClasses || golds[i] < 0 || golds[i] >= kNumClasses)
      throw DataError("confusion matrix: class index out of range");
    ++m.counts[golds[i]][preds[i]];
  }
  return m;
}

ConfusionMatrix confusion_matrix(std::span<const SoftLabel> preds, std::span<const SoftLabel> golds) {
  if (preds.size() != golds.size())
    throw DataError("confusion matrix: " + std::to_string(preds.size()) + " predictions for " +
                    std::to_string(golds.size()) + " gold labels");
  std::vector<int> p, g;
  p.reserve(preds.size());
  g.reserve(golds.size());
  for (const auto& l : preds) p.push_back(l.argmax());
  for (const auto& l : golds) g.push_back(l.argmax());
  return confusion_matrix(std::span<const int>(p), std::span<const int>(g));
}

std::array<std::optional<double>, kNumClasses> per_class_recall(const ConfusionMatrix& m) {
  std::array<std::optional<double>, kNumClasses> r;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto s = m.support(c);
    if (s > 0) r[c] = static_cast<double>(m.counts[c][c]) / static_cast<double>(s);
  }
  return r;
}

double balanced_accuracy(const ConfusionMatrix& m) {
  double sum = 0.0;
  int present = 0;
  for (const auto& r : per_class_recall(m))
    if (r) {
      sum += *r;
      ++present;
    }
  if (present == 0) throw DataError("balanced accuracy: no class has support");
  return sum / present;
}

std::string metrics_report_text(const ConfusionMatrix& m) {
  std::ostringstream out;
  out << "confusion matrix (rows = gold, columns = predicted)\n      ";
  for (auto name : kClassNames) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%7.*s", static_cast<int>(name.size()), name.data());
    out << buf;
  }
  out << '\n';
  for (int g = 0; g < kNumClasses; ++g) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%-6.*s", static_cast<int>(kClassNames[g].size()), kClassNames[g].data());
    out << buf;
    for (int p = 0; p < kNumClasses; ++p) {
      std::snprintf(buf, sizeof buf, "%7llu", static_cast<unsigned long long>(m.counts[g][p]));
      out << buf;
    }
    out << '\n';
  }
  out << "\nper-class recall\n";
  const auto recall = per_class_recall(m);
  for (int c = 0; c < kNumClasses; ++c) {
    char buf[64];
    if (recall[c])
      std::snprintf(buf, sizeof buf, "  %-6s %.4f (support %llu)\n", std::string(kClassNames[c]).c_str(), *recall[c],
                    static_cast<unsigned long long>(m.support(c)));
    else
      std::snprintf(buf, sizeof buf, "  %-6s   n/a  (no support, excluded)\n", std::string(kClassNames[c]).c_str());
    out << buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "\nbalanced accuracy: %.6f\n", balanced_accuracy(m));
  out << buf;
  return out.str();
}

std::string metrics_report_csv(const ConfusionMatrix& m) {
  std::ostringstream out;
  out << "section,row,col,value\n";
  for (int g = 0; g < kNumClasses; ++g)
    for (int p = 0; p < kNumClasses; ++p)
      out << "confusion," << kClassNames[g] << ',' << kClassNames[p] << ',' << m.counts[g][p] << '\n';
  const auto recall = per_class_recall(m);
  out.precision(17);
  for (int c = 0; c < kNumClasses; ++c) {
    out << "recall," << kClassNames[c] << ",,";
    if (recall[c]) out << *recall[c];
    out << '\n';
  }
  out << "balanced_accuracy,,," << balanced_accuracy(m) << '\n';
  return out.str();
}

}  // namespace dermaug
