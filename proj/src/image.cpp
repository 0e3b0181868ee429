#include "dermaug/image.hpp"

#include <cmath>
#include <numeric>

#include "dermaug/error.hpp"

namespace dermaug {

Image::Image(int h, int w, double fill)
    : height(h), width(w), channels(kChannels),
      pixels(static_cast<std::size_t>(h) * w * kChannels, fill) {}

void validate_image(const Image& img) {
  if (img.height < kMinImageSide || img.width < kMinImageSide)
    throw ShapeError("image must be at least 8x8, got " + std::to_string(img.height) + "x" +
                     std::to_string(img.width));
  if (img.channels != kChannels)
    throw ShapeError("image must have 3 channels, got " + std::to_string(img.channels));
  if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * img.channels)
    throw ShapeError("pixel buffer size does not match image dimensions");
  for (double p : img.pixels)
    if (!std::isfinite(p)) throw ShapeError("image contains a non-finite pixel");
}

SoftLabel SoftLabel::one_hot(int cls) {
  SoftLabel l;
  l.probs.at(static_cast<std::size_t>(cls)) = 1.0;
  return l;
}

int argmax(const std::array<double, kNumClasses>& v) {
  int best = 0;
  for (int k = 1; k < kNumClasses; ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

int SoftLabel::argmax() const { return dermaug::argmax(probs); }

double SoftLabel::sum() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

bool SoftLabel::valid(double tol) const {
  for (double p : probs)
    if (!(p >= 0.0 && p <= 1.0)) return false;
  return std::abs(sum() - 1.0) <= tol;
}

void Dataset::add(DatasetEntry entry) {
  if (!entries_.empty() && !entries_.front().image.same_shape(entry.image))
    throw DataError("sample '" + entry.id + "' has a different image shape than the dataset");
  if (!ids_.insert(entry.id).second) throw DataError("duplicate sample id '" + entry.id + "'");
  entries_.push_back(std::move(entry));
}

Dataset Dataset::labeled() const {
  Dataset out;
  for (const auto& e : entries_)
    if (e.label) out.add(e);
  return out;
}

Dataset Dataset::unlabeled() const {
  Dataset out;
  for (const auto& e : entries_)
    if (!e.label) out.add(e);
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  for (std::size_t i : indices) {
    if (i >= entries_.size()) throw DataError("subset index out of range");
    out.add(entries_[i]);
  }
  return out;
}

std::vector<SoftLabel> Dataset::labels() const {
  std::vector<SoftLabel> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (!e.label) throw DataError("sample '" + e.id + "' is unlabeled");
    out.push_back(*e.label);
  }
  return out;
}

std::vector<Sample> Dataset::samples() const {
  std::vector<Sample> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.sample());
  return out;
}

}  // namespace dermaug
