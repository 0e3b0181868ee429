#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace dermaug {

inline constexpr int kNumClasses = 7;
inline constexpr int kChannels = 3;
inline constexpr int kMinImageSide = 8;

/// Column order of the ISIC-2018 task-3 ground truth.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC"};

/// H x W x C image, row-major with interleaved channels: pixel (y, x, c)
/// lives at ((y * width) + x) * channels + c.
struct Image {
  int height = 0;
  int width = 0;
  int channels = kChannels;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0);

  double& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
  double at(int y, int x, int c) const { return pixels[index(y, x, c)]; }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::size_t size() const noexcept { return pixels.size(); }
  bool same_shape(const Image& other) const noexcept {
    return height == other.height && width == other.width && channels == other.channels;
  }
  bool operator==(const Image&) const = default;
};

/// Throws ShapeError if the image violates the structural invariants
/// (sides >= 8, three channels, pixel count consistent, finite values).
void validate_image(const Image& img);

/// Probability vector over the seven lesion classes.
struct SoftLabel {
  std::array<double, kNumClasses> probs{};

  static SoftLabel one_hot(int cls);
  /// Index of the largest entry; ties resolve to the lowest index.
  int argmax() const;
  double sum() const;
  /// Entries in [0,1] and summing to 1 within `tol`.
  bool valid(double tol = 1e-9) const;
  bool operator==(const SoftLabel&) const = default;
};

int argmax(const std::array<double, kNumClasses>& v);

struct Sample {
  Image image;
  std::optional<SoftLabel> label;
};

struct DatasetEntry {
  std::string id;
  Image image;
  std::optional<SoftLabel> label;

  Sample sample() const { return {image, label}; }
};

/// Ordered collection of samples with unique ids and a common image shape.
class Dataset {
 public:
  Dataset() = default;

  /// Throws DataError on a duplicate id or mismatched image shape.
  void add(DatasetEntry entry);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const DatasetEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<DatasetEntry>& entries() const noexcept { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  Dataset labeled() const;
  Dataset unlabeled() const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
  std::vector<SoftLabel> labels() const;
  std::vector<Sample> samples() const;

  bool operator==(const Dataset& other) const { return entries_ == other.entries_; }

 private:
  std::vector<DatasetEntry> entries_;
  std::unordered_set<std::string> ids_;
};

inline bool operator==(const DatasetEntry& a, const DatasetEntry& b) {
  return a.id == b.id && a.image == b.image && a.label == b.label;
}

/// Per-channel normalization statistics.
struct NormStats {
  std::array<double, kChannels> mean{0.0, 0.0, 0.0};
  std::array<double, kChannels> std{1.0, 1.0, 1.0};
  bool operator==(const NormStats&) const = default;
};

}  // namespace dermaug
