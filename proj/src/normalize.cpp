#include <algorithm>
#include <cmath>

#include "dermaug/error.hpp"
#include "dermaug/imagedata.hpp"

namespace dermaug {

NormStats compute_norm_stats(const Dataset& dataset) {
  if (dataset.empty()) throw DataError("cannot compute normalization statistics of an empty dataset");
  std::array<double, kChannels> sum{};
  std::size_t count = 0;
  for (const auto& e : dataset) {
    const auto& px = e.image.pixels;
    for (std::size_t i = 0; i < px.size(); i += kChannels)
      for (int c = 0; c < kChannels; ++c) sum[c] += px[i + c];
    count += px.size() / kChannels;
  }
  NormStats stats;
  for (int c = 0; c < kChannels; ++c) stats.mean[c] = sum[c] / static_cast<double>(count);

  std::array<double, kChannels> sq{};
  for (const auto& e : dataset) {
    const auto& px = e.image.pixels;
    for (std::size_t i = 0; i < px.size(); i += kChannels)
      for (int c = 0; c < kChannels; ++c) {
        const double d = px[i + c] - stats.mean[c];
        sq[c] += d * d;
      }
  }
  for (int c = 0; c < kChannels; ++c)
    stats.std[c] = std::max(std::sqrt(sq[c] / static_cast<double>(count)), kStdFloor);
  return stats;
}

Image normalize(const Image& image, const NormStats& stats) {
  Image out = image;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const auto c = i % kChannels;
    out.pixels[i] = (out.pixels[i] - stats.mean[c]) / stats.std[c];
  }
  return out;
}

Image denormalize(const Image& image, const NormStats& stats) {
  Image out = image;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const auto c = i % kChannels;
    out.pixels[i] = out.pixels[i] * stats.std[c] + stats.mean[c];
  }
  return out;
}

}  // namespace dermaug
