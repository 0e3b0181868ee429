#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dermaug/error.hpp"
#include "dermaug/imagedata.hpp"
#include "dermaug/rng.hpp"

namespace dermaug {
namespace {

constexpr std::uint64_t kClassOrderStream = 0x5EED0001;
constexpr std::uint64_t kUnlabeledClassStream = 0x5EED0002;
constexpr std::uint64_t kLabeledRenderStream = 0x5EED0003;
constexpr std::uint64_t kUnlabeledRenderStream = 0x5EED0004;

std::array<double, 3> hsv_to_rgb(double hue_deg, double s, double v) {
  const double h = std::fmod(std::fmod(hue_deg, 360.0) + 360.0, 360.0) / 60.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  return {r + m, g + m, b + m};
}

Image render_lesion(const BlobStyle& style, int size, RngStream& rng) {
  Image img(size, size);
  std::array<double, 3> skin = {0.86, 0.67, 0.56};
  for (double& s : skin) s += rng.uniform(-0.04, 0.04);

  const double centre = (size - 1) / 2.0;
  const double cx = centre + rng.uniform(-0.12, 0.12) * size;
  const double cy = centre + rng.uniform(-0.12, 0.12) * size;
  const double ra = rng.uniform(style.radius_lo, style.radius_hi) * size;
  const double rb = ra * rng.uniform(0.7, 1.0);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const auto blob = hsv_to_rgb(rng.uniform(style.hue_lo, style.hue_hi), style.saturation,
                               rng.uniform(style.value_lo, style.value_hi));
  const double fx = rng.uniform(0.6, 1.6), fy = rng.uniform(0.6, 1.6);
  const double px = rng.uniform(0.0, 2 * std::numbers::pi), py = rng.uniform(0.0, 2 * std::numbers::pi);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double u = (dx * ca + dy * sa) / ra;
      const double v = (-dx * sa + dy * ca) / rb;
      const double d = std::sqrt(u * u + v * v);
      const double alpha = std::clamp((1.0 - d) * ra + 0.5, 0.0, 1.0);
      const double tex = 1.0 + style.texture * 0.5 * (std::sin(fx * x + px) + std::sin(fy * y + py));
      for (int c = 0; c < kChannels; ++c) {
        const double bg = skin[c] + rng.uniform(-0.02, 0.02);
        const double fg = blob[c] * tex;
        img.at(y, x, c) = std::clamp((1.0 - alpha) * bg + alpha * fg, 0.0, 1.0);
      }
    }
  }
  return img;
}

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu", prefix, i);
  return buf;
}

}  // namespace

std::array<BlobStyle, kNumClasses> SynthSpec::default_styles() {
  // hue, sat, value, radius, texture
  return {{
      {15, 30, 0.70, 0.12, 0.28, 0.30, 0.42, 0.35},   // MEL: large, very dark, mottled
      {20, 35, 0.60, 0.42, 0.58, 0.20, 0.30, 0.05},   // NV: mid brown, smooth
      {330, 350, 0.35, 0.75, 0.90, 0.18, 0.28, 0.15}, // BCC: pale pink
      {0, 12, 0.65, 0.60, 0.75, 0.14, 0.22, 0.40},    // AKIEC: small, red, scaly
      {38, 50, 0.45, 0.62, 0.76, 0.30, 0.42, 0.10},   // BKL: large light tan
      {265, 295, 0.40, 0.38, 0.52, 0.12, 0.18, 0.05}, // DF: small violet-brown
      {345, 370, 0.85, 0.50, 0.66, 0.12, 0.20, 0.10}, // VASC: saturated red-purple
  }};
}

int SynthSpec::labeled_count() const {
  int n = 0;
  for (int c : class_counts) n += c;
  return n;
}

void SynthSpec::validate(int folds) const {
  if (image_size < kMinImageSide) throw ConfigError("synth.image_size", "must be at least 8");
  for (int c : class_counts)
    if (c < 0) throw ConfigError("synth.class_counts", "counts must be non-negative");
  if (unlabeled_count < 0) throw ConfigError("synth.unlabeled_count", "must be non-negative");
  const auto big = std::count_if(class_counts.begin(), class_counts.end(),
                                 [&](int c) { return c >= 2 * folds; });
  if (big < 2)
    throw ConfigError("synth.class_counts",
                      "at least two classes need " + std::to_string(2 * folds) + " samples");
  for (const auto& s : styles) {
    if (s.hue_lo > s.hue_hi || s.value_lo > s.value_hi || s.radius_lo > s.radius_hi ||
        s.radius_lo <= 0.0 || s.saturation < 0.0 || s.saturation > 1.0 || s.value_lo < 0.0 ||
        s.value_hi > 1.0 || s.texture < 0.0)
      throw ConfigError("synth.styles", "invalid blob style range");
  }
}

Dataset make_synthetic_dataset(const SynthSpec& spec, std::uint64_t seed, int folds) {
  spec.validate(folds);

  std::vector<int> classes;
  for (int c = 0; c < kNumClasses; ++c) classes.insert(classes.end(), spec.class_counts[c], c);
  RngStream order(seed, kClassOrderStream);
  for (std::size_t i = classes.size(); i > 1; --i) std::swap(classes[i - 1], classes[order.below(i)]);

  Dataset ds;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto rng = RngStream::derive(seed, {kLabeledRenderStream, i});
    ds.add({make_id("syn", i), render_lesion(spec.styles[classes[i]], spec.image_size, rng),
            SoftLabel::one_hot(classes[i])});
  }

  RngStream pick(seed, kUnlabeledClassStream);
  const int total = spec.labeled_count();
  for (int i = 0; i < spec.unlabeled_count; ++i) {
    int cls = 0;
    if (total > 0) {
      auto r = static_cast<int>(pick.below(static_cast<std::uint64_t>(total)));
      while (r >= spec.class_counts[cls]) r -= spec.class_counts[cls++];
    } else {
      cls = static_cast<int>(pick.below(kNumClasses));
    }
    auto rng = RngStream::derive(seed, {kUnlabeledRenderStream, static_cast<std::uint64_t>(i)});
    ds.add({make_id("unl", i), render_lesion(spec.styles[cls], spec.image_size, rng), std::nullopt});
  }
  return ds;
}

}  // namespace dermaug
