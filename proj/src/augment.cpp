#include "dermaug/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dermaug/error.hpp"

namespace dermaug {
namespace {

void check_prob(double p, const char* key) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(key, "probability must lie in [0,1]");
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

void AugConfig::validate() const {
  if (crop_size < kMinImageSide) throw ConfigError("aug.crop_size", "must be at least 8");
  check_prob(flip_prob, "aug.flip_prob");
  check_prob(erase_prob, "aug.erase_prob");
  check_prob(bc_prob, "aug.bc_prob");
  check_prob(hair_prob, "aug.hair_prob");
  const auto [sl, sh] = erase_area_range;
  if (!(sl > 0.0 && sl <= sh && sh < 1.0))
    throw ConfigError("aug.erase_area_range", "need 0 < lo <= hi < 1");
  const auto [r1, r2] = erase_aspect_range;
  if (!(r1 > 0.0 && r1 <= r2)) throw ConfigError("aug.erase_aspect_range", "need 0 < lo <= hi");
  const auto [nmin, nmax] = hair_count_range;
  if (nmin < 0 || nmin > nmax) throw ConfigError("aug.hair_count_range", "need 0 <= lo <= hi");
  const auto [lmin, lmax] = hair_length_range;
  if (!(lmin >= 0.0 && lmin <= lmax)) throw ConfigError("aug.hair_length_range", "need 0 <= lo <= hi");
  const auto [tmin, tmax] = hair_thickness_range;
  if (!(tmin > 0.0 && tmin <= tmax)) throw ConfigError("aug.hair_thickness_range", "need 0 < lo <= hi");
  const auto [dmin, dmax] = hair_darkness_range;
  if (!(dmin >= 0.0 && dmin <= dmax && dmax <= 1.0))
    throw ConfigError("aug.hair_darkness_range", "need 0 <= lo <= hi <= 1");
  if (!(hair_curvature_max >= 0.0)) throw ConfigError("aug.hair_curvature_max", "must be non-negative");
}

AugConfig AugConfig::disabled(int crop_size) {
  AugConfig cfg;
  cfg.crop_size = crop_size;
  cfg.flip_prob = 0.0;
  cfg.erase_prob = 0.0;
  cfg.bc_prob = 0.0;
  cfg.hair_prob = 0.0;
  return cfg;
}

Image crop(const Image& img, int top, int left, int size) {
  if (top < 0 || left < 0 || top + size > img.height || left + size > img.width)
    throw ShapeError("crop window outside image");
  Image out(size, size);
  for (int y = 0; y < size; ++y)
    std::copy_n(&img.pixels[img.index(top + y, left, 0)], static_cast<std::size_t>(size) * img.channels,
                &out.pixels[out.index(y, 0, 0)]);
  return out;
}

Image center_crop(const Image& img, int size) {
  if (img.height == size && img.width == size) return img;
  return crop(img, (img.height - size) / 2, (img.width - size) / 2, size);
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image rotate_quarter(const Image& img, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  const int h = (k == 2) ? img.height : img.width;
  const int w = (k == 2) ? img.width : img.height;
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sy, sx;
      switch (k) {
        case 1: sy = x, sx = img.width - 1 - y; break;
        case 2: sy = img.height - 1 - y, sx = img.width - 1 - x; break;
        default: sy = img.height - 1 - x, sx = y; break;
      }
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  return out;
}

Image rotate_arbitrary(const Image& img, double radians) {
  Image out(img.height, img.width);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  const double cs = std::cos(radians), sn = std::sin(radians);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      // Inverse map: rotate the output coordinate back into the source.
      const double dx = x - cx, dy = y - cy;
      const double sx = cx + cs * dx - sn * dy;
      const double sy = cy + sn * dx + cs * dy;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      const int xa = reflect_index(x0, img.width), xb = reflect_index(x0 + 1, img.width);
      const int ya = reflect_index(y0, img.height), yb = reflect_index(y0 + 1, img.height);
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1 - fx) * img.at(ya, xa, c) + fx * img.at(ya, xb, c);
        const double bot = (1 - fx) * img.at(yb, xa, c) + fx * img.at(yb, xb, c);
        out.at(y, x, c) = (1 - fy) * top + fy * bot;
      }
    }
  return out;
}

Sample geometric_augment(const Sample& sample, RngStream& rng, const AugConfig& cfg) {
  const Image& img = sample.image;
  if (cfg.crop_size > img.height || cfg.crop_size > img.width)
    throw ShapeError("crop_size " + std::to_string(cfg.crop_size) + " exceeds image " +
                     std::to_string(img.height) + "x" + std::to_string(img.width));
  const int top = static_cast<int>(rng.uniform_int(0, img.height - cfg.crop_size));
  const int left = static_cast<int>(rng.uniform_int(0, img.width - cfg.crop_size));
  const bool flip = rng.bernoulli(cfg.flip_prob);

  Image out = (top == 0 && left == 0 && cfg.crop_size == img.height && cfg.crop_size == img.width)
                  ? img
                  : crop(img, top, left, cfg.crop_size);
  if (flip) out = flip_horizontal(out);
  if (cfg.rotation_mode == RotationMode::QuarterTurns) {
    out = rotate_quarter(out, static_cast<int>(rng.below(4)));
  } else {
    out = rotate_arbitrary(out, rng.uniform(0.0, 2.0 * std::numbers::pi));
  }
  return {std::move(out), sample.label};
}

EraseResult random_erase_traced(const Image& image, RngStream& rng, const AugConfig& cfg) {
  if (!rng.bernoulli(cfg.erase_prob)) return {image, std::nullopt};
  const double total = static_cast<double>(image.height) * image.width;
  const auto [sl, sh] = cfg.erase_area_range;
  const auto [r1, r2] = cfg.erase_aspect_range;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double area = rng.uniform(sl, sh) * total;
    const double aspect = rng.uniform(r1, r2);
    const int h = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    const int w = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    if (h < 1 || w < 1 || h > image.height || w > image.width) continue;
    const double frac = static_cast<double>(h) * w / total;
    if (frac < sl || frac > sh) continue;
    EraseRect rect{static_cast<int>(rng.uniform_int(0, image.height - h)),
                   static_cast<int>(rng.uniform_int(0, image.width - w)), h, w};
    Image out = image;
    for (int y = rect.top; y < rect.top + h; ++y)
      for (int x = rect.left; x < rect.left + w; ++x)
        for (int c = 0; c < out.channels; ++c) out.at(y, x, c) = rng.uniform();
    return {std::move(out), rect};
  }
  return {image, std::nullopt};
}

Image random_erase(const Image& image, RngStream& rng, const AugConfig& cfg) {
  return random_erase_traced(image, rng, cfg).image;
}

Sample bc_mix_with_ratio(const Sample& a, const Sample& b, double ratio) {
  if (!a.label || !b.label) throw DataError("between-class mixing requires labeled samples");
  if (!a.image.same_shape(b.image)) throw ShapeError("between-class mixing requires equal image shapes");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DataError("mixing ratio must lie in [0,1]");
  Sample out{a.image, SoftLabel{}};
  const double q = 1.0 - ratio;
  for (std::size_t i = 0; i < out.image.pixels.size(); ++i)
    out.image.pixels[i] = ratio * a.image.pixels[i] + q * b.image.pixels[i];
  for (int k = 0; k < kNumClasses; ++k)
    out.label->probs[k] = ratio * a.label->probs[k] + q * b.label->probs[k];
  return out;
}

Sample bc_mix(const Sample& a, const Sample& b, RngStream& rng) {
  if (!a.label || !b.label) throw DataError("between-class mixing requires labeled samples");
  return bc_mix_with_ratio(a, b, rng.uniform_open());
}

Sample augment_stages(const Sample& sample, RngStream& rng, const AugConfig& cfg) {
  Sample s = geometric_augment(sample, rng, cfg);
  s.image = hair_overlay(s.image, rng, cfg);
  s.image = random_erase(s.image, rng, cfg);
  return s;
}

Sample apply_pipeline(const Sample& sample, const std::optional<Sample>& partner, RngStream& rng,
                      const AugConfig& cfg) {
  Sample s = augment_stages(sample, rng, cfg);
  if (!partner) return s;
  if (!rng.bernoulli(cfg.bc_prob)) return s;
  const Sample p = augment_stages(*partner, rng, cfg);
  return bc_mix(s, p, rng);
}

std::vector<Image> tta_views(const Image& image) {
  std::vector<Image> views;
  views.reserve(kTtaViewCount);
  const Image flipped = flip_horizontal(image);
  for (int v = 0; v < kTtaViewCount; ++v) views.push_back(rotate_quarter(v % 2 ? flipped : image, v / 2));
  return views;
}

Image tta_inverse(const Image& view, int v) {
  Image out = rotate_quarter(view, -(v / 2));
  return v % 2 ? flip_horizontal(out) : out;
}

}  // namespace dermaug
