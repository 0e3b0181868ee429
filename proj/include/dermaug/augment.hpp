#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dermaug/image.hpp"
#include "dermaug/rng.hpp"

namespace dermaug {

enum class RotationMode { QuarterTurns, Arbitrary };

/// Every augmentation knob. Ranges are inclusive (lo, hi) pairs.
struct AugConfig {
  int crop_size = 32;
  double flip_prob = 0.5;
  RotationMode rotation_mode = RotationMode::QuarterTurns;

  double erase_prob = 0.5;
  std::pair<double, double> erase_area_range{0.02, 0.4};
  std::pair<double, double> erase_aspect_range{0.3, 3.33};

  double bc_prob = 0.5;

  double hair_prob = 0.5;
  std::pair<int, int> hair_count_range{5, 30};
  std::pair<double, double> hair_length_range{0.1, 0.5};  // fraction of the image diagonal
  std::pair<double, double> hair_thickness_range{1.0, 3.0};  // pixels
  std::pair<double, double> hair_darkness_range{0.6, 0.95};
  double hair_curvature_max = 0.2;  // control-point offset as a fraction of stroke length

  /// Throws ConfigError naming the offending `aug.*` key.
  void validate() const;
  /// All probabilities zeroed: the pipeline reduces to the crop.
  static AugConfig disabled(int crop_size);
  bool operator==(const AugConfig&) const = default;
};

// --- deterministic primitives ----------------------------------------------

Image crop(const Image& img, int top, int left, int size);
/// Central size x size window (top/left offsets rounded down); used at
/// inference when stored images are larger than the network input.
Image center_crop(const Image& img, int size);
Image flip_horizontal(const Image& img);
/// Counter-clockwise rotation by quarter_turns * 90 degrees (any integer).
Image rotate_quarter(const Image& img, int quarter_turns);
/// Bilinear rotation about the centre with reflect padding.
Image rotate_arbitrary(const Image& img, double radians);

// --- geometric ---------------------------------------------------------------

/// Random crop to crop_size, horizontal flip with flip_prob, then rotation.
/// Draw order: crop row, crop column, flip, rotation.
Sample geometric_augment(const Sample& sample, RngStream& rng, const AugConfig& cfg);

// --- random erasing ----------------------------------------------------------

struct EraseRect {
  int top, left, height, width;
  bool contains(int y, int x) const {
    return y >= top && y < top + height && x >= left && x < left + width;
  }
};

struct EraseResult {
  Image image;
  std::optional<EraseRect> rect;  // absent when nothing was erased
};

/// With erase_prob, fills one rectangle (area fraction in erase_area_range
/// after rounding, aspect in erase_aspect_range) with uniform noise. Gives up
/// unchanged after 100 rejected proposals.
EraseResult random_erase_traced(const Image& image, RngStream& rng, const AugConfig& cfg);
Image random_erase(const Image& image, RngStream& rng, const AugConfig& cfg);

// --- between-class mixing -----------------------------------------------------

/// r ~ U(0,1); image and label are r*a + (1-r)*b. Both inputs must be labeled.
Sample bc_mix(const Sample& a, const Sample& b, RngStream& rng);
Sample bc_mix_with_ratio(const Sample& a, const Sample& b, double ratio);

// --- body hair ------------------------------------------------------------------

/// One synthetic hair: a quadratic Bezier from `p0` to `p2` bent through
/// `control`. Coordinates are pixel centres (x right, y down).
struct HairStroke {
  double x0, y0;
  double cx, cy;
  double x2, y2;
  double thickness;
  std::array<double, kChannels> colour;
};

/// Buffon's-needle placement: centre uniform over the image, orientation
/// uniform on [0, pi), length uniform in hair_length_range x diagonal.
/// Returns no strokes when the hair gate (hair_prob) does not fire.
std::vector<HairStroke> sample_hair_strokes(int height, int width, RngStream& rng, const AugConfig& cfg);
/// Alpha-blends anti-aliased strokes; pixels farther than thickness/2 + 0.5
/// from every stroke are untouched.
Image render_hair(const Image& image, const std::vector<HairStroke>& strokes);
Image hair_overlay(const Image& image, RngStream& rng, const AugConfig& cfg);

// --- pipelines --------------------------------------------------------------------

/// geometric -> hair -> erase on a single sample.
Sample augment_stages(const Sample& sample, RngStream& rng, const AugConfig& cfg);

/// augment_stages on `sample`; then, when a labeled partner is given, one
/// draw of the bc gate. If it fires, the partner goes through
/// augment_stages with the same stream and the two are mixed by bc_mix.
Sample apply_pipeline(const Sample& sample, const std::optional<Sample>& partner, RngStream& rng,
                      const AugConfig& cfg);

// --- test-time views ------------------------------------------------------------

inline constexpr int kTtaViewCount = 8;

/// View v is rotate_quarter(flip^(v % 2)(image), v / 2); view 0 is the identity.
std::vector<Image> tta_views(const Image& image);
/// Maps view v back onto the original orientation.
Image tta_inverse(const Image& view, int v);

}  // namespace dermaug
