#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dermaug/image.hpp"

namespace dermaug {

// ---------------------------------------------------------------------------
// Image codecs
// ---------------------------------------------------------------------------

enum class ImageFormat { Ppm, Png };

/// Decodes binary PPM (P6, maxval <= 255) or PNG (8-bit RGB, non-interlaced).
/// Pixels are scaled to [0,1]. Throws DecodeError naming the failing offset.
Image decode_image(std::span<const std::uint8_t> bytes, ImageFormat format);

/// Pixels are clamped to [0,1] and rounded to the nearest 8-bit level.
std::vector<std::uint8_t> encode_ppm(const Image& img);
std::vector<std::uint8_t> encode_png(const Image& img);

/// Format is chosen from the extension (.ppm / .png).
Image read_image_file(const std::filesystem::path& path);
void write_image_file(const std::filesystem::path& path, const Image& img);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// ---------------------------------------------------------------------------
// Ground-truth CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kLabelsHeader = "image,MEL,NV,BCC,AKIEC,BKL,DF,VASC";

struct LabelRow {
  std::string id;
  SoftLabel label;
};

/// Parses the ISIC-2018 ground-truth layout. Rows must sum to 1 within 1e-6.
/// Throws ParseError with the 1-based line number.
std::vector<LabelRow> load_labels_csv(std::string_view text);

/// Inverse of load_labels_csv; values are written with round-trip precision.
std::string write_labels_csv(std::span<const LabelRow> rows);

/// Loads `<image_dir>/<id>.ppm` (or .png) for every row of the labels file.
Dataset load_labeled_dataset(const std::filesystem::path& labels_csv,
                             const std::filesystem::path& image_dir);
/// Every .ppm/.png in the directory, sorted by file name, without labels.
Dataset load_unlabeled_dir(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Synthetic lesion-like data
// ---------------------------------------------------------------------------

/// Appearance family of one synthetic class: a textured ellipse whose colour
/// is drawn in HSV. Hue in degrees (may exceed 360, wraps), radii as
/// fractions of the image side.
struct BlobStyle {
  double hue_lo, hue_hi;
  double saturation;
  double value_lo, value_hi;
  double radius_lo, radius_hi;
  double texture;
};

struct SynthSpec {
  int image_size = 32;
  std::array<int, kNumClasses> class_counts = {23, 135, 11, 7, 22, 3, 3};
  int unlabeled_count = 40;
  std::array<BlobStyle, kNumClasses> styles = default_styles();

  static std::array<BlobStyle, kNumClasses> default_styles();
  /// Throws ConfigError. `folds` is the k used downstream: at least two
  /// classes need 2k samples so stratified folds are non-degenerate.
  void validate(int folds) const;
  int labeled_count() const;
};

/// Pure function of (spec, seed). Labeled samples come first (ids
/// `syn_NNNNN`, classes interleaved by a seeded shuffle), followed by the
/// unlabeled ones (`unl_NNNNN`) whose hidden classes follow the labeled
/// class proportions.
Dataset make_synthetic_dataset(const SynthSpec& spec, std::uint64_t seed, int folds = 2);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

inline constexpr double kStdFloor = 1e-6;

/// Population mean/std per channel over every pixel of every image.
NormStats compute_norm_stats(const Dataset& dataset);
Image normalize(const Image& image, const NormStats& stats);
Image denormalize(const Image& image, const NormStats& stats);

}  // namespace dermaug
