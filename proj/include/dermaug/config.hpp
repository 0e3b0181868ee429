#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "dermaug/augment.hpp"
#include "dermaug/imagedata.hpp"
#include "dermaug/meanteacher.hpp"
#include "dermaug/nn.hpp"

namespace dermaug {

/// Empty paths resolve to the synthetic layout under the output directory
/// (see resolved_*()).
struct DataPaths {
  std::string labels_csv;
  std::string image_dir;
  std::string unlabeled_dir;
  std::string predict_dir;
  bool operator==(const DataPaths&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int k = 5;
  bool tta = true;
  DataPaths data;
  SynthSpec synth;
  int synth_test_per_class = 10;
  AugConfig aug;
  ModelSpec model;
  MeanTeacherConfig mt;

  /// Cross-field checks on top of every nested validate(). Throws ConfigError.
  void validate() const;

  std::string resolved_labels_csv() const;
  std::string resolved_image_dir() const;
  std::string resolved_unlabeled_dir() const;
  std::string resolved_predict_dir() const;
  std::string synth_dir() const;

  bool operator==(const RunConfig& o) const;
};

/// Strict parse: unknown keys and invalid values throw ConfigError naming
/// the key; `seed` is mandatory; everything else defaults.
RunConfig parse_config(std::string_view text);
/// Every key with its resolved value; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

}  // namespace dermaug
