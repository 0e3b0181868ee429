#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "dermaug/config.hpp"
#include "dermaug/imagedata.hpp"

namespace dermaug {

enum class Command { SynthData, AugmentPreview, Train, Predict, Evaluate };

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

struct CommandOptions {
  std::string config_path;
  int preview_count = 16;
  std::string model_manifest;
  std::string pred_csv;
  std::string gold_csv;
  std::string metrics_dir;  // evaluate: defaults to the predictions' directory
};

/// Held-out synthetic test set: test_per_class samples of every class,
/// rendered from a stream independent of the training set.
Dataset make_synthetic_test_set(const RunConfig& cfg);

/// Executes one command. Progress goes to `out`; failures print a single
/// `error: ...` line to `err` and map to the exit codes above.
int run(Command command, const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace dermaug
