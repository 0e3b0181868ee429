#include <iostream>

#include <CLI11.hpp>

#include "dermaug/commands.hpp"

int main(int argc, char** argv) {
  using dermaug::Command;
  CLI::App app{"dermaug: skin-lesion augmentation, mean-teacher training and ensemble evaluation"};
  app.require_subcommand(1);

  dermaug::CommandOptions opt;
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic labeled/unlabeled/test dataset");
  synth->add_option("-c,--config", opt.config_path, "Run config file")->required();

  auto* preview = app.add_subcommand("augment-preview", "Write galleries of augmented variants per stage");
  preview->add_option("-c,--config", opt.config_path, "Run config file")->required();
  preview->add_option("-n", opt.preview_count, "Variants per source image")->capture_default_str();

  auto* train = app.add_subcommand("train", "Stratified k-fold mean-teacher ensemble training");
  train->add_option("-c,--config", opt.config_path, "Run config file")->required();

  auto* predict = app.add_subcommand("predict", "Ensemble prediction over the prediction directory");
  predict->add_option("-c,--config", opt.config_path, "Run config file")->required();
  predict->add_option("--model", opt.model_manifest, "Ensemble manifest (default: <output_dir>/models/manifest.txt)");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evaluate->add_option("--pred", opt.pred_csv, "Predictions CSV")->required();
  evaluate->add_option("--gold", opt.gold_csv, "Ground-truth CSV")->required();
  evaluate->add_option("--out", opt.metrics_dir, "Directory for metrics.txt / metrics.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? dermaug::kExitOk : dermaug::kExitUsage;
  }

  Command cmd = Command::Evaluate;
  if (*synth) cmd = Command::SynthData;
  else if (*preview) cmd = Command::AugmentPreview;
  else if (*train) cmd = Command::Train;
  else if (*predict) cmd = Command::Predict;
  return dermaug::run(cmd, opt, std::cout, std::cerr);
}
