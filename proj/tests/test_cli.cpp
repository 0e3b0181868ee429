#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <algorithm>
#include <map>

#include "dermaug/config.hpp"
#include "dermaug/imagedata.hpp"
#include "support.hpp"

using namespace dermaug;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string err;
};

Outcome cli(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string("\"") + DERMAUG_CLI_PATH + "\" " + args + " >/dev/null 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), read_text_file(err)};
}

std::string small_config(const fs::path& out) {
  return "seed = 11\n"
         "output_dir = " + out.string() + "\n"
         "k = 2\n"
         "synth.image_size = 18\n"
         "synth.class_counts = 4,6,4,4,4,4,4\n"
         "synth.unlabeled_count = 4\n"
         "synth.test_per_class = 2\n"
         "aug.crop_size = 16\n"
         "model.input_size = 16\n"
         "model.widths = 8,8\n"
         "mt.epochs = 2\n"
         "mt.rampup_epochs = 1\n"
         "mt.batch_size_labeled = 8\n";
}

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".params" || e.path().filename() == "manifest.txt")
      files[e.path().filename().string()] = read_file_bytes(e.path());
  return files;
}

}  // namespace

TEST_CASE("cli: reduced pipeline end to end") {
  testing::TempDir tmp("cli");
  const fs::path out = tmp / "run";
  const fs::path cfg = tmp / "run.cfg";
  write_text_file(cfg, small_config(out));
  const std::string c = " -c \"" + cfg.string() + "\"";

  REQUIRE(cli("synth-data" + c, tmp.path()).code == 0);
  CHECK(fs::exists(out / "synth" / "train_labels.csv"));
  CHECK(load_labels_csv(read_text_file(out / "synth" / "train_labels.csv")).size() == 30);
  CHECK(load_unlabeled_dir(out / "synth" / "unlabeled").size() == 4);
  CHECK(parse_config(read_text_file(out / "synth-data.config")) == parse_config(small_config(out)));

  REQUIRE(cli("augment-preview" + c + " -n 3", tmp.path()).code == 0);
  for (const char* stage : {"geometric", "erase", "hair", "bc_mix", "pipeline"}) {
    const auto img = read_image_file(out / "preview" / (std::string(stage) + ".png"));
    CHECK(img.width > 0);
  }

  REQUIRE(cli("train" + c, tmp.path()).code == 0);
  const auto first = snapshot(out / "models");
  CHECK(first.size() == 3);
  CHECK(fs::exists(out / "models" / "history_1.csv"));
  CHECK(fs::exists(out / "train.config"));
  const auto log = read_text_file(out / "models" / "train_log.txt");
  CHECK(log.find("heldout_bacc") != std::string::npos);

  REQUIRE(cli("train" + c, tmp.path()).code == 0);
  CHECK(snapshot(out / "models") == first);

  REQUIRE(cli("predict" + c, tmp.path()).code == 0);
  const auto preds = load_labels_csv(read_text_file(out / "predictions.csv"));
  CHECK(preds.size() == 14);
  for (const auto& r : preds) CHECK(std::abs(r.label.sum() - 1.0) <= 1e-9);

  const auto pred = (out / "predictions.csv").string(), gold = (out / "synth" / "test_labels.csv").string();
  REQUIRE(cli("evaluate --pred \"" + pred + "\" --gold \"" + gold + "\"", tmp.path()).code == 0);
  CHECK(read_text_file(out / "metrics.txt").find("balanced") != std::string::npos);
  CHECK(fs::exists(out / "metrics.csv"));

  // gold with one id the predictions lack
  auto rows = load_labels_csv(read_text_file(gold));
  rows.push_back({"tst_missing", SoftLabel::one_hot(3)});
  write_text_file(tmp / "gold_extra.csv", write_labels_csv(rows));
  const auto miss = cli("evaluate --pred \"" + pred + "\" --gold \"" + (tmp / "gold_extra.csv").string() + "\"", tmp.path());
  CHECK(miss.code == 2);
  CHECK(miss.err.find("tst_missing") != std::string::npos);
}

TEST_CASE("cli: usage and config failures exit 1, missing data exits 2") {
  testing::TempDir tmp("cli_err");
  CHECK(cli("", tmp.path()).code == 1);
  CHECK(cli("frobnicate", tmp.path()).code == 1);
  CHECK(cli("train", tmp.path()).code == 1);

  write_text_file(tmp / "typo.cfg", "seed = 1\naug.erase_probb = 0.5\n");
  const auto typo = cli("train -c \"" + (tmp / "typo.cfg").string() + "\"", tmp.path());
  CHECK(typo.code == 1);
  CHECK(typo.err.find("aug.erase_probb") != std::string::npos);
  CHECK(std::count(typo.err.begin(), typo.err.end(), '\n') == 1);

  write_text_file(tmp / "noseed.cfg", "k = 3\n");
  CHECK(cli("synth-data -c \"" + (tmp / "noseed.cfg").string() + "\"", tmp.path()).code == 1);

  const auto absent = cli("train -c \"" + (tmp / "absent.cfg").string() + "\"", tmp.path());
  CHECK(absent.code == 1);
  CHECK(absent.err.find("absent.cfg") != std::string::npos);

  write_text_file(tmp / "ok.cfg", small_config(tmp / "empty_run"));
  const auto nodata = cli("train -c \"" + (tmp / "ok.cfg").string() + "\"", tmp.path());
  CHECK(nodata.code == 2);
  CHECK(!nodata.err.empty());
  CHECK(cli("predict -c \"" + (tmp / "ok.cfg").string() + "\"", tmp.path()).code == 2);
}
