#include "dermaug/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>

#include "dermaug/ensemble.hpp"
#include "dermaug/error.hpp"
#include "dermaug/kvdoc.hpp"
#include "dermaug/metrics.hpp"

namespace dermaug {
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTestSetStream = 0x7E57;
constexpr std::uint64_t kFoldStream = 0xF01D;
constexpr std::uint64_t kEnsembleStream = 0xE115;
constexpr std::uint64_t kPreviewStream = 0x9E11;

RunConfig load_config(const std::string& path) {
  if (path.empty()) throw ConfigError("config", "no config file given (-c)");
  if (!fs::exists(path)) throw ConfigError("config", "file not found: " + path);
  return parse_config(read_text_file(path));
}

void echo_config(const RunConfig& cfg, const std::string& name) {
  write_text_file(fs::path(cfg.output_dir) / name, serialize_config(cfg));
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& e : ds.entries()) write_image_file(dir / (e.id + ".ppm"), e.image);
}

std::vector<LabelRow> label_rows(const Dataset& ds) {
  std::vector<LabelRow> rows;
  for (const auto& e : ds.entries()) rows.push_back({e.id, *e.label});
  return rows;
}

Dataset unlabeled_part(const Dataset& full) {
  Dataset out;
  for (const auto& e : full.entries())
    if (!e.label) out.add(e);
  return out;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const auto full = make_synthetic_dataset(cfg.synth, cfg.seed, cfg.k);
  const auto labeled = full.labeled();
  const auto unlabeled = unlabeled_part(full);
  const auto test = make_synthetic_test_set(cfg);
  const fs::path dir = cfg.synth_dir();

  write_dataset(labeled, dir / "train");
  write_text_file(dir / "train_labels.csv", write_labels_csv(label_rows(labeled)));
  write_dataset(unlabeled, dir / "unlabeled");
  write_dataset(test, dir / "test");
  write_text_file(dir / "test_labels.csv", write_labels_csv(label_rows(test)));
  echo_config(cfg, "synth-data.config");

  out << "wrote " << labeled.size() << " labeled, " << unlabeled.size() << " unlabeled, " << test.size()
      << " test images under " << dir.string() << "\n";
  return kExitOk;
}

// One gallery row per source image, one column per variant.
Image tile(const std::vector<std::vector<Image>>& grid) {
  const int rows = static_cast<int>(grid.size());
  const int cols = static_cast<int>(grid.front().size());
  const int side = grid.front().front().height;
  constexpr int pad = 1;
  Image out;
  out.height = rows * (side + pad) + pad;
  out.width = cols * (side + pad) + pad;
  out.channels = kChannels;
  out.pixels.assign(static_cast<std::size_t>(out.height) * out.width * kChannels, 1.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const auto& img = grid[r][c];
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
          for (int ch = 0; ch < kChannels; ++ch)
            out.at(pad + r * (side + pad) + y, pad + c * (side + pad) + x, ch) = img.at(y, x, ch);
    }
  return out;
}

int cmd_preview(const RunConfig& cfg, int n, std::ostream& out) {
  if (n < 1) throw ConfigError("n", "gallery size must be positive");
  const auto labeled = load_labeled_dataset(cfg.resolved_labels_csv(), cfg.resolved_image_dir());
  if (labeled.size() == 0) throw DataError("no labeled images to preview");
  const int rows = static_cast<int>(std::min<std::size_t>(labeled.size(), 8));
  const auto& entries = labeled.entries();

  using StageFn = std::function<Image(std::size_t, RngStream&)>;
  const auto base = [&](std::size_t i) { return Sample{entries[i].image, entries[i].label}; };
  AugConfig always = cfg.aug;
  always.flip_prob = always.erase_prob = always.hair_prob = always.bc_prob = 1.0;
  const std::vector<std::pair<std::string, StageFn>> stages = {
      {"geometric", [&](std::size_t i, RngStream& r) { return geometric_augment(base(i), r, cfg.aug).image; }},
      {"erase", [&](std::size_t i, RngStream& r) {
         return random_erase(crop(entries[i].image, 0, 0, cfg.aug.crop_size), r, always);
       }},
      {"hair", [&](std::size_t i, RngStream& r) {
         return hair_overlay(crop(entries[i].image, 0, 0, cfg.aug.crop_size), r, always);
       }},
      {"bc_mix", [&](std::size_t i, RngStream& r) {
         const auto cls = entries[i].label->argmax();
         std::vector<std::size_t> others;
         for (std::size_t j = 0; j < entries.size(); ++j)
           if (entries[j].label->argmax() != cls) others.push_back(j);
         if (others.empty()) return crop(entries[i].image, 0, 0, cfg.aug.crop_size);
         const auto j = others[r.below(others.size())];
         const Sample a{crop(entries[i].image, 0, 0, cfg.aug.crop_size), entries[i].label};
         const Sample b{crop(entries[j].image, 0, 0, cfg.aug.crop_size), entries[j].label};
         return bc_mix(a, b, r).image;
       }},
      {"pipeline", [&](std::size_t i, RngStream& r) { return apply_pipeline(base(i), std::nullopt, r, cfg.aug).image; }},
  };

  const fs::path dir = fs::path(cfg.output_dir) / "preview";
  fs::create_directories(dir);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    std::vector<std::vector<Image>> grid(rows);
    for (int r = 0; r < rows; ++r)
      for (int v = 0; v < n; ++v) {
        auto rng = RngStream::derive(cfg.seed, {kPreviewStream, s, static_cast<std::uint64_t>(r),
                                                static_cast<std::uint64_t>(v)});
        grid[r].push_back(stages[s].second(static_cast<std::size_t>(r), rng));
      }
    write_image_file(dir / (stages[s].first + ".png"), tile(grid));
  }
  echo_config(cfg, "augment-preview.config");
  out << "wrote " << stages.size() << " galleries (" << rows << "x" << n << ") under " << dir.string() << "\n";
  return kExitOk;
}

std::string join_ids(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::string s;
  for (std::size_t i = 0; i < idx.size(); ++i) s += (i ? " " : "") + ds.entries()[idx[i]].id;
  return s;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const auto labeled = load_labeled_dataset(cfg.resolved_labels_csv(), cfg.resolved_image_dir());
  Dataset unlabeled;
  if (fs::exists(cfg.resolved_unlabeled_dir())) unlabeled = load_unlabeled_dir(cfg.resolved_unlabeled_dir());
  if (labeled.size() == 0) throw DataError("no labeled training images");
  const auto& first = labeled.entries().front().image;
  if (first.height < cfg.aug.crop_size || first.width < cfg.aug.crop_size)
    throw DataError("training images (" + std::to_string(first.height) + "x" + std::to_string(first.width) +
                    ") are smaller than aug.crop_size");

  const auto labels = labeled.labels();
  const auto plan = stratified_kfold(labels, cfg.k, RngStream::derive(cfg.seed, {kFoldStream}).next_u64());
  for (const auto& w : plan.warnings) out << "warning: " << w << "\n";

  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train_ensemble(labeled, unlabeled, plan, {cfg.model, cfg.mt, cfg.aug},
                                     RngStream::derive(cfg.seed, {kEnsembleStream}).next_u64());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path models = fs::path(cfg.output_dir) / "models";
  save_ensemble(models, result.model);
  std::ostringstream log;
  for (const auto& r : result.reports) {
    write_text_file(models / ("history_" + std::to_string(r.fold) + ".csv"), history_csv(r.history));
    log << "fold " << r.fold << " heldout_bacc " << format_double(r.heldout_bacc) << "\n";
    log << "fold " << r.fold << " train_ids " << join_ids(labeled, r.train_indices) << "\n";
    log << "fold " << r.fold << " validation_ids " << join_ids(labeled, r.validation_indices) << "\n";
    out << "member " << r.fold << ": held-out balanced accuracy " << r.heldout_bacc << "\n";
  }
  for (const auto& w : plan.warnings) log << "warning " << w << "\n";
  write_text_file(models / "train_log.txt", log.str());
  echo_config(cfg, "train.config");
  out << "trained " << result.model.members.size() << " members in " << secs << " s; manifest "
      << (models / "manifest.txt").string() << "\n";
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, const std::string& manifest, std::ostream& out) {
  const std::string path = manifest.empty() ? (fs::path(cfg.output_dir) / "models" / "manifest.txt").string() : manifest;
  if (!fs::exists(path)) throw DataError("model manifest not found: " + path);
  const auto model = load_ensemble(path);
  const auto dir = cfg.resolved_predict_dir();
  if (!fs::exists(dir)) throw DataError("prediction directory not found: " + dir);
  Dataset images;
  for (const auto& e : load_unlabeled_dir(dir))
    images.add({e.id, center_crop(e.image, model.spec.input_size), std::nullopt});
  const auto rows = predict_dataset(model, images, cfg.tta);
  const auto dest = fs::path(cfg.output_dir) / "predictions.csv";
  write_text_file(dest, write_labels_csv(rows));
  echo_config(cfg, "predict.config");
  out << "wrote " << rows.size() << " predictions to " << dest.string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const CommandOptions& opt, std::ostream& out) {
  if (opt.pred_csv.empty() || opt.gold_csv.empty()) throw ConfigError("evaluate", "--pred and --gold are required");
  for (const auto& p : {opt.pred_csv, opt.gold_csv})
    if (!fs::exists(p)) throw DataError("file not found: " + p);
  const auto preds = load_labels_csv(read_text_file(opt.pred_csv));
  const auto golds = load_labels_csv(read_text_file(opt.gold_csv));
  if (golds.empty()) throw DataError("ground truth is empty: " + opt.gold_csv);

  std::map<std::string, const SoftLabel*> by_id;
  for (const auto& p : preds) by_id[p.id] = &p.label;
  std::vector<SoftLabel> p_list, g_list;
  for (const auto& g : golds) {
    const auto it = by_id.find(g.id);
    if (it == by_id.end()) throw DataError("no prediction for id '" + g.id + "'");
    p_list.push_back(*it->second);
    g_list.push_back(g.label);
  }
  if (preds.size() != golds.size()) {
    std::map<std::string, bool> gold_ids;
    for (const auto& g : golds) gold_ids[g.id] = true;
    for (const auto& p : preds)
      if (!gold_ids.count(p.id)) throw DataError("no ground truth for id '" + p.id + "'");
  }

  const auto m = confusion_matrix(p_list, g_list);
  const fs::path dir = opt.metrics_dir.empty() ? fs::path(opt.pred_csv).parent_path() : fs::path(opt.metrics_dir);
  const auto text = metrics_report_text(m);
  write_text_file(dir / "metrics.txt", text);
  write_text_file(dir / "metrics.csv", metrics_report_csv(m));
  out << text;
  return kExitOk;
}

}  // namespace

Dataset make_synthetic_test_set(const RunConfig& cfg) {
  SynthSpec spec = cfg.synth;
  spec.class_counts.fill(cfg.synth_test_per_class);
  spec.unlabeled_count = 0;
  const auto raw = make_synthetic_dataset(spec, RngStream::derive(cfg.seed, {kTestSetStream}).next_u64(), 1);
  Dataset out;
  std::size_t i = 0;
  for (const auto& e : raw.entries()) {
    char id[32];
    std::snprintf(id, sizeof id, "tst_%05zu", i++);
    out.add({id, e.image, e.label});
  }
  return out;
}

int run(Command command, const CommandOptions& options, std::ostream& out, std::ostream& err) {
  try {
    switch (command) {
      case Command::SynthData: return cmd_synth(load_config(options.config_path), out);
      case Command::AugmentPreview: return cmd_preview(load_config(options.config_path), options.preview_count, out);
      case Command::Train: return cmd_train(load_config(options.config_path), out);
      case Command::Predict: return cmd_predict(load_config(options.config_path), options.model_manifest, out);
      case Command::Evaluate: return cmd_evaluate(options, out);
    }
    throw InvariantError("unknown command");
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DecodeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace dermaug
