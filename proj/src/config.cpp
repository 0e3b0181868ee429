#include "dermaug/config.hpp"

#include <functional>
#include <limits>
#include <type_traits>
#include <map>

#include "dermaug/error.hpp"
#include "dermaug/kvdoc.hpp"

namespace dermaug {
namespace {

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  std::string key;
  Setter set;
  Getter get;
};

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? "," : "") + parts[i];
  return s;
}

template <typename T>
std::pair<T, T> parse_pair(const std::string& key, const std::string& value) {
  std::vector<T> v;
  if constexpr (std::is_integral_v<T>) {
    for (auto x : parse_int_list(key, value)) v.push_back(static_cast<T>(x));
  } else {
    v = parse_double_list(key, value);
  }
  if (v.size() != 2) throw ConfigError(key, "expected two comma-separated values");
  return {v[0], v[1]};
}

template <typename T>
std::string format_pair(const std::pair<T, T>& p) {
  if constexpr (std::is_integral_v<T>)
    return std::to_string(p.first) + "," + std::to_string(p.second);
  else
    return format_double(p.first) + "," + format_double(p.second);
}

int to_int(const std::string& key, const std::string& value) {
  const auto v = parse_int(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError(key, "integer out of range");
  return static_cast<int>(v);
}

template <typename Proj>
Field real_field(std::string key, Proj proj) {
  return {key, [proj](RunConfig& c, const std::string& k, const std::string& v) { proj(c) = parse_double(k, v); },
          [proj](const RunConfig& c) { return format_double(proj(const_cast<RunConfig&>(c))); }};
}

template <typename Proj>
Field int_field(std::string key, Proj proj) {
  return {key, [proj](RunConfig& c, const std::string& k, const std::string& v) { proj(c) = to_int(k, v); },
          [proj](const RunConfig& c) { return std::to_string(proj(const_cast<RunConfig&>(c))); }};
}

template <typename T, typename Proj>
Field pair_field(std::string key, Proj proj) {
  return {key, [proj](RunConfig& c, const std::string& k, const std::string& v) { proj(c) = parse_pair<T>(k, v); },
          [proj](const RunConfig& c) { return format_pair<T>(proj(const_cast<RunConfig&>(c))); }};
}

template <typename Proj>
Field string_field(std::string key, Proj proj) {
  return {key, [proj](RunConfig& c, const std::string&, const std::string& v) { proj(c) = v; },
          [proj](const RunConfig& c) { return proj(const_cast<RunConfig&>(c)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint64(k, v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back(string_field("output_dir", [](RunConfig& c) -> std::string& { return c.output_dir; }));
    f.push_back(int_field("k", [](RunConfig& c) -> int& { return c.k; }));
    f.push_back({"predict.tta", [](RunConfig& c, const std::string& k, const std::string& v) { c.tta = parse_bool(k, v); },
                 [](const RunConfig& c) { return std::string(c.tta ? "true" : "false"); }});

    f.push_back(string_field("data.labels_csv", [](RunConfig& c) -> std::string& { return c.data.labels_csv; }));
    f.push_back(string_field("data.image_dir", [](RunConfig& c) -> std::string& { return c.data.image_dir; }));
    f.push_back(string_field("data.unlabeled_dir", [](RunConfig& c) -> std::string& { return c.data.unlabeled_dir; }));
    f.push_back(string_field("data.predict_dir", [](RunConfig& c) -> std::string& { return c.data.predict_dir; }));

    f.push_back(int_field("synth.image_size", [](RunConfig& c) -> int& { return c.synth.image_size; }));
    f.push_back({"synth.class_counts",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   const auto counts = parse_int_list(k, v);
                   if (counts.size() != kNumClasses) throw ConfigError(k, "expected 7 comma-separated counts");
                   for (int i = 0; i < kNumClasses; ++i) c.synth.class_counts[i] = static_cast<int>(counts[i]);
                 },
                 [](const RunConfig& c) {
                   std::vector<std::string> parts;
                   for (int n : c.synth.class_counts) parts.push_back(std::to_string(n));
                   return join(parts);
                 }});
    f.push_back(int_field("synth.unlabeled_count", [](RunConfig& c) -> int& { return c.synth.unlabeled_count; }));
    f.push_back(int_field("synth.test_per_class", [](RunConfig& c) -> int& { return c.synth_test_per_class; }));

    f.push_back(int_field("aug.crop_size", [](RunConfig& c) -> int& { return c.aug.crop_size; }));
    f.push_back(real_field("aug.flip_prob", [](RunConfig& c) -> double& { return c.aug.flip_prob; }));
    f.push_back({"aug.rotation_mode",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "quarter_turns") c.aug.rotation_mode = RotationMode::QuarterTurns;
                   else if (v == "arbitrary") c.aug.rotation_mode = RotationMode::Arbitrary;
                   else throw ConfigError(k, "expected quarter_turns or arbitrary, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.aug.rotation_mode == RotationMode::QuarterTurns ? "quarter_turns" : "arbitrary");
                 }});
    f.push_back(real_field("aug.erase_prob", [](RunConfig& c) -> double& { return c.aug.erase_prob; }));
    f.push_back(pair_field<double>("aug.erase_area_range", [](RunConfig& c) -> auto& { return c.aug.erase_area_range; }));
    f.push_back(pair_field<double>("aug.erase_aspect_range", [](RunConfig& c) -> auto& { return c.aug.erase_aspect_range; }));
    f.push_back(real_field("aug.bc_prob", [](RunConfig& c) -> double& { return c.aug.bc_prob; }));
    f.push_back(real_field("aug.hair_prob", [](RunConfig& c) -> double& { return c.aug.hair_prob; }));
    f.push_back(pair_field<int>("aug.hair_count_range", [](RunConfig& c) -> auto& { return c.aug.hair_count_range; }));
    f.push_back(pair_field<double>("aug.hair_length_range", [](RunConfig& c) -> auto& { return c.aug.hair_length_range; }));
    f.push_back(pair_field<double>("aug.hair_thickness_range", [](RunConfig& c) -> auto& { return c.aug.hair_thickness_range; }));
    f.push_back(pair_field<double>("aug.hair_darkness_range", [](RunConfig& c) -> auto& { return c.aug.hair_darkness_range; }));
    f.push_back(real_field("aug.hair_curvature_max", [](RunConfig& c) -> double& { return c.aug.hair_curvature_max; }));

    f.push_back(int_field("model.input_size", [](RunConfig& c) -> int& { return c.model.input_size; }));
    f.push_back({"model.widths",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.model.widths.clear();
                   for (auto w : parse_int_list(k, v)) c.model.widths.push_back(static_cast<int>(w));
                 },
                 [](const RunConfig& c) {
                   std::vector<std::string> parts;
                   for (int w : c.model.widths) parts.push_back(std::to_string(w));
                   return join(parts);
                 }});
    f.push_back(int_field("model.se_reduction", [](RunConfig& c) -> int& { return c.model.se_reduction; }));

    f.push_back(real_field("mt.ema_alpha", [](RunConfig& c) -> double& { return c.mt.ema_alpha; }));
    f.push_back(real_field("mt.consistency_max_weight", [](RunConfig& c) -> double& { return c.mt.consistency_max_weight; }));
    f.push_back(int_field("mt.rampup_epochs", [](RunConfig& c) -> int& { return c.mt.rampup_epochs; }));
    f.push_back(int_field("mt.epochs", [](RunConfig& c) -> int& { return c.mt.epochs; }));
    f.push_back(int_field("mt.batch_size_labeled", [](RunConfig& c) -> int& { return c.mt.batch_size_labeled; }));
    f.push_back(int_field("mt.batch_size_unlabeled", [](RunConfig& c) -> int& { return c.mt.batch_size_unlabeled; }));
    f.push_back(real_field("mt.lr", [](RunConfig& c) -> double& { return c.mt.lr; }));
    f.push_back(real_field("mt.momentum", [](RunConfig& c) -> double& { return c.mt.momentum; }));
    f.push_back({"mt.ema_granularity",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "step") c.mt.ema_granularity = EmaGranularity::Step;
                   else if (v == "epoch") c.mt.ema_granularity = EmaGranularity::Epoch;
                   else throw ConfigError(k, "expected step or epoch, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.mt.ema_granularity == EmaGranularity::Step ? "step" : "epoch");
                 }});
    f.push_back({"mt.sampling",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "shuffle") c.mt.sampling = LabeledSampling::Shuffle;
                   else if (v == "class_balanced") c.mt.sampling = LabeledSampling::ClassBalanced;
                   else throw ConfigError(k, "expected shuffle or class_balanced, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.mt.sampling == LabeledSampling::Shuffle ? "shuffle" : "class_balanced");
                 }});
    return f;
  }();
  return table;
}

std::string or_default(const std::string& value, const std::string& fallback) { return value.empty() ? fallback : value; }

}  // namespace

void RunConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  if (k < 2) throw ConfigError("k", "need at least 2 folds");
  synth.validate(k);
  if (synth_test_per_class < 0) throw ConfigError("synth.test_per_class", "must be non-negative");
  aug.validate();
  model.validate();
  mt.validate();
  if (aug.crop_size != model.input_size)
    throw ConfigError("aug.crop_size", "must equal model.input_size (" + std::to_string(model.input_size) + ")");
  if (synth.image_size < aug.crop_size)
    throw ConfigError("synth.image_size", "must be at least aug.crop_size");
}

std::string RunConfig::synth_dir() const { return output_dir + "/synth"; }
std::string RunConfig::resolved_labels_csv() const { return or_default(data.labels_csv, synth_dir() + "/train_labels.csv"); }
std::string RunConfig::resolved_image_dir() const { return or_default(data.image_dir, synth_dir() + "/train"); }
std::string RunConfig::resolved_unlabeled_dir() const { return or_default(data.unlabeled_dir, synth_dir() + "/unlabeled"); }
std::string RunConfig::resolved_predict_dir() const { return or_default(data.predict_dir, synth_dir() + "/test"); }

bool RunConfig::operator==(const RunConfig& o) const {
  // Blob styles are not part of the document; compare the serialized form.
  return serialize_config(*this) == serialize_config(o);
}

RunConfig parse_config(std::string_view text) {
  const auto doc = KvDocument::parse(text);
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;

  RunConfig cfg;
  bool have_seed = false;
  for (const auto& e : doc.entries()) {
    const auto it = by_key.find(e.key);
    if (it == by_key.end()) throw ConfigError(e.key, "unknown key (line " + std::to_string(e.line) + ")");
    it->second->set(cfg, e.key, e.value);
    have_seed |= e.key == "seed";
  }
  if (!have_seed) throw ConfigError("seed", "missing required key (seeds are mandatory)");
  cfg.validate();
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  KvDocument doc;
  for (const auto& f : fields()) doc.set(f.key, f.get(cfg));
  return doc.to_string();
}

}  // namespace dermaug
