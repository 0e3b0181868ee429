// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "dermaug/commands.hpp"
#include "dermaug/config.hpp"
#include "dermaug/ensemble.hpp"
#include "dermaug/error.hpp"
#include "dermaug/imagedata.hpp"
#include "dermaug/kvdoc.hpp"
#include "dermaug/metrics.hpp"

using namespace dermaug;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// Thresholds recorded from the first verified run; absent file means nothing recorded yet.
struct Fixtures {
  std::optional<KvDocument> doc;

  std::optional<double> get(const std::string& key) const {
    if (!doc) return std::nullopt;
    const auto v = doc->get(key);
    return v ? std::optional<double>(parse_double(key, *v)) : std::nullopt;
  }
};

Fixtures load_fixtures() {
  Fixtures f;
  try {
    f.doc = KvDocument::parse(read_text_file(DERMAUG_FIXTURES));
  } catch (const std::exception&) {
  }
  return f;
}

void floor_check(Verdict& v, const Fixtures& fx, const std::string& key, double measured) {
  const auto floor = fx.get(key);
  if (!floor) {
    v.require(false, "no recorded value for " + key);
    return;
  }
  v.require(measured >= *floor - 1e-9, key + " regressed below " + format_double(*floor));
}

Image random_image(int h, int w, std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (double& p : img.pixels) p = u(g);
  return img;
}

double bacc_of(std::span<const SoftLabel> preds, std::span<const SoftLabel> golds) {
  return balanced_accuracy(confusion_matrix(preds, golds));
}

// --- criteria -------------------------------------------------------------------

void gradient_fidelity(Verdict& v) {
  const auto t0 = Clock::now();
  const auto r = grad_check_report(ModelSpec{}, 1);
  const double secs = seconds_since(t0);
  v.detail << "max relative error " << r.max_relative_error << " (" << r.worst_parameter << "), "
           << r.coordinates_checked << " coordinates, " << r.coordinates_skipped << " skipped at ReLU kinks, "
           << secs << " s";
  v.require(r.max_relative_error <= 1e-3, "error <= 1e-3");
  v.require(secs < 60.0, "runtime < 60 s");
  v.require(r.coordinates_skipped * 10 <= r.coordinates_checked + r.coordinates_skipped, "skipped <= 10%");
}

void ema_closed_form(Verdict& v) {
  const ModelSpec spec;
  const auto student = init_params(spec, 1);
  const auto start = init_params(spec, 2);
  double worst = 0.0;
  for (double a : {0.5, 0.9, 0.99}) {
    auto teacher = start;
    for (int n = 1; n <= 100; ++n) {
      ema_update(teacher, student, a);
      const double an = std::pow(a, n);
      for (std::size_t e = 0; e < teacher.size(); ++e)
        for (std::size_t i = 0; i < teacher.entry(e).second.size(); ++i) {
          const double expect = an * start.entry(e).second.data[i] + (1 - an) * student.entry(e).second.data[i];
          worst = std::max(worst, std::abs(teacher.entry(e).second.data[i] - expect));
        }
    }
  }
  v.detail << "max deviation " << worst << " over n = 1..100, alpha in {0.5, 0.9, 0.99}";
  v.require(worst <= 1e-12, "deviation <= 1e-12");
}

void degeneracy_oracle(Verdict& v) {
  RunConfig cfg;
  cfg.seed = 42;
  const auto data = make_synthetic_dataset(cfg.synth, cfg.seed, cfg.k).labeled();
  auto mt = cfg.mt;
  mt.epochs = 5;
  mt.rampup_epochs = 5;
  mt.consistency_max_weight = 0.0;
  std::vector<ParamSet> a, b;
  train_fold(data, Dataset{}, cfg.model, mt, cfg.aug, 3, [&](const TrainState& s) { a.push_back(s.student); });
  train_supervised(data, cfg.model, mt, cfg.aug, 3, [&](const TrainState& s) { b.push_back(s.student); });
  std::size_t equal = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) equal += a[i] == b[i];
  v.detail << equal << "/" << a.size() << " steps bit-identical over 5 epochs";
  v.require(a.size() == b.size() && !a.empty() && equal == a.size(), "identical trajectories");
}

void augmentation_invariants(Verdict& v) {
  std::mt19937_64 g(5);
  AugConfig cfg;
  cfg.erase_prob = 1.0;

  // (a) random erase
  const auto img = random_image(32, 32, g);
  RngStream rng(1, 1);
  bool erase_ok = true;
  int erased = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto r = random_erase_traced(img, rng, cfg);
    if (!r.rect) {
      erase_ok &= r.image == img;
      continue;
    }
    ++erased;
    const double frac = double(r.rect->height) * r.rect->width / (32.0 * 32.0);
    erase_ok &= frac >= cfg.erase_area_range.first && frac <= cfg.erase_area_range.second;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (!r.rect->contains(y, x))
          for (int c = 0; c < 3; ++c) erase_ok &= r.image.at(y, x, c) == img.at(y, x, c);
  }
  v.detail << "(a) " << erased << " rectangles ok=" << erase_ok;
  v.require(erase_ok, "erase invariants");

  // (b) between-class mixing
  double label_dev = 0.0, pixel_dev = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Sample a{random_image(16, 16, g), SoftLabel::one_hot(i % 7)};
    const Sample b{random_image(16, 16, g), SoftLabel::one_hot((i + 3) % 7)};
    RngStream peek = rng;
    const double r = peek.uniform_open();
    const auto m = bc_mix(a, b, rng);
    label_dev = std::max(label_dev, std::abs(m.label->sum() - 1.0));
    for (std::size_t p = 0; p < m.image.size(); ++p)
      pixel_dev = std::max(pixel_dev, std::abs(m.image.pixels[p] - (r * a.image.pixels[p] + (1 - r) * b.image.pixels[p])));
  }
  v.detail << "; (b) label sum dev " << label_dev << ", pixel dev " << pixel_dev;
  v.require(label_dev <= 1e-12 && pixel_dev <= 1e-12, "bc_mix identities");

  // (c) Buffon's needle with straight strokes
  AugConfig hair;
  hair.hair_prob = 1.0;
  hair.hair_count_range = {1, 1};
  hair.hair_curvature_max = 0.0;
  hair.hair_length_range = {0.1, 0.1};
  const int side = 100;
  const double d = 20.0, l = 0.1 * std::hypot(100.0, 100.0);
  RngStream hr(2024, 1);
  const int drops = 10000;
  int crossings = 0;
  for (int i = 0; i < drops; ++i) {
    const auto s = sample_hair_strokes(side, side, hr, hair).front();
    crossings += std::floor((s.y0 + 0.5) / d) != std::floor((s.y2 + 0.5) / d);
  }
  const double p = 2 * l / (std::numbers::pi * d), se = std::sqrt(drops * p * (1 - p));
  const double z = (crossings - drops * p) / se;
  v.detail << "; (c) crossings " << crossings << " vs expected " << drops * p << " (z = " << z << ")";
  v.require(std::abs(z) <= 3.0, "crossing rate within 3 standard errors");

  // (d) determinism
  AugConfig all;
  all.crop_size = 24;
  all.erase_prob = all.hair_prob = all.bc_prob = 1.0;
  const Sample a{random_image(28, 28, g), SoftLabel::one_hot(1)};
  const Sample b{random_image(28, 28, g), SoftLabel::one_hot(5)};
  auto run = [&](std::uint64_t seed) {
    std::vector<Image> out;
    RngStream r(seed, 77);
    out.push_back(geometric_augment(a, r, all).image);
    out.push_back(random_erase(a.image, r, all));
    out.push_back(hair_overlay(a.image, r, all));
    out.push_back(bc_mix(a, b, r).image);
    out.push_back(apply_pipeline(a, b, r, all).image);
    AugConfig arb = all;
    arb.rotation_mode = RotationMode::Arbitrary;
    out.push_back(geometric_augment(a, r, arb).image);
    return out;
  };
  const bool det = run(9) == run(9);
  v.detail << "; (d) deterministic=" << det;
  v.require(det, "bit-determinism");
}

int first_max(const SoftLabel& l) {
  return static_cast<int>(std::max_element(l.probs.begin(), l.probs.end()) - l.probs.begin());
}

void metric_oracle(Verdict& v) {
  std::mt19937_64 g(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<int> len(1, 150), cls(0, 6), lvl(0, 3);
    const int n = len(g);
    std::vector<SoftLabel> preds(n), golds(n);
    for (int i = 0; i < n; ++i) {
      golds[i] = SoftLabel::one_hot(cls(g) % (1 + trial % 7));
      double s = 0.0;
      for (double& q : preds[i].probs) s += (q = lvl(g));
      if (s == 0.0) preds[i].probs[0] = s = 1.0;
      for (double& q : preds[i].probs) q /= s;
    }
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < 7; ++c) {
      int support = 0, hit = 0;
      for (int i = 0; i < n; ++i)
        if (first_max(golds[i]) == c) ++support, hit += first_max(preds[i]) == c;
      if (support) sum += double(hit) / support, ++present;
    }
    worst = std::max(worst, std::abs(bacc_of(preds, golds) - sum / present));
  }
  v.detail << "max deviation from brute force " << worst << " over 1000 instances";
  v.require(worst <= 1e-12, "brute-force agreement");

  ConfusionMatrix m;
  m.counts[0][0] = 2;
  m.counts[2][2] = 1;
  m.counts[2][1] = 1;
  const bool zero_support = balanced_accuracy(m) == 0.75;
  SoftLabel tie;
  tie.probs = {0, 0.4, 0, 0.4, 0.2, 0, 0};
  const bool tie_low = confusion_matrix(std::vector{tie}, std::vector{SoftLabel::one_hot(1)}).counts[1][1] == 1;
  v.detail << "; zero-support exclusion " << zero_support << ", lowest-index tie-break " << tie_low;
  v.require(zero_support && tie_low, "constructed cases");
}

void ensemble_algebra(Verdict& v) {
  const ModelSpec spec;
  std::mt19937_64 g(3);
  EnsembleModel m{spec, {}};
  for (std::uint64_t s = 1; s <= 5; ++s) {
    NormStats st;
    st.mean = {0.45, 0.4 + 0.02 * s, 0.35};
    st.std = {0.2, 0.2, 0.15 + 0.01 * s};
    m.members.push_back({init_params(spec, s), st});
  }
  auto reversed = m;
  std::reverse(reversed.members.begin(), reversed.members.end());
  bool bounded = true, order = true, single = true;
  for (int i = 0; i < 10; ++i) {
    const auto img = random_image(32, 32, g);
    for (bool tta : {false, true}) {
      const auto e = predict(m, img, tta);
      order &= e == predict(reversed, img, tta);
      std::vector<SoftLabel> each;
      for (const auto& mem : m.members) each.push_back(predict(EnsembleModel{spec, {mem}}, img, tta));
      for (int k = 0; k < 7; ++k) {
        double lo = 1, hi = 0;
        for (const auto& p : each) lo = std::min(lo, p.probs[k]), hi = std::max(hi, p.probs[k]);
        bounded &= e.probs[k] >= lo && e.probs[k] <= hi;
      }
      const auto direct = predict_softmax(m.members[0].params, spec, m.members[0].stats, std::span(&img, 1))[0];
      if (!tta) single &= each[0] == direct;
      EnsembleModel copies{spec, std::vector<EnsembleMember>(4, m.members[0])};
      single &= predict(copies, img, tta) == each[0];
    }
  }
  v.detail << "convex bounds " << bounded << ", order invariance " << order << ", single member bit-exact " << single;
  v.require(bounded && order && single, "ensemble algebra");
}

struct DeskScale {
  RunConfig cfg;
  Dataset labeled, unlabeled, test;
};

DeskScale desk_scale() {
  DeskScale d;
  d.cfg.seed = 42;
  const auto all = make_synthetic_dataset(d.cfg.synth, d.cfg.seed, d.cfg.k);
  d.labeled = all.labeled();
  d.unlabeled = all.unlabeled();
  d.test = make_synthetic_test_set(d.cfg);
  return d;
}

std::vector<Image> images_of(const Dataset& ds) {
  std::vector<Image> out;
  for (const auto& e : ds) out.push_back(e.image);
  return out;
}

void desk_scale_experiment(Verdict& v, const DeskScale& d, const Fixtures& fx) {
  const auto& cfg = d.cfg;
  const auto t0 = Clock::now();
  const auto plan = stratified_kfold(d.labeled.labels(), cfg.k, RngStream::derive(cfg.seed, {0xF01D}).next_u64());
  const auto result = train_ensemble(d.labeled, d.unlabeled, plan, {cfg.model, cfg.mt, cfg.aug},
                                     RngStream::derive(cfg.seed, {0xE115}).next_u64());
  const double secs = seconds_since(t0);

  const auto images = images_of(d.test);
  const auto golds = d.test.labels();
  double min_heldout = 1.0, member_test_mean = 0.0;
  v.detail << d.labeled.size() << " labeled + " << d.unlabeled.size() << " unlabeled, " << cfg.k << " folds in "
           << secs << " s; held-out";
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const double h = result.reports[i].heldout_bacc;
    min_heldout = std::min(min_heldout, h);
    v.detail << " " << h;
    v.require(h > 1.0 / 7.0, "member " + std::to_string(i) + " above chance");
    const EnsembleModel one{cfg.model, {result.model.members[i]}};
    member_test_mean += bacc_of(predict_images(one, images, cfg.tta), golds) / double(result.reports.size());
  }
  const double ens = bacc_of(predict_images(result.model, images, cfg.tta), golds);
  v.detail << "; test set (" << images.size() << "): ensemble " << ens << " vs member mean " << member_test_mean;
  v.require(secs < 300.0, "under 5 minutes");
  v.require(ens >= member_test_mean, "ensemble >= member mean");
  floor_check(v, fx, "desk.min_member_heldout_bacc", min_heldout);
  floor_check(v, fx, "desk.ensemble_test_bacc", ens);
}

void directional_augmentation(Verdict& v, const DeskScale& d, const Fixtures& fx) {
  const auto& cfg = d.cfg;
  AugConfig corrupt = cfg.aug;
  corrupt.hair_prob = 1.0;
  std::vector<Image> hairy;
  std::size_t i = 0;
  for (const auto& e : d.test) {
    auto r = RngStream::derive(99, {i++});
    hairy.push_back(hair_overlay(e.image, r, corrupt));
  }
  const auto golds = d.test.labels();
  double score[2];
  for (int full : {1, 0}) {
    const auto aug = full ? cfg.aug : AugConfig::disabled(cfg.aug.crop_size);
    const auto r = train_fold(d.labeled, d.unlabeled, cfg.model, cfg.mt, aug, 7);
    score[full] = bacc_of(predict_softmax(r.teacher, cfg.model, r.stats, hairy), golds);
  }
  v.detail << "hair-corrupted test balanced accuracy: full pipeline " << score[1] << ", no augmentation " << score[0];
  v.require(score[1] >= score[0], "full >= none");
  floor_check(v, fx, "hair.full_bacc", score[1]);
}

void format_round_trips(Verdict& v) {
  std::mt19937_64 g(8);
  std::uniform_int_distribution<int> byte(0, 255), side(1, 40);
  bool ppm = true;
  for (int i = 0; i < 200; ++i) {
    Image img(side(g), side(g));
    for (double& p : img.pixels) p = byte(g) / 255.0;
    ppm &= decode_image(encode_ppm(img), ImageFormat::Ppm) == img;
  }

  const ModelSpec spec;
  const EnsembleModel m{spec, {{init_params(spec, 4), NormStats{}}, {init_params(spec, 5), NormStats{}}}};
  Dataset ds;
  for (int k = 0; k < 12; ++k) ds.add({"p" + std::to_string(k), random_image(32, 32, g), std::nullopt});
  const auto rows = predict_dataset(m, ds, true);
  bool csv = true;
  const auto back = load_labels_csv(write_labels_csv(rows));
  csv &= back.size() == rows.size();
  for (std::size_t k = 0; csv && k < rows.size(); ++k)
    csv &= back[k].id == rows[k].id && back[k].label == rows[k].label && back[k].label.valid();

  const auto c1 = parse_config(
      "seed = 77\nk = 4\naug.erase_prob = 0.3125\naug.rotation_mode = arbitrary\nmt.lr = 0.017\n"
      "mt.ema_granularity = epoch\nsynth.class_counts = 9,40,9,8,9,8,8\n");
  const auto s1 = serialize_config(c1);
  const auto c2 = parse_config(s1);
  const bool cfg = c1 == c2 && serialize_config(c2) == s1;
  v.detail << "PPM identity " << ppm << ", predictions CSV " << csv << ", config fixpoint " << cfg;
  v.require(ppm && csv && cfg, "round trips");
}

}  // namespace

int main() {
  const auto fx = load_fixtures();
  std::optional<DeskScale> desk;
  auto need_desk = [&]() -> const DeskScale& {
    if (!desk) desk = desk_scale();
    return *desk;
  };

  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"EMA closed form", ema_closed_form},
      {"mean-teacher degeneracy oracle", degeneracy_oracle},
      {"augmentation invariants", augmentation_invariants},
      {"metric oracle", metric_oracle},
      {"ensemble algebra", ensemble_algebra},
      {"desk-scale experiment", [&](Verdict& v) { desk_scale_experiment(v, need_desk(), fx); }},
      {"directional augmentation check", [&](Verdict& v) { directional_augmentation(v, need_desk(), fx); }},
      {"format round-trips", format_round_trips},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    failures += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
