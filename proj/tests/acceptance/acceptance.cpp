// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//
//   mosq_acceptance            run all criteria
//   mosq_acceptance 2 7        run a subset
//
// Exit status is 0 when every criterion passes except those listed in
// kExpectedFailures, which are known to be unattainable and are still
// reported as FAIL.

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

#include "grad_cases.hpp"
#include "label_oracle.hpp"
#include "mosq/train/experiment.hpp"

using namespace mosq;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Criterion 2 asks for mos == dot(histogram, [1..5]) bit for bit alongside an
// exact match with the brute-force mean. The histogram entries are rounded
// quotients, so the dot product can land up to 2 ulp away from sum/n.
const std::set<int> kExpectedFailures{2};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::vector<int> random_scores(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(2, 30), score(1, 5);
  std::vector<int> s(static_cast<std::size_t>(len(rng)));
  // Mix uniform records with concentrated ones so low-variance cases appear.
  const bool narrow = rng() % 3 == 0;
  const int centre = score(rng);
  for (auto& v : s) v = narrow ? std::clamp(centre + static_cast<int>(rng() % 3) - 1, 1, 5) : score(rng);
  return s;
}

std::array<double, 5> random_simplex(std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::array<double, 5> p{};
  double s = 0;
  for (auto& v : p) s += v = e(rng);
  for (auto& v : p) v /= s;
  return p;
}

std::array<double, 5> one_hot(std::size_t k) {
  std::array<double, 5> h{};
  h[k] = 1.0;
  return h;
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t n_cases = 0;
  std::uint64_t seed = 1000;
  for (const auto& group : {gradcases::layer_cases(), gradcases::loss_cases()}) {
    for (const auto& c : group) {
      const auto s = gradcases::run_case(c, 20, seed++);
      ++n_cases;
      if (s.worst >= worst) worst = s.worst, worst_name = s.name;
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-4 && secs < 60.0, std::to_string(n_cases) + " cases x 20 instances, worst relative error " +
                                           fmt(worst) + " (" + worst_name + "), " + fmt(secs, 3) + " s"};
}

Outcome statistics_oracle() {
  std::mt19937_64 rng(2024);
  std::size_t exact_fail = 0, moment_fail = 0, identity_fail = 0;
  double max_ulps = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto s = random_scores(rng);
    const auto st = labels::compute_stats(s);
    const auto o = oracle::brute_force(s);
    exact_fail += st.mos != o.mos || st.median != o.median || st.histogram != o.histogram;
    moment_fail += std::abs(st.sigma - o.sigma) > 1e-10 || std::abs(st.skewness - o.skewness) > 1e-10 ||
                   std::abs(st.kurtosis - o.kurtosis) > 1e-10;
    double dot = 0.0;
    for (std::size_t k = 0; k < 5; ++k) dot += st.histogram[k] * static_cast<double>(k + 1);
    if (dot != st.mos) {
      ++identity_fail;
      max_ulps = std::max(max_ulps, std::abs(dot - st.mos) / (std::nextafter(st.mos, 10.0) - st.mos));
    }
  }
  return {exact_fail == 0 && moment_fail == 0 && identity_fail == 0,
          "10000 records: mos/median/histogram mismatches " + std::to_string(exact_fail) +
              ", sigma/skew/kurtosis beyond 1e-10 " + std::to_string(moment_fail) +
              ", records where dot(histogram,[1..5]) != mos bitwise " + std::to_string(identity_fail) + " (max " +
              fmt(max_ulps, 2) + " ulp)"};
}

Outcome metric_oracle() {
  const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4};
  const double p = *metrics::pcc(x, y), r = *metrics::srcc(x, y);
  bool ok = std::abs(p - 0.8) < 1e-12 && std::abs(r - 0.8) < 1e-12;

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(1.0, 5.0);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t groups = 2 + rng() % 5;
    const std::size_t n = groups + rng() % (21 - groups);
    std::vector<metrics::PredictionRecord> recs;
    std::vector<double> sp(groups, 0), sg(groups, 0), cnt(groups, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t g = i < groups ? i : rng() % groups;
      const double pv = u(rng), gv = u(rng);
      recs.push_back({"c" + std::to_string(i), "g" + std::to_string(g), pv, gv, std::nullopt, std::nullopt});
      sp[g] += pv, sg[g] += gv, cnt[g] += 1;
    }
    std::vector<double> mp, mg;
    for (std::size_t g = 0; g < groups; ++g) mp.push_back(sp[g] / cnt[g]), mg.push_back(sg[g] / cnt[g]);
    const auto rep = metrics::evaluate(recs);
    const auto bp = metrics::pcc(mp, mg), bs = metrics::srcc(mp, mg);
    const bool same = std::abs(rep.stack_ranked.mae - metrics::mae(mp, mg)) < 1e-12 &&
                      std::abs(rep.stack_ranked.rmse - metrics::rmse(mp, mg)) < 1e-12 &&
                      bp.has_value() == rep.stack_ranked.pcc.has_value() &&
                      (!bp || std::abs(*bp - *rep.stack_ranked.pcc) < 1e-12) &&
                      bs.has_value() == rep.stack_ranked.srcc.has_value() &&
                      (!bs || std::abs(*bs - *rep.stack_ranked.srcc) < 1e-12);
    mismatches += !same;
  }
  ok = ok && mismatches == 0;
  return {ok, "fixture pcc " + fmt(p, 6) + ", srcc " + fmt(r, 6) + "; 1000 stack-rank instances (<= 20 records), " +
                  std::to_string(mismatches) + " mismatches against hand grouping"};
}

Outcome histogram_geometry() {
  const double w_adj = losses::hist_wasserstein(one_hot(0), one_hot(1));
  const double w_ext = losses::hist_wasserstein(one_hot(0), one_hot(4));
  const double c_adj = losses::hist_chi_square(one_hot(0), one_hot(1));
  const double c_ext = losses::hist_chi_square(one_hot(0), one_hot(4));
  bool ok = std::abs(w_adj - 1.0) < 1e-12 && std::abs(w_ext - 4.0) < 1e-12 && c_adj == c_ext;

  std::mt19937_64 rng(7);
  std::size_t negative = 0, nonzero_at_equality = 0;
  double min_value = 1e300;
  for (int i = 0; i < 10000; ++i) {
    const auto p = random_simplex(rng), g = random_simplex(rng);
    for (double v : {losses::hist_cross_entropy(p, g), losses::hist_wasserstein(p, g), losses::hist_chi_square(p, g)}) {
      negative += v < 0.0;
      min_value = std::min(min_value, v);
    }
    for (double v : {losses::hist_cross_entropy(g, g), losses::hist_wasserstein(g, g), losses::hist_chi_square(g, g)}) {
      nonzero_at_equality += v != 0.0;
    }
  }
  ok = ok && negative == 0 && nonzero_at_equality == 0;
  return {ok, "wasserstein adjacent " + fmt(w_adj) + ", extreme " + fmt(w_ext) + "; chi-square adjacent " +
                  fmt(c_adj) + ", extreme " + fmt(c_ext) + "; 10000 simplex pairs: negatives " +
                  std::to_string(negative) + " (min " + fmt(min_value) + "), nonzero at equality " +
                  std::to_string(nonzero_at_equality)};
}

Outcome parameter_count() {
  const auto model = models::build_variant<float>(models::VariantId::II, models::BackboneConfig{}, 1);
  const std::size_t n = model.parameter_count();
  std::cout << "  trainable parameters (variant II): " << n << '\n';
  return {n >= 46170 && n <= 56430, std::to_string(n) + " vs 51300 (" + fmt(100.0 * (double(n) - 51300.0) / 51300.0, 3) +
                                        "%)"};
}

// Shape algebra written out independently of the library.
std::vector<models::StageShape> shape_oracle(std::size_t n) {
  std::vector<models::StageShape> s;
  std::size_t h = 26, w = n;
  const auto conv = [&](std::size_t c, std::size_t kh, std::size_t kw) { h -= kh - 1, w -= kw - 1, s.push_back({c, h, w}); };
  const auto pool = [&](std::size_t c, std::size_t ph, std::size_t pw) { h /= ph, w /= pw, s.push_back({c, h, w}); };
  conv(8, 1, 5);
  pool(8, 1, 3);
  conv(16, 5, 5);
  pool(16, 2, 2);
  conv(16, 5, 5);
  conv(24, 3, 3);
  conv(22, 3, 3);
  return s;
}

Outcome shape_contract() {
  const models::BackboneConfig cfg;
  const std::size_t n_min = models::min_frames(cfg);
  bool ok = true;
  std::string detail = "N_min " + std::to_string(n_min);
  for (std::size_t n : {n_min, std::size_t{397}, std::size_t{1997}}) {
    const auto got = models::stage_shapes(cfg, n);
    ok = ok && got == shape_oracle(n);
    detail += ", N=" + std::to_string(n) + " -> 22x3x" + std::to_string(got.back().w);
  }
  ok = ok && models::stage_shapes(cfg, n_min - 1).empty() && shape_oracle(n_min - 1).back().w == 0;
  const auto f4 = audio::extract_features(audio::Waveform{std::vector<float>(64000, 0.01f)});
  const auto f20 = audio::extract_features(audio::Waveform{std::vector<float>(320000, 0.01f)});
  ok = ok && f4.rows() == 26 && f4.frames == 397 && f20.rows() == 26 && f20.frames == 1997;
  detail += "; 4 s -> " + std::to_string(f4.rows()) + "x" + std::to_string(f4.frames) + ", 20 s -> " +
            std::to_string(f20.rows()) + "x" + std::to_string(f20.frames);
  return {ok, detail};
}

Outcome overfit() {
  data::SynthSpec spec;
  spec.n_models = 4;
  spec.clips_per_model = 8;
  spec.clip_seconds = 1.0;
  const auto samples = train::samples_from_synth(data::synthesize(spec));
  train::RunConfig cfg;
  cfg.batch_size = 16;
  cfg.backbone.dropout_p = 0.0;
  cfg.max_steps = 2000;
  cfg.max_epochs = 1000;
  cfg.target_train_mae = 0.05;
  cfg.mae_check_every = 25;
  // Two steps per epoch make a 10-epoch patience far too eager for a
  // memorisation run, so plateau decay is disabled here.
  cfg.scheduler_patience = 100000;
  bool ok = true;
  std::string failed;
  for (auto id : models::kAllVariants) {
    cfg.variant = std::string(models::to_string(id));
    const auto start = Clock::now();
    train::Trainer<float> t(cfg);
    const auto r = t.fit(samples, {});
    const double secs = seconds_since(start);
    const double mae = t.mae_on(samples);
    const bool pass = mae < 0.05 && r.steps <= 2000 && secs < 300.0;
    std::cout << "  " << std::left << std::setw(11) << cfg.variant << " steps " << std::setw(5) << r.steps
              << " train MAE " << std::setw(9) << fmt(mae) << ' ' << fmt(secs, 3) << " s" << (pass ? "" : "  <- miss")
              << '\n';
    if (!pass) ok = false, failed += " " + cfg.variant;
  }
  return {ok, "32 clips, batch 16, dropout and lr decay off, <= 2000 steps" + (failed.empty() ? std::string{} : ", missed:" + failed)};
}

Outcome desk_experiment() {
  data::SynthSpec spec;
  spec.n_models = 20;
  spec.clips_per_model = 100;
  spec.clip_seconds = 1.0;
  const auto clips = data::synthesize(spec);
  data::DatasetManifest m;
  for (const auto& c : clips) m.entries.push_back({c.record.clip_id, "", c.record.dns_model_id, c.record.scores, ""});
  train::RunConfig cfg;
  cfg.batch_size = 32;
  cfg.max_epochs = 8;
  const auto split = data::split(m, cfg.val_fraction, cfg.seed);
  const auto all = train::samples_from_synth(clips);
  std::map<std::string, const train::Sample*> by_id;
  for (const auto& s : all) by_id[s.clip_id] = &s;
  std::vector<train::Sample> train_set, val_set;
  for (const auto& e : split.train) train_set.push_back(*by_id[e.clip_id]);
  for (const auto& e : split.validation) val_set.push_back(*by_id[e.clip_id]);

  std::vector<models::VariantId> ids(models::kAllVariants.begin(), models::kAllVariants.end());
  const auto results = train::run_experiment<float>(ids, cfg, train_set, val_set);
  std::cout << '\n';
  const auto rows = train::table_rows(results);
  metrics::write_table(std::cout, rows);
  std::cout << '\n';

  const auto& ii = results.front().row.report.stack_ranked;
  const double srcc = ii.srcc.value_or(-1.0);
  std::string better;
  for (const auto& r : results) {
    const auto spec_r = models::variant_spec(r.id);
    const bool distribution = spec_r.head != models::HeadKind::Scalar || spec_r.aux != models::AuxTarget::None;
    if (distribution && r.row.report.stack_ranked.rmse <= ii.rmse) better += " " + r.row.id;
  }
  std::cout << "  qualitative: distribution-supervised variants with stack-ranked RMSE <= II ("
            << fmt(ii.rmse) << "):" << (better.empty() ? " none" : better) << "\n";
  const bool ok = srcc >= 0.9 && rows.size() == 10;
  return {ok, "20 models x 100 clips (1 s), 8 epochs; variant II stack-ranked SRCC " + fmt(srcc) + ", table rows " +
                  std::to_string(rows.size())};
}

Outcome scheduler_behavior() {
  // Epoch 0 is the validation pass before training; it sets the reference
  // that the following 25 epochs never beat.
  std::vector<double> val_loss{0.80};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> up(0.0, 0.05);
  for (int e = 1; e <= 25; ++e) val_loss.push_back(0.80 + up(rng));
  nn::PlateauScheduler s(0.001);
  std::vector<int> drop_epochs;
  double lr = s.step(val_loss[0]);
  std::string lrs;
  for (int e = 1; e <= 25; ++e) {
    const double next = s.step(val_loss[static_cast<std::size_t>(e)]);
    if (next != lr) {
      drop_epochs.push_back(e);
      lrs += " " + fmt(lr, 3) + "->" + fmt(next, 3);
    }
    lr = next;
  }
  const bool ok = drop_epochs == std::vector<int>{10, 20} && std::abs(lr - 1e-5) < 1e-18;
  std::string at;
  for (int e : drop_epochs) at += " " + std::to_string(e);
  return {ok, "reductions at epochs" + at + ":" + lrs};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  data::SynthSpec spec;
  spec.n_models = 3;
  spec.clips_per_model = 6;
  spec.clip_seconds = 1.0;
  const auto samples = train::samples_from_synth(data::synthesize(spec));
  std::vector<train::Sample> tr, va;
  for (std::size_t i = 0; i < samples.size(); ++i) (i % 6 == 5 ? va : tr).push_back(samples[i]);
  const fs::path root = fs::temp_directory_path() / ("mosq_acceptance_det_" + std::to_string(::getpid()));
  bool ok = true;
  std::string detail;
  for (const char* variant : {"II", "VIII_w", "X_relu"}) {
    train::RunConfig cfg;
    cfg.variant = variant;
    cfg.batch_size = 4;
    cfg.max_epochs = 3;
    cfg.seed = 11;
    for (const char* run : {"a", "b"}) train::Trainer<float>(cfg).fit(tr, va, root / variant / run);
    for (const char* f : {"train_log.jsonl", "best.ckpt", "last.ckpt"}) {
      const auto a = slurp(root / variant / "a" / f), b = slurp(root / variant / "b" / f);
      const bool same = !a.empty() && a == b;
      ok = ok && same;
      if (!same) detail += std::string(" ") + variant + "/" + f + " differs;";
    }
  }
  fs::remove_all(root);
  return {ok, "3 variants x (train log, best and last checkpoint), two runs each:" +
                  (detail.empty() ? std::string(" byte-identical") : detail)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
      {"gradient suite", gradient_suite},
      {"statistics oracle", statistics_oracle},
      {"metric oracle", metric_oracle},
      {"histogram-loss geometry", histogram_geometry},
      {"parameter count", parameter_count},
      {"shape contract", shape_contract},
      {"overfit smoke test", overfit},
      {"desk-scale stack-rank experiment", desk_experiment},
      {"scheduler behavior", scheduler_behavior},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int unexpected = 0, passed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    ++run;
    std::cout << "[" << id << "] " << criteria[i].first << '\n' << std::flush;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool expected_fail = !o.pass && kExpectedFailures.count(id);
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[i].first << " -- " << o.detail
              << (expected_fail ? " [known unattainable, see README]" : "") << "\n\n"
              << std::flush;
    passed += o.pass;
    if (!o.pass && !expected_fail) ++unexpected;
  }
  std::cout << passed << "/" << run << " criteria passed";
  if (unexpected == 0 && passed < run) std::cout << " (remaining failures are known and documented)";
  std::cout << '\n';
  return unexpected == 0 ? 0 : 1;
}
