// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mask_oracle.hpp"
#include "mmadapt/adaptation.hpp"
#include "mmadapt/binary_io.hpp"
#include "mmadapt/ensemble.hpp"
#include "mmadapt/metrics.hpp"
#include "mmadapt/ops.hpp"
#include "mmadapt/optim.hpp"
#include "mmadapt/pretrain.hpp"
#include "mmadapt/rng.hpp"
#include "mmadapt/synthbench.hpp"
#include "selection_harness.hpp"

using namespace mmadapt;
namespace fs = std::filesystem;

namespace {

// Tolerances and run sizes.
constexpr double kGradTolerance = 1e-3;
constexpr double kKinkTolerance = 1e-3;
constexpr double kGradBudgetSeconds = 120.0;
constexpr double kNormTolerance = 1e-6;
constexpr double kAsdTolerance = 1e-9;
constexpr double kStageOneGain = 0.03;
constexpr double kStageOneBudgetSeconds = 30 * 60.0;
constexpr double kStudentSlack = 0.02;
constexpr std::size_t kSeeds = 3;

constexpr std::size_t kSourceImages = 50;
constexpr std::size_t kTargetImages = 86;  // 60 train, 26 test
constexpr std::size_t kPretrainEpochs = 60;
constexpr std::size_t kAdaptEpochs = 10;
constexpr std::size_t kEnsembleEpochs = 80;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Tensor t({1, h, w});
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform();
  return t;
}

// ---------------------------------------------------------------------------
// 1. gradients

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  std::size_t compared = 0, skipped = 0;
  auto record = [&](const std::string& name, const GradCheckReport& r) {
    worst[name] = std::max(worst[name], r.worst);
    compared += r.compared;
    skipped += r.skipped;
  };

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GradCheckOptions opt{.samples_per_param = 3, .seed = seed, .kink_tolerance = kKinkTolerance};

    // Stage I on a teacher with auxiliary decoders.
    SegNet net = init_network({}, 1000 + seed);
    net.attach_aux_decoders();
    net.set_dropout_rate(0.3);
    auto params = net.trainable(true);
    const std::vector<Tensor> imgs{random_image(16, 16, seed), random_image(16, 16, seed + 100)};
    const auto protos = compute_prototypes(net, imgs);
    std::vector<RefinedLabels> refined;
    std::vector<Tensor> targets;
    for (const auto& img : imgs) {
      const ForwardResult r = forward(net, img);
      refined.push_back(refine_pseudo_labels(r.probs.value(), r.taps.decision.value(), protos, 0.1));
      targets.push_back(r.probs.value());
    }
    const AdaptConfig acfg;
    auto stage1 = [&] {
      std::vector<AuxForwardResult> fwd;
      for (std::size_t i = 0; i < imgs.size(); ++i) fwd.push_back(forward_with_aux(net, imgs[i], 7 + i));
      return adaptation_losses(fwd, refined, acfg, targets);
    };
    record("L_lrm", finite_diff_report([&] { return stage1().lrm; }, params, opt));
    record("L_con", finite_diff_report([&] { return stage1().con; }, params, opt));
    record("L_im", finite_diff_report([&] { return stage1().im; }, params, opt));
    record("L_ma", finite_diff_report([&] { return stage1().total; }, params, opt));

    // Stage II with two random teachers.
    std::vector<SegNet> teachers{init_network({}, 2000 + seed, {0, 1}), init_network({}, 3000 + seed, {0, 2})};
    const TeacherPool pool(teachers);
    SegNet student = init_student(pool.registry, {}, 4000 + seed);
    const Tensor image = random_image(16, 16, seed + 200);
    std::vector<Tensor> probs;
    std::vector<TeacherTaps> taps;
    std::vector<FeatureProjector::TapChannels> channels;
    for (const auto& t : teachers) {
      const ForwardResult r = forward(t, image);
      probs.push_back(r.probs.value());
      taps.push_back({r.taps.low.value(), r.taps.high.value()});
      channels.push_back({r.taps.low.value().dim(0), r.taps.high.value().dim(0)});
    }
    const SelectionMap sel = build_selection_map(pool.registry, probs, EnsembleStrategy::certainty_norm);
    const std::vector<LabelMap> labels{aggregate_labels(pool.registry, probs, sel)};
    const ForwardResult s0 = forward(student, image);
    FeatureProjector proj({s0.taps.low.value().dim(0), s0.taps.high.value().dim(0)}, channels, 8, 5000 + seed);
    auto sparams = student.trainable();
    for (Parameter* p : proj.trainable()) sparams.push_back(p);
    auto la = [&](const ForwardResult& f) { return label_agg_loss(std::vector<Var>{f.probs}, labels); };
    auto fa = [&](const ForwardResult& f) { return feature_agg_loss(f.taps, taps, proj, sel); };
    record("L_la", finite_diff_report([&] { return la(forward(student, image)); }, sparams, opt));
    record("L_fa", finite_diff_report([&] { return fa(forward(student, image)); }, sparams, opt));
    record("L_me", finite_diff_report(
                       [&] {
                         const ForwardResult f = forward(student, image);
                         return add(la(f), scale(fa(f), EnsembleConfig{}.lambda_fa));
                       },
                       sparams, opt));
  }
  const double elapsed = seconds_since(t0);
  // Samples straddling a ReLU or max-pool switch are redrawn; too many would hollow out the check.
  bool ok = elapsed < kGradBudgetSeconds && skipped * 20 <= compared + skipped;
  std::string detail;
  for (const auto& [name, err] : worst) {
    ok = ok && err < kGradTolerance;
    detail += fmt("%s %.1e, ", name.c_str(), err);
  }
  return {ok, "max relative error " + detail +
                  fmt("%zu samples compared, %zu redrawn at kinks, 10 seeds in %.0fs", compared, skipped, elapsed)};
}

// ---------------------------------------------------------------------------
// 2. preselection and selection oracle

Outcome selection_oracle() {
  const std::vector<std::vector<std::vector<int>>> registries{
      {{1}, {2}}, {{2}, {1}}, {{1}, {2}, {3}}, {{1, 2}, {3}}, {{1, 2, 3}, {4}}, {{1, 2}, {3}, {4}}, {{1}, {2, 3}, {4, 5, 6}}};
  std::size_t pixels = 0, mismatches = 0;
  for (const auto& classes : registries) {
    for (auto strategy : {EnsembleStrategy::certainty_norm, EnsembleStrategy::certainty_raw, EnsembleStrategy::average}) {
      const auto r = oracle::run_selection_harness(classes, strategy, 8, 31);
      pixels += r.pixels;
      mismatches += r.preselect_mismatches + r.select_mismatches + r.invariant_violations;
    }
  }
  return {mismatches == 0, fmt("%zu mismatches over %zu pixel configurations (%zu registries, 3 strategies)",
                               mismatches, pixels, registries.size())};
}

// ---------------------------------------------------------------------------
// 3. certainty normalization

Outcome normalization_property() {
  std::size_t groups = 0, degenerate = 0, failures = 0;
  double worst_mean = 0.0, worst_std = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto reg = oracle::registry_of(seed % 2 ? std::vector<std::vector<int>>{{1}, {2}, {3}}
                                                  : std::vector<std::vector<int>>{{1, 2}, {3}});
    std::vector<Tensor> probs;
    for (std::size_t i = 0; i < reg.size(); ++i) {
      const std::size_t c = reg.bindings[i].size();
      Tensor logits({c, 12, 12});
      // A few saturated pixels and one near-constant teacher exercise the floor.
      for (auto& v : logits.values()) v = seed % 5 == i ? 1.0 : rng.normal() * 3.0;
      Tensor p = softmax(Var::constant(logits)).value();
      probs.push_back(p);
    }
    const CertaintyMap m = certainty_map(reg, probs);
    const auto hard = teacher_hard_predictions(reg, probs);
    for (std::size_t i = 0; i < reg.size(); ++i) {
      std::map<int, std::vector<double>> by_group;
      for (std::size_t x = 0; x < m.raw[i].size(); ++x) by_group[hard[i].data[x]].push_back(m.normalized[i][x]);
      std::map<int, std::vector<double>> raw_group;
      for (std::size_t x = 0; x < m.raw[i].size(); ++x) raw_group[hard[i].data[x]].push_back(m.raw[i][x]);
      for (const auto& [cls, vals] : by_group) {
        ++groups;
        const auto& raw = raw_group[cls];
        double mu = 0.0;
        for (double v : raw) mu += v;
        mu /= static_cast<double>(raw.size());
        double var = 0.0;
        for (double v : raw) var += (v - mu) * (v - mu);
        const double sd = std::sqrt(var / static_cast<double>(raw.size()));
        if (vals.size() < 2 || sd <= kCertaintySigmaFloor) {
          ++degenerate;
          failures += std::any_of(vals.begin(), vals.end(), [](double v) { return v != 0.0; });
          continue;
        }
        double nm = 0.0;
        for (double v : vals) nm += v;
        nm /= static_cast<double>(vals.size());
        double nv = 0.0;
        for (double v : vals) nv += (v - nm) * (v - nm);
        const double ns = std::sqrt(nv / static_cast<double>(vals.size()));
        worst_mean = std::max(worst_mean, std::abs(nm));
        worst_std = std::max(worst_std, std::abs(ns - 1.0));
        failures += std::abs(nm) > kNormTolerance || std::abs(ns - 1.0) > kNormTolerance;
      }
    }
  }
  return {failures == 0 && degenerate > 0,
          fmt("%zu groups (%zu degenerate), worst |mean| %.1e, worst |std-1| %.1e, %zu failures", groups, degenerate,
              worst_mean, worst_std, failures)};
}

// ---------------------------------------------------------------------------
// 4, 5, 9. benchmark study

MetricReport test_metrics(const SegNet& net, const Dataset& ds, const std::vector<int>& classes) {
  std::vector<LabelMap> preds;
  for (auto i : ds.test) preds.push_back(predict_labels(net, ds.samples[i].image));
  return evaluate_predictions(preds, ds.truths(ds.test), classes);
}

struct SeedRun {
  std::map<int, double> zero_shot;  // organ -> target DSC before adaptation
  std::map<int, double> adapted;
  std::map<int, double> norm2;       // two-teacher student, per organ
  double norm2_mean = 0.0;
  double avg2_mean = 0.0;
  std::map<int, double> norm3;
};

struct Study {
  std::vector<SeedRun> seeds;
  double stage_one_seconds = 0.0;  // liver and spleen teachers only
  bool ran_stage_two = false;
};

Study run_study(bool stage_two) {
  Study study;
  const std::vector<Organ> organs{Organ::liver, Organ::spleen, Organ::kidney};
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    SeedRun run;
    const Dataset target = generate_dataset(default_target_spec(), kTargetImages, seed * 100000 + 50000);
    const auto train = target.images(target.train);
    std::vector<SegNet> adapted;
    for (Organ organ : organs) {
      if (!stage_two && organ == Organ::kidney) break;
      const auto t0 = Clock::now();
      const int id = static_cast<int>(organ);
      const Dataset src =
          generate_dataset(default_source_spec(organ), kSourceImages, seed * 100000 + 10000 * static_cast<std::uint64_t>(id));
      PretrainConfig pc;
      pc.epochs = kPretrainEpochs;
      pc.seed = seed;
      const SegNet teacher = pretrain_teacher(src.images(src.train), src.truths(src.train), organ, pc).net;
      run.zero_shot[id] = test_metrics(teacher, target, {id}).mean_dsc;
      AdaptConfig ac;
      ac.epochs = kAdaptEpochs;
      ac.seed = seed;
      ac.lambda_th = default_lambda_th(id);
      adapted.push_back(run_model_adaptation(teacher, train, ac).net);
      run.adapted[id] = test_metrics(adapted.back(), target, {id}).mean_dsc;
      if (organ != Organ::kidney) study.stage_one_seconds += seconds_since(t0);
      std::printf("  seed %llu %-6s source-only %.3f adapted %.3f\n", static_cast<unsigned long long>(seed),
                  organ_name(organ).c_str(), run.zero_shot[id], run.adapted[id]);
      std::fflush(stdout);
    }
    if (stage_two) {
      auto ensemble = [&](std::vector<SegNet> teachers, EnsembleStrategy strategy) {
        const TeacherPool pool(std::move(teachers));
        EnsembleConfig ec;
        ec.epochs = kEnsembleEpochs;
        ec.seed = seed;
        ec.strategy = strategy;
        const SegNet student = run_model_ensemble(pool, train, ec).student;
        return test_metrics(student, target, pool.registry.foreground_classes());
      };
      const MetricReport norm2 = ensemble({adapted[0], adapted[1]}, EnsembleStrategy::certainty_norm);
      const MetricReport avg2 = ensemble({adapted[0], adapted[1]}, EnsembleStrategy::average);
      const MetricReport norm3 = ensemble(adapted, EnsembleStrategy::certainty_norm);
      for (const auto& c : norm2.classes) run.norm2[c.class_id] = c.dsc;
      for (const auto& c : norm3.classes) run.norm3[c.class_id] = c.dsc;
      run.norm2_mean = norm2.mean_dsc;
      run.avg2_mean = avg2.mean_dsc;
      std::printf("  seed %llu student certainty_norm liver %.3f spleen %.3f | average mean %.3f | three teachers "
                  "liver %.3f spleen %.3f kidney %.3f\n",
                  static_cast<unsigned long long>(seed), run.norm2[1], run.norm2[2], run.avg2_mean, run.norm3[1],
                  run.norm3[2], run.norm3[3]);
      std::fflush(stdout);
    }
    study.seeds.push_back(run);
  }
  study.ran_stage_two = stage_two;
  return study;
}

double mean_over_seeds(const Study& s, const std::function<double(const SeedRun&)>& f) {
  double total = 0.0;
  for (const auto& r : s.seeds) total += f(r);
  return total / static_cast<double>(s.seeds.size());
}

Outcome stage_one_trend(const Study& s) {
  bool ok = s.stage_one_seconds < kStageOneBudgetSeconds;
  std::string detail;
  for (int id : {1, 2}) {
    const double before = mean_over_seeds(s, [&](const SeedRun& r) { return r.zero_shot.at(id); });
    const double after = mean_over_seeds(s, [&](const SeedRun& r) { return r.adapted.at(id); });
    ok = ok && after - before >= kStageOneGain;
    detail += fmt("%s %.1f -> %.1f (%+.1f), ", class_name(id).c_str(), 100 * before, 100 * after, 100 * (after - before));
  }
  return {ok, "mean target DSC " + detail + fmt("stage I %.0fs", s.stage_one_seconds)};
}

Outcome stage_two_trend(const Study& s) {
  bool ok = true;
  std::string detail;
  for (int id : {1, 2}) {
    const double teacher = mean_over_seeds(s, [&](const SeedRun& r) { return r.adapted.at(id); });
    const double student = mean_over_seeds(s, [&](const SeedRun& r) { return r.norm2.at(id); });
    ok = ok && student >= teacher - kStudentSlack;
    detail += fmt("%s student %.1f vs teacher %.1f, ", class_name(id).c_str(), 100 * student, 100 * teacher);
  }
  std::size_t wins = 0;
  for (const auto& r : s.seeds) wins += r.norm2_mean >= r.avg2_mean;
  ok = ok && wins >= 2;
  return {ok, detail + fmt("certainty_norm >= average on %zu/3 seeds", wins)};
}

Outcome three_teacher_extension(const Study& s) {
  const double teacher = mean_over_seeds(s, [](const SeedRun& r) { return r.adapted.at(3); });
  const double student = mean_over_seeds(s, [](const SeedRun& r) { return r.norm3.at(3); });
  const double liver = mean_over_seeds(s, [](const SeedRun& r) { return r.norm3.at(1); });
  const double spleen = mean_over_seeds(s, [](const SeedRun& r) { return r.norm3.at(2); });
  return {student >= teacher - kStudentSlack,
          fmt("kidney student %.1f vs teacher %.1f (liver %.1f, spleen %.1f)", 100 * student, 100 * teacher,
              100 * liver, 100 * spleen)};
}

// ---------------------------------------------------------------------------
// 6. label refinement on injected noise

Outcome refinement_efficacy() {
  const Sample sample = generate_sample(default_target_spec(), 777);
  const std::size_t h = sample.truth.height, w = sample.truth.width, n = h * w;
  const int organ = static_cast<int>(Organ::liver);
  std::vector<int> truth(n);
  for (std::size_t i = 0; i < n; ++i) truth[i] = sample.truth.data[i] == organ ? 1 : 0;
  // Band of pixels within two steps of the organ boundary.
  std::vector<std::uint8_t> band(n, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (int dy = -2; dy <= 2 && !band[y * w + x]; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          const auto yy = static_cast<std::ptrdiff_t>(y) + dy, xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          if (truth[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)] != truth[y * w + x]) {
            band[y * w + x] = 1;
            break;
          }
        }
      }
    }
  }
  // Decision features: noisy class embeddings. Probabilities: confident and correct
  // off the band, lowered to [0.25, 0.75] on the correct class within it.
  Rng rng(4242);
  const std::size_t d = 8;
  std::vector<std::vector<double>> centre(2, std::vector<double>(d));
  for (auto& c : centre) {
    for (auto& v : c) v = rng.normal();
  }
  Tensor features({d, h, w});
  Tensor probs({2, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) features[k * n + i] = centre[truth[i]][k] + 0.3 * rng.normal();
    const double correct = band[i] ? rng.uniform(0.25, 0.75) : rng.uniform(0.97, 0.995);
    probs[truth[i] * n + i] = correct;
    probs[(1 - truth[i]) * n + i] = 1.0 - correct;
  }
  const double lambda_th = default_lambda_th(organ);
  const auto protos = compute_prototypes(std::vector<Tensor>{probs}, std::vector<Tensor>{features});
  const RefinedLabels refined = refine_pseudo_labels(probs, features, protos, lambda_th);
  const LabelMap raw = argmax_channels(probs);
  std::size_t raw_all = 0, ref_all = 0, raw_unc = 0, ref_unc = 0, unc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool r = raw.data[i] == truth[i], f = refined.labels.data[i] == truth[i];
    raw_all += r;
    ref_all += f;
    if (!refined.kept_mask[i]) {
      ++unc;
      raw_unc += r;
      ref_unc += f;
    }
  }
  const double ra = static_cast<double>(raw_all) / n, fa = static_cast<double>(ref_all) / n;
  const double ru = unc ? static_cast<double>(raw_unc) / unc : 0.0, fu = unc ? static_cast<double>(ref_unc) / unc : 0.0;
  return {unc > 0 && fa >= ra && fu > ru, fmt("accuracy overall raw %.4f refined %.4f; above threshold (%zu px) raw "
                                                "%.4f refined %.4f",
                                                ra, fa, unc, ru, fu)};
}

// ---------------------------------------------------------------------------
// 7. metrics oracle

Outcome metrics_oracle() {
  const auto suite = oracle::five_mask_suite();
  const double diagonal = std::hypot(8.0, 8.0);
  std::size_t dsc_mismatch = 0, pairs = 0;
  double worst_asd = 0.0;
  for (const auto& p : suite) {
    for (const auto& t : suite) {
      ++pairs;
      dsc_mismatch += dice_score(p, t) != oracle::dice(oracle::to_set(p), oracle::to_set(t));
      worst_asd = std::max(worst_asd, std::abs(average_surface_distance(p, t) -
                                               oracle::asd(oracle::to_set(p), oracle::to_set(t), diagonal)));
    }
  }
  return {dsc_mismatch == 0 && worst_asd <= kAsdTolerance,
          fmt("%zu ordered pairs, %zu DSC mismatches, worst ASD deviation %.1e", pairs, dsc_mismatch, worst_asd)};
}

// ---------------------------------------------------------------------------
// 8. determinism of the command-line pipeline

int shell(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Outcome pipeline_determinism(const fs::path& cli, const fs::path& work) {
  if (cli.empty() || !fs::exists(cli)) return {false, "mmadapt executable not found: " + cli.string()};
  std::vector<fs::path> runs{work / "run_a", work / "run_b"};
  const std::string exe = "\"" + cli.string() + "\"";
  for (const auto& r : runs) {
    fs::remove_all(r);
    fs::create_directories(r);
    const std::string q = "\"" + r.string() + "/";
    const std::vector<std::string> steps{
        "synth-gen --domain source_liver --n 12 --seed 11 --out " + q + "src_liver\"",
        "synth-gen --domain source_spleen --n 12 --seed 12 --out " + q + "src_spleen\"",
        "synth-gen --domain target --n 12 --seed 13 --out " + q + "target\"",
        "pretrain --data " + q + "src_liver\" --epochs 3 --seed 5 --out " + q + "t_liver\"",
        "pretrain --data " + q + "src_spleen\" --epochs 3 --seed 5 --out " + q + "t_spleen\"",
        "adapt --teacher " + q + "t_liver/model.ckpt\" --data " + q + "target\" --epochs 2 --seed 5 --out " + q +
            "a_liver\"",
        "adapt --teacher " + q + "t_spleen/model.ckpt\" --data " + q + "target\" --epochs 2 --seed 5 --out " + q +
            "a_spleen\"",
        "ensemble --teacher " + q + "a_liver/model.ckpt\" --teacher " + q + "a_spleen/model.ckpt\" --data " + q +
            "target\" --epochs 2 --seed 5 --out " + q + "student\"",
        "eval --model " + q + "student/model.ckpt\" --data " + q + "target\" --out " + q + "eval\"",
    };
    for (const auto& s : steps) {
      if (shell(exe + " " + s) != 0) return {false, "command failed: mmadapt " + s};
    }
  }
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(runs[0])) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".ckpt" && !name.starts_with("metrics") && name != "trace.csv") continue;
    const fs::path twin = runs[1] / fs::relative(entry.path(), runs[0]);
    ++compared;
    differing += !fs::exists(twin) || read_file(entry.path()) != read_file(twin);
  }
  return {compared >= 10 && differing == 0,
          fmt("%zu checkpoints, traces and metric reports compared, %zu differ", compared, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::set<int> only;
  std::string cli_path;
  std::string work = (fs::temp_directory_path() / "mmadapt_acceptance").string();
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--cli", cli_path, "Path to the mmadapt executable");
  app.add_option("--workdir", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };

  std::map<int, std::pair<std::string, Outcome>> results;
  auto run = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    const auto t0 = Clock::now();
    Outcome o = f();
    o.detail += fmt(" [%.0fs]", seconds_since(t0));
    std::printf("[%s] criterion %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    results[id] = {name, o};
  };

  run(1, "gradient suite", gradient_suite);
  run(2, "selection oracle", selection_oracle);
  run(3, "normalization property", normalization_property);
  run(6, "label refinement efficacy", refinement_efficacy);
  run(7, "metrics oracle", metrics_oracle);
  run(8, "pipeline determinism", [&] { return pipeline_determinism(cli_path, work); });

  if (wanted(4) || wanted(5) || wanted(9)) {
    const bool stage_two = wanted(5) || wanted(9);
    Study study;
    const auto t0 = Clock::now();
    study = run_study(stage_two);
    const double total = seconds_since(t0);
    auto report = [&](int id, const std::string& name, const Outcome& o) {
      if (!wanted(id)) return;
      std::printf("[%s] criterion %d %s: %s [study %.0fs]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
                  o.detail.c_str(), total);
      results[id] = {name, o};
    };
    report(4, "stage I trend", stage_one_trend(study));
    if (stage_two) {
      report(5, "stage II trend", stage_two_trend(study));
      report(9, "three-teacher extension", three_teacher_extension(study));
    }
  }

  std::size_t failed = 0;
  std::printf("\nsummary\n");
  for (const auto& [id, r] : results) {
    std::printf("  criterion %d %-26s %s\n", id, r.first.c_str(), r.second.pass ? "PASS" : "FAIL");
    failed += !r.second.pass;
  }
  return failed == 0 ? 0 : 1;
}
