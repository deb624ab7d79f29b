#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mmadapt/ensemble.hpp"
#include "mmadapt/errors.hpp"
#include "mmadapt/ops.hpp"
#include "mmadapt/optim.hpp"
#include "mmadapt/rng.hpp"
#include "selection_harness.hpp"

using namespace mmadapt;

namespace {

using oracle::registry_of;
using oracle::teacher_row;

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("class registry") {
  CHECK_NOTHROW(registry_of({{1}, {2}}).validate());
  CHECK_THROWS_AS(registry_of({{1}, {1}}).validate(), ConfigError);
  CHECK_THROWS_AS(ClassRegistry{}.validate(), ConfigError);
  ClassRegistry bad;
  bad.bindings = {{1, 0}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const auto r = registry_of({{3}, {1, 2}});
  CHECK(r.foreground_classes() == std::vector<int>{1, 2, 3});
  CHECK(r.knows(1, 2));
  CHECK_FALSE(r.knows(0, 2));
  CHECK_FALSE(r.knows(0, 0));
}

TEST_CASE("group normalization") {
  SUBCASE("hand example") {
    const std::vector<double> raw{0.2, 0.4, 0.6};
    const auto n = normalize_by_group(raw, std::vector<int>{1, 1, 1});
    CHECK(n.normalized[0] == doctest::Approx(-1.224744871391589).epsilon(1e-12));
    CHECK(n.normalized[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(n.normalized[2] == doctest::Approx(1.224744871391589).epsilon(1e-12));
    REQUIRE(n.stats.size() == 1);
    CHECK(n.stats[0].std_dev == doctest::Approx(0.1632993161855452).epsilon(1e-12));
    CHECK(n.stats[0].count == 3);
  }
  SUBCASE("degenerate groups are neutral") {
    const auto n = normalize_by_group(std::vector<double>{0.7, 0.7, 0.7, 0.3}, std::vector<int>{0, 0, 0, 1});
    for (double v : n.normalized) CHECK(v == 0.0);
  }
  SUBCASE("groups are normalized independently") {
    Rng rng(4);
    std::vector<double> raw(200);
    std::vector<int> g(200);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      g[i] = static_cast<int>(rng.below(3));
      raw[i] = rng.uniform() + g[i];
    }
    const auto n = normalize_by_group(raw, g);
    for (int k = 0; k < 3; ++k) {
      std::vector<double> members;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (g[i] == k) members.push_back(n.normalized[i]);
      }
      const double mu = mean_of(members);
      double var = 0.0;
      for (double v : members) var += (v - mu) * (v - mu);
      CHECK(std::abs(mu) < 1e-9);
      CHECK(std::sqrt(var / members.size()) == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  SUBCASE("uniform teacher") {
    const auto reg = registry_of({{1}});
    const std::vector<Tensor> probs{Tensor({2, 4, 4}, 0.5)};
    const CertaintyMap m = certainty_map(reg, probs);
    for (double v : m.raw[0]) CHECK(v == doctest::Approx(std::log(2.0)));
    for (double v : m.normalized[0]) CHECK(v == 0.0);
  }
}

TEST_CASE("preselection examples") {
  const auto reg = registry_of({{1}, {2}});  // teacher 0: liver, teacher 1: spleen
  CHECK(preselect_teachers(reg, std::vector<int>{1, 0}) == 0b01);
  CHECK(preselect_teachers(reg, std::vector<int>{0, 2}) == 0b10);
  CHECK(preselect_teachers(reg, std::vector<int>{1, 2}) == 0b11);
  CHECK(preselect_teachers(reg, std::vector<int>{0, 0}) == 0b11);
  CHECK_THROWS_AS(preselect_teachers(reg, std::vector<int>{0}), ShapeError);
}

TEST_CASE("preselection and selection agree with the set oracle on every configuration") {
  const std::vector<std::vector<std::vector<int>>> registries{
      {{1}, {2}}, {{1}, {2}, {3}}, {{1, 2}, {3}}, {{1, 2}, {3}, {4}}, {{2}, {1}, {3, 4, 5}}};
  for (const auto& classes : registries) {
    for (auto strategy : {EnsembleStrategy::certainty_norm, EnsembleStrategy::certainty_raw, EnsembleStrategy::average}) {
      const auto r = oracle::run_selection_harness(classes, strategy, 6, 17);
      CHECK(r.pixels > 0);
      CHECK(r.preselect_mismatches == 0);
      CHECK(r.select_mismatches == 0);
      CHECK(r.invariant_violations == 0);
    }
  }
}

TEST_CASE("selection by score") {
  const std::vector<std::uint64_t> eligible{0b01, 0b11, 0b11, 0b10};
  const std::vector<std::vector<double>> scores{{0.9, -0.5, 0.1, -9.0}, {-1.0, 0.3, 0.1, 5.0}};
  CHECK(select_teachers(eligible, scores) == std::vector<std::uint8_t>{0, 0, 0, 1});
  CHECK_THROWS_AS(select_teachers(std::vector<std::uint64_t>{0}, scores), std::logic_error);
}

TEST_CASE("a constant shift of one group changes raw selection only") {
  // Two teachers, both eligible everywhere. Teacher 1 is shifted within its only group.
  const std::vector<double> raw0{0.10, 0.30, 0.50, 0.70};
  const std::vector<double> raw1{0.20, 0.25, 0.45, 0.80};
  const std::vector<int> groups{1, 1, 1, 1};
  const std::vector<std::uint64_t> eligible(4, 0b11);
  std::vector<double> shifted = raw1;
  for (auto& v : shifted) v += 0.3;

  const auto n0 = normalize_by_group(raw0, groups).normalized;
  const auto before = select_teachers(eligible, {n0, normalize_by_group(raw1, groups).normalized});
  const auto after = select_teachers(eligible, {n0, normalize_by_group(shifted, groups).normalized});
  CHECK(before == after);
  CHECK(select_teachers(eligible, {raw0, raw1}) != select_teachers(eligible, {raw0, shifted}));
}

TEST_CASE("label aggregation") {
  const auto reg = registry_of({{1}, {2}});
  // pixel 0: liver vs background; 1: background vs spleen; 2: confident conflict;
  // 3: both background; 4: equally unsure conflict.
  const std::vector<std::vector<std::size_t>> pred{{1, 0}, {0, 1}, {1, 1}, {0, 0}, {1, 1}};
  const std::vector<std::vector<double>> conf{{0.95, 0.8}, {0.7, 0.95}, {0.99, 0.6}, {0.8, 0.9}, {0.6, 0.6}};
  const auto probs = teacher_row(reg, pred, conf);

  SUBCASE("selected teacher passthrough") {
    const SelectionMap sel = build_selection_map(reg, probs, EnsembleStrategy::certainty_raw);
    CHECK(sel.preselected == std::vector<std::uint64_t>{0b01, 0b10, 0b11, 0b11, 0b11});
    CHECK(sel.selected == std::vector<std::uint8_t>{0, 1, 0, 1, 0});
    const LabelMap y = aggregate_labels(reg, probs, sel);
    CHECK(y.data == std::vector<std::uint8_t>{1, 2, 1, 0, 1});
  }
  SUBCASE("average ensemble embeds and averages") {
    const SelectionMap sel = build_selection_map(reg, probs, EnsembleStrategy::average);
    const LabelMap y = aggregate_labels(reg, probs, sel);
    // pixel 4: background (0.4 + 0.4) / 2 beats liver 0.3 and spleen 0.3.
    CHECK(y.data == std::vector<std::uint8_t>{1, 2, 1, 0, 0});
    for (std::size_t x = 0; x < 5; ++x) CHECK(sel.masks[0][x] + sel.masks[1][x] == 1.0);
    CHECK(sel.selected[1] == 1);
    CHECK(sel.selected[2] == 0);
    CHECK(sel.selected[3] == 1);
  }
  SUBCASE("both strategies emit known classes only") {
    Rng rng(3);
    const auto reg3 = registry_of({{1}, {3}, {2}});
    std::vector<std::vector<std::size_t>> p;
    std::vector<std::vector<double>> c;
    for (int x = 0; x < 64; ++x) {
      p.push_back({rng.below(2), rng.below(2), rng.below(2)});
      c.push_back({0.5 + 0.5 * rng.uniform(), 0.5 + 0.5 * rng.uniform(), 0.5 + 0.5 * rng.uniform()});
    }
    const auto pr = teacher_row(reg3, p, c);
    for (auto s : {EnsembleStrategy::certainty_norm, EnsembleStrategy::average}) {
      const LabelMap y = aggregate_labels(reg3, pr, build_selection_map(reg3, pr, s));
      for (auto v : y.data) CHECK(v <= 3);
    }
  }
  CHECK(strategy_from_name("average") == EnsembleStrategy::average);
  CHECK_THROWS_AS(strategy_from_name("vote"), ConfigError);
}

TEST_CASE("label aggregation loss") {
  LabelMap y(1, 1);
  y.data = {1};
  const Var perfect = Var::constant(Tensor({3, 1, 1}, std::vector<double>{0, 1, 0}));
  const Var uniform = Var::constant(Tensor({3, 1, 1}, 1.0 / 3.0));
  const Var confident = Var::constant(Tensor({3, 1, 1}, std::vector<double>{0.1, 0.8, 0.1}));
  const std::vector<LabelMap> t{y};
  CHECK(label_agg_loss(std::vector<Var>{perfect}, t).value().item() == doctest::Approx(0.0));
  CHECK(label_agg_loss(std::vector<Var>{uniform}, t).value().item() == doctest::Approx(std::log(3.0)));
  CHECK(label_agg_loss(std::vector<Var>{confident}, t).value().item() == doctest::Approx(0.2231435513).epsilon(1e-9));
}

TEST_CASE("projection and masked distance") {
  Rng rng(8);
  Tensor f({4, 3, 3});
  for (auto& v : f.values()) v = rng.normal();

  CHECK(vec(project_features(Var::constant(f), Var::constant(Tensor({6, 4, 3, 3}, 0.0))).value()) ==
        std::vector<double>(54, 0.0));

  Tensor id({6, 4, 3, 3}, 0.0);
  for (std::size_t o = 0; o < 4; ++o) id[((o * 4 + o) * 3 + 1) * 3 + 1] = 1.0;
  const Tensor p = project_features(Var::constant(f), Var::constant(id)).value();
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(p[i] == f[i]);
  for (std::size_t i = f.size(); i < p.size(); ++i) CHECK(p[i] == 0.0);

  const Var a = Var::constant(Tensor({3, 1, 1}, std::vector<double>{1, -1, 0}));
  const Var b = Var::constant(Tensor({3, 1, 1}, 0.0));
  CHECK(masked_sq_distance(a, b, std::vector<double>{1.0}).value().item() == 2.0);
  CHECK(masked_sq_distance(a, b, std::vector<double>{0.0}).value().item() == 0.0);
  CHECK_THROWS_AS(masked_sq_distance(a, b, std::vector<double>{1.0, 0.0}), ShapeError);

  // The mask weights a mean over its support.
  const Var c = Var::constant(Tensor({1, 1, 2}, std::vector<double>{1, 3}));
  const Var z = Var::constant(Tensor({1, 1, 2}, 0.0));
  CHECK(masked_sq_distance(c, z, std::vector<double>{1.0, 1.0}).value().item() == 5.0);
  CHECK(masked_sq_distance(c, z, std::vector<double>{0.0, 1.0}).value().item() == 9.0);
}

namespace {

struct FeatureFixture {
  SegNet student;
  std::vector<TeacherTaps> teacher_taps;
  FeatureProjector projector;
  SelectionMap selection;
  Tensor image;

  explicit FeatureFixture(std::uint64_t seed) {
    const auto reg = registry_of({{1}, {2}});
    student = init_student(reg, {}, seed);
    image = Tensor({1, 16, 16});
    Rng rng(seed);
    for (auto& v : image.values()) v = rng.uniform();
    std::vector<Tensor> probs;
    std::vector<FeatureProjector::TapChannels> channels;
    for (std::size_t i = 0; i < 2; ++i) {
      const SegNet t = init_network({}, seed + 10 + i, {0, static_cast<int>(i) + 1});
      const ForwardResult r = forward(t, image);
      teacher_taps.push_back({r.taps.low.value(), r.taps.high.value()});
      probs.push_back(r.probs.value());
      channels.push_back({r.taps.low.value().dim(0), r.taps.high.value().dim(0)});
    }
    selection = build_selection_map(reg, probs, EnsembleStrategy::certainty_norm);
    const ForwardResult s = forward(student, image);
    projector = FeatureProjector({s.taps.low.value().dim(0), s.taps.high.value().dim(0)}, channels, 4, seed);
  }
};

}  // namespace

TEST_CASE("feature aggregation loss") {
  SUBCASE("identical features and projections give zero") {
    FeatureFixture fx(1);
    const ForwardResult s = forward(fx.student, fx.image);
    const std::vector<TeacherTaps> same{{s.taps.low.value(), s.taps.high.value()},
                                        {s.taps.low.value(), s.taps.high.value()}};
    auto& params = fx.projector.parameters();
    for (std::size_t i = 2; i < params.size(); ++i) params[i].var.mutable_value() = params[i % 2].var.value();
    CHECK(feature_agg_loss(s.taps, same, fx.projector, fx.selection).value().item() == 0.0);
  }
  SUBCASE("an empty mask silences its teacher") {
    FeatureFixture fx(2);
    const ForwardResult s = forward(fx.student, fx.image);
    SelectionMap only0 = fx.selection;
    std::fill(only0.masks[0].begin(), only0.masks[0].end(), 1.0);
    std::fill(only0.masks[1].begin(), only0.masks[1].end(), 0.0);
    std::vector<TeacherTaps> changed = fx.teacher_taps;
    for (auto& v : changed[1].low.values()) v += 5.0;
    CHECK(feature_agg_loss(s.taps, fx.teacher_taps, fx.projector, only0).value() ==
          feature_agg_loss(s.taps, changed, fx.projector, only0).value());
  }
  SUBCASE("gradient check over student and projections") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      FeatureFixture fx(seed + 3);
      auto params = fx.student.trainable();
      for (Parameter* p : fx.projector.trainable()) params.push_back(p);
      auto loss = [&] {
        return feature_agg_loss(forward(fx.student, fx.image).taps, fx.teacher_taps, fx.projector, fx.selection);
      };
      CHECK(finite_diff_check(loss, params, {.samples_per_param = 4, .seed = seed}) < 1e-3);
    }
  }
  SUBCASE("teacher mismatch is rejected") {
    FeatureFixture fx(4);
    const ForwardResult s = forward(fx.student, fx.image);
    const std::vector<TeacherTaps> one{fx.teacher_taps[0]};
    CHECK_THROWS_AS(feature_agg_loss(s.taps, one, fx.projector, fx.selection), ShapeError);
  }
}

TEST_CASE("run_model_ensemble") {
  std::vector<SegNet> teachers{init_network({}, 1, {0, 1}), init_network({}, 2, {0, 2})};
  const TeacherPool pool(teachers);
  std::vector<Tensor> images;
  for (std::uint64_t s = 0; s < 3; ++s) {
    Tensor t({1, 16, 16});
    Rng rng(s);
    for (auto& v : t.values()) v = rng.uniform();
    images.push_back(t);
  }
  EnsembleConfig cfg;
  cfg.seed = 5;

  SUBCASE("zero epochs return the initial student") {
    cfg.epochs = 0;
    const EnsembleResult r = run_model_ensemble(pool, images, cfg);
    const SegNet init = init_student(pool.registry, {}, derive_seed(cfg.seed, "student-init"));
    for (std::size_t i = 0; i < init.parameters().size(); ++i) {
      CHECK(r.student.parameters()[i].var.value() == init.parameters()[i].var.value());
    }
    CHECK(r.student.class_binding() == std::vector<int>{0, 1, 2});
    CHECK(r.selections.size() == 3);
    CHECK(r.trace.empty());
  }
  SUBCASE("deterministic") {
    cfg.epochs = 2;
    const EnsembleResult a = run_model_ensemble(pool, images, cfg);
    const EnsembleResult b = run_model_ensemble(pool, images, cfg);
    for (std::size_t i = 0; i < a.student.parameters().size(); ++i) {
      CHECK(a.student.parameters()[i].var.value() == b.student.parameters()[i].var.value());
    }
    CHECK(a.trace_csv() == b.trace_csv());
    CHECK(a.trace.size() == 2);
    CHECK(a.trace_csv().starts_with("epoch,L_la,L_fa,L_me\n"));
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(TeacherPool(std::vector<SegNet>{}), ConfigError);
    CHECK_THROWS_AS(TeacherPool(std::vector<SegNet>{teachers[0], teachers[0]}), ConfigError);
    CHECK_THROWS_AS(run_model_ensemble(pool, std::vector<Tensor>{}, cfg), DataError);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(run_model_ensemble(pool, images, cfg), ConfigError);
  }
}
