#include <cmath>

#include "doctest.h"
#include "mask_oracle.hpp"
#include "mmadapt/errors.hpp"
#include "mmadapt/metrics.hpp"
#include "mmadapt/rng.hpp"

using namespace mmadapt;

namespace {

BinaryMask square(std::size_t n, std::size_t y0, std::size_t x0, std::size_t side) {
  BinaryMask m(n, n);
  for (std::size_t y = y0; y < y0 + side; ++y) {
    for (std::size_t x = x0; x < x0 + side; ++x) m.set(y, x);
  }
  return m;
}

}  // namespace

TEST_CASE("dice") {
  BinaryMask p(4, 4), t(4, 4);
  p.set(0, 0), p.set(0, 1), p.set(1, 0), p.set(1, 1);
  t.set(0, 0), t.set(0, 1);
  CHECK(dice_score(p, t) == doctest::Approx(2.0 / 3.0));
  CHECK(dice_score(p, p) == 1.0);
  CHECK(dice_score(BinaryMask(4, 4), BinaryMask(4, 4)) == 1.0);
  CHECK(dice_score(square(8, 0, 0, 2), square(8, 5, 5, 2)) == 0.0);
  CHECK_THROWS_AS(dice_score(BinaryMask(4, 4), BinaryMask(4, 5)), ShapeError);
}

TEST_CASE("boundary extraction") {
  BinaryMask single(5, 5);
  single.set(2, 3);
  CHECK(extract_boundary(single) == std::vector<Pixel>{{2, 3}});
  CHECK(extract_boundary(square(7, 2, 2, 3)).size() == 8);
  CHECK(extract_boundary(BinaryMask(5, 5)).empty());
  // The image edge counts as background.
  CHECK(extract_boundary(BinaryMask::from_labels(LabelMap(3, 3, 1), 1)).size() == 8);
}

TEST_CASE("average surface distance") {
  BinaryMask a(1, 8), b(1, 8);
  a.set(0, 1);
  b.set(0, 4);
  CHECK(average_surface_distance(a, b) == 3.0);
  CHECK(average_surface_distance(a, a) == 0.0);
  CHECK(average_surface_distance(BinaryMask(6, 8), BinaryMask(6, 8)) == 0.0);
  CHECK(average_surface_distance(a, BinaryMask(1, 8)) == doctest::Approx(std::hypot(1.0, 8.0)));
  CHECK(average_surface_distance(a, BinaryMask(1, 8), 99.0) == 99.0);

  // A one-pixel diagonal shift moves every edge by one pixel, apart from the two
  // crossings; larger squares get closer to 1.
  const double small = average_surface_distance(square(64, 10, 10, 12), square(64, 11, 11, 12));
  const double shifted = average_surface_distance(square(64, 10, 10, 40), square(64, 11, 11, 40));
  CHECK(shifted > 0.98);
  CHECK(shifted < 1.0);
  CHECK(small < shifted);
  // Along a row, the two edges parallel to the shift stay in place.
  const double along_row = average_surface_distance(square(64, 10, 10, 40), square(64, 10, 11, 40));
  CHECK(along_row == doctest::Approx(0.5).epsilon(0.02));
  // Translation of an interior pair leaves the distance unchanged.
  CHECK(average_surface_distance(square(64, 12, 12, 9), square(64, 15, 14, 9)) ==
        doctest::Approx(average_surface_distance(square(64, 22, 30, 9), square(64, 25, 32, 9))).epsilon(1e-12));
}

TEST_CASE("metrics agree with the pixel-set oracle") {
  const auto suite = oracle::five_mask_suite();
  const double diagonal = std::hypot(8.0, 8.0);
  for (const auto& p : suite) {
    for (const auto& t : suite) {
      CHECK(dice_score(p, t) == oracle::dice(oracle::to_set(p), oracle::to_set(t)));
      CHECK(std::abs(average_surface_distance(p, t) - oracle::asd(oracle::to_set(p), oracle::to_set(t), diagonal)) <
            1e-9);
    }
  }
}

TEST_CASE("symmetry on random masks") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    BinaryMask a(12, 12), b(12, 12);
    for (auto& v : a.bits) v = rng.uniform() < 0.3;
    for (auto& v : b.bits) v = rng.uniform() < 0.3;
    CHECK(dice_score(a, b) == dice_score(b, a));
    CHECK(average_surface_distance(a, b) == doctest::Approx(average_surface_distance(b, a)).epsilon(1e-12));
    CHECK(dice_score(a, b) >= 0.0);
    CHECK(dice_score(a, b) <= 1.0);
  }
}

TEST_CASE("metric reports") {
  LabelMap truth(8, 8, 0);
  for (std::size_t x = 0; x < 4; ++x) truth.at(2, x) = 1;
  truth.at(6, 6) = 2;
  const MetricReport same = evaluate_predictions({truth}, {truth}, {1, 2});
  CHECK(same.for_class(1).dsc == 1.0);
  CHECK(same.for_class(2).asd == 0.0);
  CHECK(same.mean_dsc == 1.0);
  CHECK(same.for_class(1).name == "liver");
  CHECK(same.to_csv() == "class_id,class_name,dsc,asd\n1,liver,1,0\n2,spleen,1,0\nmean,mean,1,0\n");
  CHECK(same.to_json().find("\"mean_dsc\": 1.0") != std::string::npos);

  LabelMap empty(8, 8, 0);
  const MetricReport miss = evaluate_predictions({empty, truth}, {truth, truth}, {1});
  CHECK(miss.for_class(1).dsc == 0.5);
  CHECK(miss.images == 2);
  CHECK_THROWS_AS(miss.for_class(3), std::out_of_range);
  CHECK_THROWS_AS(evaluate_predictions({}, {}, {1}), DataError);
}
