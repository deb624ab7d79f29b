#include <filesystem>
#include <set>

#include "doctest.h"
#include "mmadapt/errors.hpp"
#include "mmadapt/synthbench.hpp"

using namespace mmadapt;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mmadapt_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("samples are deterministic per spec and seed") {
  const DomainSpec spec = default_target_spec();
  const Sample a = generate_sample(spec, 42);
  const Sample b = generate_sample(spec, 42);
  CHECK(a.image == b.image);
  CHECK(a.truth == b.truth);
  CHECK(a.image.shape() == Shape{1, 96, 96});
  CHECK_FALSE(generate_sample(spec, 43).image == a.image);
  for (double v : a.image.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("noiseless rendering is piecewise constant per tissue") {
  DomainSpec spec = default_source_spec(Organ::liver);
  spec.noise_sigma = 0.0;
  spec.bias_amplitude = 0.0;
  const Sample s = generate_sample(spec, 7);
  std::set<double> values[4];
  for (std::size_t i = 0; i < s.truth.size(); ++i) values[s.truth.data[i]].insert(s.image[i]);
  // Background holds air and body; every organ is a single level.
  CHECK(values[0].size() == 2);
  for (int organ = 1; organ <= 3; ++organ) CHECK(values[organ].size() == 1);
}

TEST_CASE("organ fractions stay within bounds") {
  const DomainSpec spec = default_target_spec();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Sample s = generate_sample(spec, seed);
    for (int organ = 1; organ <= 3; ++organ) {
      const double frac = static_cast<double>(std::count(s.truth.data.begin(), s.truth.data.end(), organ)) /
                          static_cast<double>(s.truth.size());
      CHECK(frac >= 0.01);
      CHECK(frac <= 0.40);
    }
  }
}

TEST_CASE("dataset splits") {
  const Dataset target = generate_dataset(default_target_spec(), 10, 100);
  CHECK(target.train.size() == 7);
  CHECK(target.val.empty());
  CHECK(target.test.size() == 3);

  const Dataset source = generate_dataset(default_source_spec(Organ::spleen), 10, 100);
  CHECK(source.train.size() == 6);
  CHECK(source.val.size() == 1);
  CHECK(source.test.size() == 3);

  CHECK(source.samples.front().seed == 100);
  CHECK(source.samples.back().seed == 109);
  CHECK_THROWS_AS(generate_dataset(default_target_spec(), 9, 0), ConfigError);
}

TEST_CASE("disjoint seed ranges give disjoint datasets") {
  const Dataset a = generate_dataset(default_target_spec(), 10, 0);
  const Dataset b = generate_dataset(default_target_spec(), 10, 10);
  for (const auto& x : a.samples) {
    for (const auto& y : b.samples) CHECK_FALSE(x.image == y.image);
  }
  CHECK(dataset_digest(a) != dataset_digest(b));
  CHECK(dataset_digest(a) == dataset_digest(generate_dataset(default_target_spec(), 10, 0)));
}

TEST_CASE("target differs from every source") {
  for (Organ o : {Organ::liver, Organ::spleen, Organ::kidney}) {
    const DomainSpec s = default_source_spec(o);
    CHECK(appearance_differences(s, default_target_spec()) >= 2);
    CHECK(s.labeled_organs == std::vector<Organ>{o});
  }
  CHECK(default_target_spec().labeled_organs.empty());
}

TEST_CASE("invalid specs are rejected") {
  DomainSpec spec = default_target_spec();
  spec.body = 1.5;
  CHECK_THROWS_AS(generate_sample(spec, 1), ConfigError);
  spec = default_target_spec();
  spec.labeled_organs = {Organ::kidney};
  spec.organs = {Organ::liver};
  CHECK_THROWS_AS(generate_sample(spec, 1), ConfigError);
  CHECK_THROWS_AS(organ_from_name("pancreas"), ConfigError);
}

TEST_CASE("save and load round trip") {
  const Dataset ds = generate_dataset(default_source_spec(Organ::kidney), 12, 5);
  const auto dir = temp_dir("synth_roundtrip");
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  CHECK(back.spec == ds.spec);
  CHECK(back.train == ds.train);
  CHECK(back.val == ds.val);
  CHECK(back.test == ds.test);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].image == ds.samples[i].image);
    CHECK(back.samples[i].truth == ds.samples[i].truth);
    CHECK(back.samples[i].seed == ds.samples[i].seed);
  }
  CHECK(dataset_digest(back) == dataset_digest(ds));

  std::filesystem::remove(dir / "label_0003.u8");
  const Dataset partial = load_dataset(dir);
  CHECK_FALSE(partial.has_labels(3));
  CHECK(partial.has_labels(2));
  CHECK_THROWS_AS(partial.truths({2, 3}), DataError);
  CHECK(partial.samples[3].image == ds.samples[3].image);
  CHECK_THROWS_AS(load_dataset(temp_dir("synth_missing")), DataError);
  std::filesystem::remove_all(dir);
}
