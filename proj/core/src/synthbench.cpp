#include "mmadapt/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>

#include "mmadapt/binary_io.hpp"
#include "mmadapt/errors.hpp"
#include "mmadapt/rng.hpp"

namespace mmadapt {

namespace {

using json = nlohmann::ordered_json;

constexpr int kMaxPlacementAttempts = 100;
constexpr double kQuantum = 1.0 / 65536.0;
constexpr double kMinOrganFraction = 0.01;
constexpr double kMaxOrganFraction = 0.40;

// Ellipse with a low-order radial perturbation, in pixel coordinates.
struct Blob {
  double cy = 0, cx = 0, ry = 1, rx = 1, angle = 0;
  double a2 = 0, p2 = 0, a3 = 0, p3 = 0;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    const double rho = std::hypot(u, v);
    const double phi = std::atan2(v, u);
    return rho <= 1.0 + a2 * std::sin(2.0 * phi + p2) + a3 * std::sin(3.0 * phi + p3);
  }
};

struct Anatomy {
  Blob body;
  std::vector<std::pair<Organ, Blob>> organs;
};

Anatomy sample_anatomy(const std::vector<Organ>& organs, Rng& rng) {
  const double two_pi = 2.0 * std::numbers::pi;
  Anatomy a;
  a.body = {48.0 + rng.uniform(-1.5, 1.5), 48.0 + rng.uniform(-1.5, 1.5), 38.0 + rng.uniform(-2, 2),
            44.0 + rng.uniform(-2, 2), 0.0, 0.03, rng.uniform(0, two_pi), 0.0, 0.0};
  for (Organ o : organs) {
    switch (o) {
      case Organ::liver:
        a.organs.push_back({o, Blob{40.0 + rng.uniform(-4, 4), 31.0 + rng.uniform(-4, 4), 17.0 + rng.uniform(-2.5, 2.5),
                                    20.0 + rng.uniform(-3, 3), rng.uniform(-0.4, 0.4), rng.uniform(0.0, 0.12),
                                    rng.uniform(0, two_pi), rng.uniform(0.0, 0.08), rng.uniform(0, two_pi)}});
        break;
      case Organ::spleen:
        a.organs.push_back({o, Blob{38.0 + rng.uniform(-4, 4), 70.0 + rng.uniform(-3, 3), 9.5 + rng.uniform(-1.5, 1.5),
                                    6.5 + rng.uniform(-1, 1), rng.uniform(-0.5, 0.5), rng.uniform(0.0, 0.08),
                                    rng.uniform(0, two_pi), 0.0, 0.0}});
        break;
      case Organ::kidney:
        for (double base_x : {36.0, 62.0}) {
          const double r = 5.5 + rng.uniform(-0.8, 0.8);
          a.organs.push_back({o, Blob{66.0 + rng.uniform(-3, 3), base_x + rng.uniform(-3, 3), r, r * 0.85, 0.0,
                                      0.0, 0.0, 0.0, 0.0}});
        }
        break;
    }
  }
  return a;
}

bool rasterize(const Anatomy& a, LabelMap& truth, std::vector<std::uint8_t>& in_body) {
  const std::size_t n = kSampleSize;
  truth = LabelMap(n, n, 0);
  in_body.assign(n * n, 0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
      in_body[y * n + x] = a.body.contains(py, px) ? 1 : 0;
      for (const auto& [organ, blob] : a.organs) {
        if (!blob.contains(py, px)) continue;
        // Organs must not touch each other (or the body wall).
        if (truth.at(y, x) != 0 || !in_body[y * n + x]) return false;
        truth.at(y, x) = static_cast<std::uint8_t>(organ);
      }
    }
  }
  // One-pixel gap between distinct organs.
  for (std::size_t y = 1; y + 1 < n; ++y) {
    for (std::size_t x = 1; x + 1 < n; ++x) {
      const auto v = truth.at(y, x);
      if (v == 0) continue;
      for (auto [dy, dx] : {std::pair{0, 1}, std::pair{1, 0}, std::pair{1, 1}, std::pair{1, -1}}) {
        const auto w = truth.at(y + dy, x + dx);
        if (w != 0 && w != v) return false;
      }
    }
  }
  return true;
}

std::string role_name(DomainRole r) { return r == DomainRole::source ? "source" : "target"; }

DomainRole role_from_name(const std::string& s) {
  if (s == "source") return DomainRole::source;
  if (s == "target") return DomainRole::target;
  throw ConfigError("unknown domain role '" + s + "'");
}

json organs_to_json(const std::vector<Organ>& organs) {
  json a = json::array();
  for (Organ o : organs) a.push_back(organ_name(o));
  return a;
}

std::vector<Organ> organs_from_json(const json& j) {
  std::vector<Organ> out;
  for (const auto& v : j) out.push_back(organ_from_name(v.get<std::string>()));
  return out;
}

json spec_to_json(const DomainSpec& s) {
  return json{{"name", s.name},
              {"role", role_name(s.role)},
              {"air", s.air},
              {"body", s.body},
              {"liver", s.liver},
              {"spleen", s.spleen},
              {"kidney", s.kidney},
              {"contrast", s.contrast},
              {"noise_sigma", s.noise_sigma},
              {"bias_amplitude", s.bias_amplitude},
              {"organs", organs_to_json(s.organs)},
              {"labeled_organs", organs_to_json(s.labeled_organs)}};
}

DomainSpec spec_from_json(const json& j) {
  DomainSpec s;
  s.name = j.at("name").get<std::string>();
  s.role = role_from_name(j.at("role").get<std::string>());
  s.air = j.at("air").get<double>();
  s.body = j.at("body").get<double>();
  s.liver = j.at("liver").get<double>();
  s.spleen = j.at("spleen").get<double>();
  s.kidney = j.at("kidney").get<double>();
  s.contrast = j.at("contrast").get<double>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.bias_amplitude = j.at("bias_amplitude").get<double>();
  s.organs = organs_from_json(j.at("organs"));
  s.labeled_organs = organs_from_json(j.at("labeled_organs"));
  return s;
}

void validate_spec(const DomainSpec& s) {
  for (double v : {s.air, s.body, s.liver, s.spleen, s.kidney}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("domain '" + s.name + "': intensities must lie in [0, 1]");
  }
  if (s.noise_sigma < 0.0 || s.bias_amplitude < 0.0 || s.bias_amplitude >= 1.0 || s.contrast == 0.0) {
    throw ConfigError("domain '" + s.name + "': invalid noise, bias or contrast");
  }
  if (s.organs.empty()) throw ConfigError("domain '" + s.name + "': no organs rendered");
  for (Organ o : s.labeled_organs) {
    if (std::find(s.organs.begin(), s.organs.end(), o) == s.organs.end()) {
      throw ConfigError("domain '" + s.name + "': labeled organ " + organ_name(o) + " is not rendered");
    }
  }
}

std::string sample_file(const char* prefix, std::size_t i, const char* ext) {
  std::ostringstream os;
  os << prefix << '_';
  os.width(4);
  os.fill('0');
  os << i << ext;
  return os.str();
}

}  // namespace

std::string organ_name(Organ organ) {
  switch (organ) {
    case Organ::liver: return "liver";
    case Organ::spleen: return "spleen";
    case Organ::kidney: return "kidney";
  }
  return "unknown";
}

Organ organ_from_name(const std::string& name) {
  if (name == "liver") return Organ::liver;
  if (name == "spleen") return Organ::spleen;
  if (name == "kidney") return Organ::kidney;
  throw ConfigError("unknown organ '" + name + "'");
}

double DomainSpec::intensity(Organ organ) const {
  double mean = 0.0;
  switch (organ) {
    case Organ::liver: mean = liver; break;
    case Organ::spleen: mean = spleen; break;
    case Organ::kidney: mean = kidney; break;
  }
  return body + contrast * (mean - body);
}

DomainSpec default_source_spec(Organ organ) {
  DomainSpec s;
  s.role = DomainRole::source;
  s.organs = {Organ::liver, Organ::spleen, Organ::kidney};
  s.labeled_organs = {organ};
  s.noise_sigma = 0.03;
  s.bias_amplitude = 0.0;
  switch (organ) {
    case Organ::liver:
      s.name = "source_liver";
      s.body = 0.40, s.liver = 0.62, s.spleen = 0.60, s.kidney = 0.64;
      break;
    case Organ::spleen:
      s.name = "source_spleen";
      s.body = 0.38, s.liver = 0.60, s.spleen = 0.63, s.kidney = 0.62;
      break;
    case Organ::kidney:
      s.name = "source_kidney";
      s.body = 0.42, s.liver = 0.61, s.spleen = 0.59, s.kidney = 0.65;
      break;
  }
  return s;
}

DomainSpec default_target_spec() {
  DomainSpec s;
  s.name = "target";
  s.role = DomainRole::target;
  s.organs = {Organ::liver, Organ::spleen, Organ::kidney};
  s.labeled_organs = {};
  s.air = 0.05;
  s.body = 0.45;
  s.liver = 0.60;
  s.spleen = 0.60;
  s.kidney = 0.70;
  s.contrast = 0.6;
  s.noise_sigma = 0.08;
  s.bias_amplitude = 0.05;
  return s;
}

DomainSpec domain_spec_by_name(const std::string& name) {
  if (name == "target") return default_target_spec();
  for (Organ o : {Organ::liver, Organ::spleen, Organ::kidney}) {
    if (name == "source_" + organ_name(o)) return default_source_spec(o);
  }
  throw ConfigError("unknown domain '" + name + "' (source_liver, source_spleen, source_kidney, target)");
}

std::string domain_spec_to_json(const DomainSpec& spec) { return spec_to_json(spec).dump(); }

DomainSpec domain_spec_from_json(const std::string& text) {
  DomainSpec s;
  try {
    s = spec_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("domain spec: ") + e.what());
  }
  validate_spec(s);
  return s;
}

int appearance_differences(const DomainSpec& a, const DomainSpec& b) {
  int n = 0;
  for (auto [x, y] : {std::pair{a.air, b.air}, std::pair{a.body, b.body}, std::pair{a.liver, b.liver},
                      std::pair{a.spleen, b.spleen}, std::pair{a.kidney, b.kidney}, std::pair{a.contrast, b.contrast},
                      std::pair{a.noise_sigma, b.noise_sigma}, std::pair{a.bias_amplitude, b.bias_amplitude}}) {
    n += x != y;
  }
  return n;
}

Sample generate_sample(const DomainSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  const std::size_t n = kSampleSize;
  Sample s;
  s.domain = spec.name;
  s.seed = seed;

  std::vector<std::uint8_t> in_body;
  bool placed = false;
  for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
    Rng anatomy_rng(derive_seed(derive_seed(seed, "anatomy"), static_cast<std::uint64_t>(attempt)));
    const Anatomy a = sample_anatomy(spec.organs, anatomy_rng);
    if (!rasterize(a, s.truth, in_body)) continue;
    placed = true;
    for (Organ o : spec.organs) {
      const auto count = static_cast<double>(std::count(s.truth.data.begin(), s.truth.data.end(), static_cast<int>(o)));
      const double frac = count / static_cast<double>(n * n);
      if (frac < kMinOrganFraction || frac > kMaxOrganFraction) placed = false;
    }
  }
  if (!placed) {
    throw DataError("generate_sample: could not place organs without overlap for seed " + std::to_string(seed) +
                    " in domain '" + spec.name + "'");
  }

  Rng rng(derive_seed(seed, "appearance:" + spec.name));
  double organ_level[4] = {0, 0, 0, 0};
  for (Organ o : spec.organs) organ_level[static_cast<int>(o)] = spec.intensity(o) + 0.015 * rng.normal();
  const double two_pi = 2.0 * std::numbers::pi;
  const double fy = rng.uniform(0.6, 1.4), fx = rng.uniform(0.6, 1.4);
  const double py = rng.uniform(0, two_pi), px = rng.uniform(0, two_pi);

  s.image = Tensor({1, n, n});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const std::size_t i = y * n + x;
      double v = spec.air;
      if (in_body[i]) v = s.truth.data[i] ? organ_level[s.truth.data[i]] : spec.body;
      const double bias = 1.0 + spec.bias_amplitude * std::sin(two_pi * fy * static_cast<double>(y) / n + py) *
                                    std::cos(two_pi * fx * static_cast<double>(x) / n * 0.5 + px);
      v *= bias;
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
      v = std::clamp(v, 0.0, 1.0);
      s.image[i] = std::round(v / kQuantum) * kQuantum;
    }
  }
  return s;
}

std::vector<Tensor> Dataset::images(const std::vector<std::size_t>& idx) const {
  std::vector<Tensor> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(samples.at(i).image);
  return out;
}

std::vector<LabelMap> Dataset::truths(const std::vector<std::size_t>& idx) const {
  std::vector<LabelMap> out;
  for (auto i : idx) {
    if (!has_labels(i)) throw DataError("dataset '" + spec.name + "': sample " + std::to_string(i) + " has no labels");
    out.push_back(samples.at(i).truth);
  }
  return out;
}

bool Dataset::has_labels(std::size_t i) const { return !samples.at(i).truth.data.empty(); }

Dataset generate_dataset(const DomainSpec& spec, std::size_t n, std::uint64_t base_seed) {
  if (n < 10) throw ConfigError("generate_dataset: need at least 10 samples, got " + std::to_string(n));
  Dataset ds;
  ds.spec = spec;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ds.samples.push_back(generate_sample(spec, base_seed + i));
  std::size_t n_train = 0, n_val = 0;
  if (spec.role == DomainRole::target) {
    n_train = n * 7 / 10;
  } else {
    n_train = n * 6 / 10;
    n_val = n / 10;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      ds.train.push_back(i);
    } else if (i < n_train + n_val) {
      ds.val.push_back(i);
    } else {
      ds.test.push_back(i);
    }
  }
  return ds;
}

std::uint64_t dataset_digest(const Dataset& ds) {
  std::uint64_t h = fnv1a("mmadapt-dataset");
  for (const auto& s : ds.samples) {
    std::vector<std::uint8_t> bytes;
    append_f64_le(bytes, s.image.values());
    bytes.insert(bytes.end(), s.truth.data.begin(), s.truth.data.end());
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), h);
  }
  return h;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "mmadapt-dataset";
  manifest["version"] = 1;
  manifest["height"] = kSampleSize;
  manifest["width"] = kSampleSize;
  manifest["image_dtype"] = "f64le";
  manifest["label_dtype"] = "u8";
  manifest["spec"] = spec_to_json(ds.spec);
  manifest["digest"] = dataset_digest(ds);
  json samples = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const std::string split = std::find(ds.train.begin(), ds.train.end(), i) != ds.train.end() ? "train"
                              : std::find(ds.val.begin(), ds.val.end(), i) != ds.val.end()   ? "val"
                                                                                              : "test";
    const std::string img = sample_file("image", i, ".f64"), lbl = sample_file("label", i, ".u8");
    std::vector<std::uint8_t> bytes;
    append_f64_le(bytes, s.image.values());
    write_file(dir / img, bytes);
    write_file(dir / lbl, s.truth.data);
    samples.push_back({{"index", i}, {"seed", s.seed}, {"split", split}, {"image", img}, {"labels", lbl}});
  }
  manifest["samples"] = std::move(samples);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw DataError("no dataset manifest at " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw DataError("malformed dataset manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "mmadapt-dataset" || manifest.value("version", 0) != 1) {
    throw DataError("unsupported dataset format in " + manifest_path.string());
  }
  const auto h = manifest.at("height").get<std::size_t>(), w = manifest.at("width").get<std::size_t>();
  Dataset ds;
  ds.spec = spec_from_json(manifest.at("spec"));
  for (const auto& entry : manifest.at("samples")) {
    Sample s;
    s.domain = ds.spec.name;
    s.seed = entry.at("seed").get<std::uint64_t>();
    auto values = read_f64_le(read_file(dir / entry.at("image").get<std::string>()));
    if (values.size() != h * w) throw DataError("image size mismatch in " + dir.string());
    s.image = Tensor({1, h, w}, std::move(values));
    const auto lbl_path = dir / entry.at("labels").get<std::string>();
    if (std::filesystem::exists(lbl_path)) {
      s.truth = LabelMap(h, w);
      s.truth.data = read_file(lbl_path);
      if (s.truth.data.size() != h * w) throw DataError("label size mismatch in " + dir.string());
    } else {
      s.truth = LabelMap();
    }
    const std::size_t idx = ds.samples.size();
    const std::string split = entry.at("split").get<std::string>();
    if (split == "train") {
      ds.train.push_back(idx);
    } else if (split == "val") {
      ds.val.push_back(idx);
    } else {
      ds.test.push_back(idx);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace mmadapt
