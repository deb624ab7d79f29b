#include "mmadapt/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mmadapt/errors.hpp"
#include "mmadapt/ops.hpp"
#include "mmadapt/optim.hpp"
#include "mmadapt/pretrain.hpp"
#include "mmadapt/rng.hpp"

namespace mmadapt {

namespace {

void require_outputs(const ClassRegistry& registry, std::span<const Tensor> probs) {
  if (probs.size() != registry.size() || probs.empty()) {
    throw ShapeError("ensemble: need one probability map per teacher");
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].rank() != 3 || probs[i].dim(0) != registry.bindings[i].size()) {
      throw ShapeError("ensemble: teacher " + std::to_string(i) + " output does not match its class binding");
    }
    if (probs[i].dim(1) != probs[0].dim(1) || probs[i].dim(2) != probs[0].dim(2)) {
      throw ShapeError("ensemble: teacher outputs differ in resolution");
    }
  }
}

int channel_of(const std::vector<int>& binding, int class_id) {
  for (std::size_t c = 0; c < binding.size(); ++c) {
    if (binding[c] == class_id) return static_cast<int>(c);
  }
  return -1;
}

}  // namespace

bool ClassRegistry::knows(std::size_t teacher, int class_id) const {
  const auto& b = bindings.at(teacher);
  return std::find(b.begin() + 1, b.end(), class_id) != b.end();
}

std::vector<int> ClassRegistry::foreground_classes() const {
  std::set<int> all;
  for (const auto& b : bindings) all.insert(b.begin() + 1, b.end());
  return {all.begin(), all.end()};
}

void ClassRegistry::validate() const {
  if (bindings.empty()) throw ConfigError("ensemble: empty teacher pool");
  if (bindings.size() > 64) throw ConfigError("ensemble: at most 64 teachers are supported");
  std::set<int> seen;
  for (std::size_t i = 0; i < bindings.size(); ++i) {
    const auto& b = bindings[i];
    if (b.size() < 2 || b[0] != 0) {
      throw ConfigError("ensemble: teacher " + std::to_string(i) + " needs background on channel 0 and a class");
    }
    for (std::size_t c = 1; c < b.size(); ++c) {
      if (b[c] <= 0 || !seen.insert(b[c]).second) {
        throw ConfigError("ensemble: class " + std::to_string(b[c]) + " claimed twice or invalid (teacher " +
                          std::to_string(i) + ")");
      }
    }
  }
}

TeacherPool::TeacherPool(std::vector<SegNet> nets) : teachers(std::move(nets)) {
  for (const auto& t : teachers) registry.bindings.push_back(t.class_binding());
  registry.validate();
}

NormalizedGroups normalize_by_group(std::span<const double> raw, std::span<const int> groups) {
  if (raw.size() != groups.size()) throw ShapeError("normalize_by_group: size mismatch");
  std::map<int, GroupStats> stats;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& s = stats[groups[i]];
    s.class_id = groups[i];
    s.mean += raw[i];
    ++s.count;
  }
  for (auto& [_, s] : stats) s.mean /= static_cast<double>(s.count);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& s = stats[groups[i]];
    s.std_dev += (raw[i] - s.mean) * (raw[i] - s.mean);
  }
  for (auto& [_, s] : stats) s.std_dev = std::sqrt(s.std_dev / static_cast<double>(s.count));

  NormalizedGroups out;
  out.normalized.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& s = stats[groups[i]];
    out.normalized[i] = s.count < 2 || s.std_dev < kCertaintySigmaFloor ? 0.0 : (raw[i] - s.mean) / s.std_dev;
  }
  for (const auto& [_, s] : stats) out.stats.push_back(s);
  return out;
}

std::vector<LabelMap> teacher_hard_predictions(const ClassRegistry& registry, std::span<const Tensor> teacher_probs) {
  require_outputs(registry, teacher_probs);
  std::vector<LabelMap> out;
  for (std::size_t i = 0; i < teacher_probs.size(); ++i) {
    LabelMap m = argmax_channels(teacher_probs[i]);
    for (auto& v : m.data) v = static_cast<std::uint8_t>(registry.bindings[i][v]);
    out.push_back(std::move(m));
  }
  return out;
}

CertaintyMap certainty_map(const ClassRegistry& registry, std::span<const Tensor> teacher_probs) {
  const auto hard = teacher_hard_predictions(registry, teacher_probs);
  CertaintyMap m;
  m.height = teacher_probs[0].dim(1);
  m.width = teacher_probs[0].dim(2);
  for (std::size_t i = 0; i < teacher_probs.size(); ++i) {
    m.raw.push_back(pixel_entropy(teacher_probs[i]));
    const std::vector<int> groups(hard[i].data.begin(), hard[i].data.end());
    auto n = normalize_by_group(m.raw.back(), groups);
    m.normalized.push_back(std::move(n.normalized));
    m.class_stats.push_back(std::move(n.stats));
  }
  return m;
}

std::uint64_t preselect_teachers(const ClassRegistry& registry, std::span<const int> predictions) {
  const std::size_t n = registry.size();
  if (predictions.size() != n) throw ShapeError("preselect_teachers: need one prediction per teacher");
  const std::uint64_t all = n == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1;
  std::uint64_t background = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (predictions[i] == 0) background |= std::uint64_t{1} << i;
  }
  if (background == all) return all;

  std::uint64_t removed = 0;
  for (int c : registry.foreground_classes()) {
    std::uint64_t ignorant = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!registry.knows(i, c)) ignorant |= std::uint64_t{1} << i;
    }
    // Every teacher blind to c says background, so c stands unopposed.
    if ((ignorant & ~background) == 0) removed |= ignorant;
  }
  const std::uint64_t eligible = all & ~removed;
  if (eligible == 0) throw std::logic_error("preselect_teachers: empty eligible set");
  return eligible;
}

std::string strategy_name(EnsembleStrategy s) {
  switch (s) {
    case EnsembleStrategy::certainty_norm: return "certainty_norm";
    case EnsembleStrategy::certainty_raw: return "certainty_raw";
    case EnsembleStrategy::average: return "average";
  }
  return "?";
}

EnsembleStrategy strategy_from_name(const std::string& name) {
  for (auto s : {EnsembleStrategy::certainty_norm, EnsembleStrategy::certainty_raw, EnsembleStrategy::average}) {
    if (strategy_name(s) == name) return s;
  }
  throw ConfigError("unknown ensemble strategy '" + name + "' (certainty_norm, certainty_raw, average)");
}

std::vector<std::uint8_t> select_teachers(std::span<const std::uint64_t> eligible,
                                          const std::vector<std::vector<double>>& scores) {
  const std::size_t n = scores.size();
  std::vector<std::uint8_t> out(eligible.size(), 0);
  for (std::size_t x = 0; x < eligible.size(); ++x) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(eligible[x] >> i & 1)) continue;
      if (best == n || scores[i][x] < scores[best][x]) best = i;
    }
    if (best == n) throw std::logic_error("select_teachers: no eligible teacher");
    out[x] = static_cast<std::uint8_t>(best);
  }
  return out;
}

SelectionMap build_selection_map(const ClassRegistry& registry, std::span<const Tensor> teacher_probs,
                                 EnsembleStrategy strategy) {
  registry.validate();
  const auto hard = teacher_hard_predictions(registry, teacher_probs);
  const std::size_t n = registry.size();
  SelectionMap sel;
  sel.height = teacher_probs[0].dim(1);
  sel.width = teacher_probs[0].dim(2);
  sel.strategy = strategy;
  const std::size_t pixels = sel.height * sel.width;
  sel.selected.assign(pixels, 0);
  sel.preselected.assign(pixels, 0);
  sel.masks.assign(n, std::vector<double>(pixels, 0.0));

  if (strategy == EnsembleStrategy::average) {
    // Nothing is selected; t_se records the eligible teacher behind the averaged
    // decision: the owner of the averaged class, else the most confident background.
    const LabelMap avg = aggregate_labels(registry, teacher_probs, sel);
    std::vector<int> preds(n);
    for (std::size_t x = 0; x < pixels; ++x) {
      for (std::size_t i = 0; i < n; ++i) preds[i] = hard[i].data[x];
      const std::uint64_t eligible = preselect_teachers(registry, preds);
      sel.preselected[x] = eligible;
      std::size_t best = n;
      double best_bg = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!((eligible >> i) & 1)) continue;
        if (avg.data[x] != 0 && registry.knows(i, avg.data[x])) {
          best = i;
          break;
        }
        if (teacher_probs[i][x] > best_bg) {
          best_bg = teacher_probs[i][x];
          best = i;
        }
      }
      sel.selected[x] = static_cast<std::uint8_t>(best);
      for (std::size_t i = 0; i < n; ++i) sel.masks[i][x] = 1.0 / static_cast<double>(n);
    }
    return sel;
  }

  const CertaintyMap cert = certainty_map(registry, teacher_probs);
  std::vector<int> preds(n);
  for (std::size_t x = 0; x < pixels; ++x) {
    for (std::size_t i = 0; i < n; ++i) preds[i] = hard[i].data[x];
    sel.preselected[x] = preselect_teachers(registry, preds);
  }
  sel.selected = select_teachers(sel.preselected,
                                 strategy == EnsembleStrategy::certainty_norm ? cert.normalized : cert.raw);
  for (std::size_t x = 0; x < pixels; ++x) sel.masks[sel.selected[x]][x] = 1.0;
  return sel;
}

LabelMap aggregate_labels(const ClassRegistry& registry, std::span<const Tensor> teacher_probs,
                          const SelectionMap& selection) {
  require_outputs(registry, teacher_probs);
  const std::size_t h = teacher_probs[0].dim(1), w = teacher_probs[0].dim(2);
  LabelMap out(h, w);
  if (selection.strategy != EnsembleStrategy::average) {
    if (selection.selected.size() != h * w) throw ShapeError("aggregate_labels: selection map size mismatch");
    const auto hard = teacher_hard_predictions(registry, teacher_probs);
    for (std::size_t x = 0; x < out.size(); ++x) out.data[x] = hard[selection.selected[x]].data[x];
    return out;
  }
  // Mean of the embedded distributions; each sums to 1, so the mean does too.
  const auto classes = registry.foreground_classes();
  const double inv = 1.0 / static_cast<double>(registry.size());
  std::vector<double> acc(classes.size() + 1);
  for (std::size_t x = 0; x < out.size(); ++x) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < registry.size(); ++i) {
      const auto& b = registry.bindings[i];
      for (std::size_t c = 0; c < b.size(); ++c) {
        const std::size_t slot =
            c == 0 ? 0 : static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), b[c]) - classes.begin()) + 1;
        acc[slot] += inv * teacher_probs[i][c * h * w + x];
      }
    }
    const auto best = static_cast<std::size_t>(std::max_element(acc.begin(), acc.end()) - acc.begin());
    out.data[x] = static_cast<std::uint8_t>(best == 0 ? 0 : classes[best - 1]);
  }
  return out;
}

Var label_agg_loss(std::span<const Var> student_probs, std::span<const LabelMap> pseudo_labels) {
  return cross_entropy(student_probs, pseudo_labels);
}

Var project_features(const Var& features, const Var& kernel) { return conv2d(features, kernel, 1); }

Var masked_sq_distance(const Var& a, const Var& b, std::span<const double> mask) {
  if (a.shape() != b.shape() || a.value().rank() != 3) throw ShapeError("masked_sq_distance: shape mismatch");
  const std::size_t channels = a.value().dim(0), plane = a.value().dim(1) * a.value().dim(2);
  if (plane != mask.size()) {
    throw ShapeError("masked_sq_distance: features are " + std::to_string(a.value().dim(1)) + "x" +
                     std::to_string(a.value().dim(2)) + ", mask has " + std::to_string(mask.size()) + " pixels");
  }
  double weight = 0.0;
  for (double m : mask) weight += m;
  if (weight == 0.0) return Var::constant(Tensor::scalar(0.0));
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t x = 0; x < plane; ++x) {
      if (mask[x] == 0.0) continue;
      const double d = a.value()[c * plane + x] - b.value()[c * plane + x];
      total += mask[x] * d * d;
    }
  }
  auto m = std::make_shared<std::vector<double>>(mask.begin(), mask.end());
  return make_op(Tensor::scalar(total / weight), {a, b}, [m, weight, channels, plane](Node& self) {
    const double g = self.grad[0] / weight;
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t x = 0; x < plane; ++x) {
        const double w = (*m)[x];
        if (w == 0.0) continue;
        const std::size_t i = c * plane + x;
        const double d = 2.0 * g * w * (na.value[i] - nb.value[i]);
        if (na.requires_grad) na.grad_buffer()[i] += d;
        if (nb.requires_grad) nb.grad_buffer()[i] -= d;
      }
    }
  });
}

namespace {

Tensor he_kernel(std::size_t out, std::size_t in, std::uint64_t seed) {
  Tensor t(Shape{out, in, 3, 3});
  Rng rng(seed);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(in * 9));
  for (auto& v : t.values()) v = std_dev * rng.normal();
  return t;
}

}  // namespace

FeatureProjector::FeatureProjector(TapChannels student, std::span<const TapChannels> teachers, std::size_t channels,
                                   std::uint64_t seed) {
  auto add = [&](std::string name, std::size_t in) {
    params_.push_back({name, Var::leaf(he_kernel(channels, in, derive_seed(seed, name)))});
  };
  add("proj.student.low", student[0]);
  add("proj.student.high", student[1]);
  for (std::size_t i = 0; i < teachers.size(); ++i) {
    add("proj.teacher" + std::to_string(i) + ".low", teachers[i][0]);
    add("proj.teacher" + std::to_string(i) + ".high", teachers[i][1]);
  }
}

FeatureProjector::FeatureProjector(const FeatureProjector& other) {
  for (const auto& p : other.params_) params_.push_back({p.name, Var::leaf(p.var.value())});
}

FeatureProjector& FeatureProjector::operator=(const FeatureProjector& other) {
  if (this != &other) *this = FeatureProjector(other);
  return *this;
}

std::vector<Parameter*> FeatureProjector::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

Var feature_agg_loss(const FeatureTaps& student_taps, std::span<const TeacherTaps> teacher_taps,
                     const FeatureProjector& projector, const SelectionMap& selection) {
  if (teacher_taps.size() != projector.teachers() || teacher_taps.size() != selection.masks.size()) {
    throw ShapeError("feature_agg_loss: teacher count differs between taps, projector and selection map");
  }
  const std::size_t h = selection.height, w = selection.width;
  auto up = [&](const Var& v) {
    if (v.value().dim(1) == h && v.value().dim(2) == w) return v;
    return bilinear_upsample(v, h, w);
  };
  using Tap = FeatureProjector::Tap;
  const Var s_low = up(project_features(student_taps.low, projector.student(Tap::low)));
  const Var s_high = up(project_features(student_taps.high, projector.student(Tap::high)));
  Var total;
  for (std::size_t i = 0; i < teacher_taps.size(); ++i) {
    const auto& mask = selection.masks[i];
    if (std::all_of(mask.begin(), mask.end(), [](double m) { return m == 0.0; })) continue;
    const Var t_low = up(project_features(Var::constant(teacher_taps[i].low), projector.teacher(i, Tap::low)));
    const Var t_high = up(project_features(Var::constant(teacher_taps[i].high), projector.teacher(i, Tap::high)));
    const Var term = add(masked_sq_distance(s_low, t_low, mask), masked_sq_distance(s_high, t_high, mask));
    total = total.defined() ? add(total, term) : term;
  }
  return total.defined() ? total : Var::constant(Tensor::scalar(0.0));
}

void EnsembleConfig::validate() const {
  if (!(lambda_fa >= 0.0)) throw ConfigError("ensemble: lambda_fa must be non-negative");
  if (batch_size == 0) throw ConfigError("ensemble: batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("ensemble: lr must be positive");
  if (proj_channels == 0) throw ConfigError("ensemble: proj_channels must be positive");
}

std::string EnsembleResult::trace_csv() const {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,L_la,L_fa,L_me\n";
  for (const auto& r : trace) os << r.epoch << ',' << r.la << ',' << r.fa << ',' << r.total << '\n';
  return os.str();
}

SegNet init_student(const ClassRegistry& registry, const SegNetConfig& base, std::uint64_t seed) {
  registry.validate();
  std::vector<int> binding{0};
  for (int c : registry.foreground_classes()) binding.push_back(c);
  SegNetConfig cfg = base;
  cfg.num_classes = binding.size();
  return init_network(cfg, seed, binding);
}

EnsembleResult run_model_ensemble(const TeacherPool& pool, std::span<const Tensor> target_images,
                                  const EnsembleConfig& config, const SegNetConfig& student_config,
                                  const std::function<void(std::size_t, const SegNet&)>& on_epoch) {
  config.validate();
  pool.registry.validate();
  if (pool.teachers.size() != pool.registry.size()) throw ConfigError("ensemble: registry does not match the pool");
  if (target_images.empty()) throw DataError("ensemble: empty target dataset");

  EnsembleResult result;
  result.student = init_student(pool.registry, student_config, derive_seed(config.seed, "student-init"));
  const auto& binding = result.student.class_binding();

  // Teachers are frozen, so their outputs and the pseudo-labels are computed once.
  std::vector<std::vector<TeacherTaps>> taps;
  std::vector<LabelMap> targets;
  {
    NoGradGuard g;
    for (const Tensor& img : target_images) {
      std::vector<Tensor> probs;
      std::vector<TeacherTaps> t;
      for (const auto& teacher : pool.teachers) {
        const ForwardResult r = forward(teacher, img);
        probs.push_back(r.probs.value());
        t.push_back({r.taps.low.value(), r.taps.high.value()});
      }
      result.selections.push_back(build_selection_map(pool.registry, probs, config.strategy));
      result.pseudo_labels.push_back(aggregate_labels(pool.registry, probs, result.selections.back()));
      LabelMap channels = result.pseudo_labels.back();
      for (auto& v : channels.data) v = static_cast<std::uint8_t>(channel_of(binding, v));
      targets.push_back(std::move(channels));
      taps.push_back(std::move(t));
    }
  }
  if (config.epochs == 0) return result;

  std::vector<FeatureProjector::TapChannels> teacher_channels;
  for (const auto& t : taps.front()) teacher_channels.push_back({t.low.dim(0), t.high.dim(0)});
  FeatureProjector::TapChannels student_channels;
  {
    NoGradGuard g;
    const ForwardResult r = forward(result.student, target_images.front());
    student_channels = {r.taps.low.value().dim(0), r.taps.high.value().dim(0)};
  }
  FeatureProjector projector(student_channels, teacher_channels, config.proj_channels,
                             derive_seed(config.seed, "projection-init"));
  auto params = result.student.trainable();
  for (Parameter* p : projector.trainable()) params.push_back(p);
  AdamState adam;
  adam.lr = config.lr;
  const std::uint64_t shuffle_root = derive_seed(config.seed, "ensemble-shuffle");

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(target_images.size(), derive_seed(shuffle_root, epoch));
    EnsembleTraceRow row{epoch, 0, 0, 0};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Var> probs;
      std::vector<LabelMap> batch_targets;
      Var fa;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t j = order[i];
        const ForwardResult r = forward(result.student, target_images[j]);
        probs.push_back(r.probs);
        batch_targets.push_back(targets[j]);
        const Var f = feature_agg_loss(r.taps, taps[j], projector, result.selections[j]);
        fa = fa.defined() ? add(fa, f) : f;
      }
      fa = scale(fa, 1.0 / static_cast<double>(end - start));
      const Var la = label_agg_loss(probs, batch_targets);
      const Var total = add(la, scale(fa, config.lambda_fa));
      if (!std::isfinite(total.value().item())) {
        throw NumericError("ensemble: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches) + " (L_la=" + std::to_string(la.value().item()) +
                           ", L_fa=" + std::to_string(fa.value().item()) + ")");
      }
      zero_grads(params);
      backward(total);
      adam_step(params, adam);
      row.la += la.value().item();
      row.fa += fa.value().item();
      row.total += total.value().item();
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    row.la *= inv;
    row.fa *= inv;
    row.total *= inv;
    result.trace.push_back(row);
    if (on_epoch) on_epoch(epoch, result.student);
  }
  return result;
}

}  // namespace mmadapt
