#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmadapt/autograd.hpp"
#include "mmadapt/segnet.hpp"
#include "mmadapt/tensor.hpp"

namespace mmadapt {

// Which global classes each teacher can segment. bindings[i][ch] is the global class of
// teacher i's output channel ch; channel 0 is background.
struct ClassRegistry {
  std::vector<std::vector<int>> bindings;

  std::size_t size() const { return bindings.size(); }
  bool knows(std::size_t teacher, int class_id) const;
  // Sorted union of the teachers' foreground classes.
  std::vector<int> foreground_classes() const;
  // Throws ConfigError unless there are 1..64 teachers with pairwise disjoint
  // foreground classes and background on channel 0.
  void validate() const;
};

struct TeacherPool {
  std::vector<SegNet> teachers;
  ClassRegistry registry;

  TeacherPool() = default;
  explicit TeacherPool(std::vector<SegNet> nets);
};

constexpr double kCertaintySigmaFloor = 1e-6;

struct GroupStats {
  int class_id = 0;  // the teacher's hard prediction shared by the group
  double mean = 0.0;
  double std_dev = 0.0;  // population
  std::size_t count = 0;
};

struct NormalizedGroups {
  std::vector<double> normalized;
  std::vector<GroupStats> stats;  // sorted by class id
};

// (raw - mean) / std within each group of equal `groups` value. Groups with fewer
// than two members or std below the floor normalize to exactly 0.
NormalizedGroups normalize_by_group(std::span<const double> raw, std::span<const int> groups);

struct CertaintyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::vector<double>> raw;         // per teacher, per pixel entropy in nats
  std::vector<std::vector<double>> normalized;  // per teacher, per pixel
  std::vector<std::vector<GroupStats>> class_stats;
};

// Per-image entropy statistics of each teacher, grouped by its own hard prediction.
CertaintyMap certainty_map(const ClassRegistry& registry, std::span<const Tensor> teacher_probs);

// Teacher predictions at every pixel mapped to global class ids.
std::vector<LabelMap> teacher_hard_predictions(const ClassRegistry& registry, std::span<const Tensor> teacher_probs);

// Bit i set when teacher i is eligible at a pixel whose per-teacher global predictions
// are `predictions`. All-background pixels keep every teacher; otherwise teachers that
// cannot see a class claimed without opposition are removed.
std::uint64_t preselect_teachers(const ClassRegistry& registry, std::span<const int> predictions);

enum class EnsembleStrategy { certainty_norm, certainty_raw, average };

std::string strategy_name(EnsembleStrategy s);
EnsembleStrategy strategy_from_name(const std::string& name);

struct SelectionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  EnsembleStrategy strategy = EnsembleStrategy::certainty_norm;
  std::vector<std::uint8_t> selected;      // t_se per pixel
  std::vector<std::uint64_t> preselected;  // eligible teacher bits per pixel
  // masks[i][x]: weight of teacher i at pixel x. One-hot on t_se for the certainty
  // strategies, uniform 1/n for average; sums to 1 at every pixel.
  std::vector<std::vector<double>> masks;
};

// Per pixel, the eligible teacher with the lowest score; ties go to the lower index.
std::vector<std::uint8_t> select_teachers(std::span<const std::uint64_t> eligible,
                                          const std::vector<std::vector<double>>& scores);

SelectionMap build_selection_map(const ClassRegistry& registry, std::span<const Tensor> teacher_probs,
                                 EnsembleStrategy strategy);

// Multi-organ pseudo-labels: the selected teacher's prediction, or for the average
// strategy the argmax of the mean of the teachers' outputs embedded in the global
// class space.
LabelMap aggregate_labels(const ClassRegistry& registry, std::span<const Tensor> teacher_probs,
                          const SelectionMap& selection);

Var label_agg_loss(std::span<const Var> student_probs, std::span<const LabelMap> pseudo_labels);

Var project_features(const Var& features, const Var& kernel);

// sum over pixels of mask(x) * ||a(x) - b(x)||^2 divided by sum of mask; 0 when the mask
// is empty. a and b are [C, H, W] with H*W == mask.size().
Var masked_sq_distance(const Var& a, const Var& b, std::span<const double> mask);

// Learnable 3x3 projection kernels without bias: one per student tap and one per
// teacher per tap.
class FeatureProjector {
 public:
  FeatureProjector() = default;
  // Input channel counts per endpoint as {low, high}.
  using TapChannels = std::array<std::size_t, 2>;
  FeatureProjector(TapChannels student, std::span<const TapChannels> teachers, std::size_t channels,
                   std::uint64_t seed);
  FeatureProjector(const FeatureProjector& other);
  FeatureProjector& operator=(const FeatureProjector& other);
  FeatureProjector(FeatureProjector&&) noexcept = default;
  FeatureProjector& operator=(FeatureProjector&&) noexcept = default;

  enum Tap : std::size_t { low = 0, high = 1 };

  const Var& student(Tap tap) const { return params_[tap].var; }
  const Var& teacher(std::size_t i, Tap tap) const { return params_[2 + 2 * i + tap].var; }
  std::size_t teachers() const { return params_.empty() ? 0 : params_.size() / 2 - 1; }
  std::vector<Parameter*> trainable();
  std::vector<Parameter>& parameters() { return params_; }

 private:
  std::vector<Parameter> params_;
};

struct TeacherTaps {
  Tensor low;
  Tensor high;
};

// Masked distillation over both taps, summed over teachers.
Var feature_agg_loss(const FeatureTaps& student_taps, std::span<const TeacherTaps> teacher_taps,
                     const FeatureProjector& projector, const SelectionMap& selection);

struct EnsembleConfig {
  double lambda_fa = 0.001;
  std::size_t epochs = 200;
  std::size_t batch_size = 2;
  double lr = 2e-3;
  EnsembleStrategy strategy = EnsembleStrategy::certainty_norm;
  std::size_t proj_channels = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EnsembleTraceRow {
  std::size_t epoch = 0;
  double la = 0.0;
  double fa = 0.0;
  double total = 0.0;
};

struct EnsembleResult {
  SegNet student;
  std::vector<EnsembleTraceRow> trace;
  std::vector<SelectionMap> selections;  // one per target image
  std::vector<LabelMap> pseudo_labels;   // global class ids

  std::string trace_csv() const;
};

// Student with background plus every teacher class, bound in ascending class order.
SegNet init_student(const ClassRegistry& registry, const SegNetConfig& base, std::uint64_t seed);

EnsembleResult run_model_ensemble(const TeacherPool& pool, std::span<const Tensor> target_images,
                                  const EnsembleConfig& config, const SegNetConfig& student_config = {},
                                  const std::function<void(std::size_t, const SegNet&)>& on_epoch = {});

}  // namespace mmadapt
