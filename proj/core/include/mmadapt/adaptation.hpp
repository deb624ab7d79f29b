#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmadapt/autograd.hpp"
#include "mmadapt/segnet.hpp"
#include "mmadapt/tensor.hpp"

namespace mmadapt {

// Probability-weighted centroid of decision features for one output channel.
struct Prototype {
  int class_id = 0;  // output channel index
  Tensor vector;     // [D]
  bool present = false;
};

// Where pseudo-labels, decision features and prototypes come from. source_model
// computes them once from the frozen teacher; current_model recomputes prototypes
// from the adapting network every epoch and labels with its live predictions.
enum class PseudoLabelSource { source_model, current_model };

struct AdaptConfig {
  double lambda_th = 0.1;  // entropy threshold in nats
  std::size_t aux_decoders = 4;
  double beta = 0.1;
  double lambda_con = 0.1;
  double lambda_im = 1.0;
  std::size_t epochs = 100;
  std::size_t batch_size = 4;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  PseudoLabelSource pseudo_labels = PseudoLabelSource::source_model;

  // Throws ConfigError. `num_classes` bounds lambda_th by ln C.
  void validate(std::size_t num_classes) const;
};

// Default entropy threshold for a global organ id: large organs are held to a
// stricter threshold than small ones.
double default_lambda_th(int class_id);

enum class LabelSource : std::uint8_t { kept = 0, prototype = 1 };

struct RefinedLabels {
  LabelMap labels;                     // output channel indices
  std::vector<std::uint8_t> kept_mask;  // 1 where entropy <= lambda_th
  std::vector<LabelSource> source;
  bool prototypes_missing = false;     // every prototype absent: raw predictions returned

  std::size_t kept_count() const;
};

inline constexpr double kPrototypeMassEpsilon = 1e-6;

// One prototype per channel from matching probability [C, H, W] and feature [D, H, W] maps.
std::vector<Prototype> compute_prototypes(std::span<const Tensor> probs, std::span<const Tensor> features);
// Runs `model` in inference mode over `images`.
std::vector<Prototype> compute_prototypes(const SegNet& model, std::span<const Tensor> images);

// Signed cosine similarity; 0 when either vector has norm <= 1e-12.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double prototype_similarity(const Tensor& f, const Prototype& proto);

// Keeps the argmax label where per-pixel entropy <= lambda_th, otherwise assigns the
// present prototype with the highest cosine similarity.
RefinedLabels refine_pseudo_labels(const Tensor& probs, const Tensor& features, std::span<const Prototype> prototypes,
                                   double lambda_th);

// Cross-entropy against the (detached) refined labels, pooled over the batch.
Var lrm_loss(std::span<const Var> probs, std::span<const RefinedLabels> refined);
Var lrm_loss(const Var& probs, const RefinedLabels& refined);

// (1/K) sum_k mean over pixels and channels of (aux_k - main)^2, with `main` detached.
Var consistency_loss(const Var& main, std::span<const Var> aux);

// Mean per-pixel entropy plus beta * sum_c pbar_c ln pbar_c, pbar over every pixel of the batch.
Var info_max_loss(std::span<const Var> probs, double beta);

struct AdaptLosses {
  Var lrm;
  Var con;
  Var im;
  Var total;
};

// L_lrm + lambda_con * L_con + lambda_im * L_im for one batch of forward passes.
// The consistency target is the detached main prediction unless `consistency_targets`
// pins it (one tensor per image).
AdaptLosses adaptation_losses(std::span<const AuxForwardResult> batch, std::span<const RefinedLabels> refined,
                              const AdaptConfig& config, std::span<const Tensor> consistency_targets = {});

struct AdaptTraceRow {
  std::size_t epoch = 0;
  double lrm = 0.0;
  double con = 0.0;
  double im = 0.0;
  double total = 0.0;
};

struct AdaptResult {
  SegNet net;
  std::vector<AdaptTraceRow> trace;

  // Header: epoch,L_lrm,L_con,L_im,L_ma
  std::string trace_csv() const;
};

// Adapts a copy of `teacher` to the unlabeled target images. Auxiliary decoders are
// attached for training and dropped from the result. Throws NumericError on a
// non-finite loss.
// `on_epoch`, when set, sees the main network after every epoch.
AdaptResult run_model_adaptation(const SegNet& teacher, std::span<const Tensor> target_images,
                                 const AdaptConfig& config,
                                 const std::function<void(std::size_t, const SegNet&)>& on_epoch = {});

}  // namespace mmadapt
