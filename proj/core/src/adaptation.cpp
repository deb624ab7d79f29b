#include "mmadapt/adaptation.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mmadapt/errors.hpp"
#include "mmadapt/ops.hpp"
#include "mmadapt/optim.hpp"
#include "mmadapt/pretrain.hpp"
#include "mmadapt/rng.hpp"

namespace mmadapt {

namespace {

constexpr double kLogClamp = 1e-12;
constexpr double kNormFloor = 1e-12;

double safe_log(double p) { return std::log(std::max(p, kLogClamp)); }

void check_finite(const AdaptLosses& l, std::size_t epoch, std::size_t batch) {
  for (const Var* v : {&l.lrm, &l.con, &l.im, &l.total}) {
    if (!std::isfinite(v->value().item())) {
      throw NumericError("adaptation: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch));
    }
  }
}

}  // namespace

void AdaptConfig::validate(std::size_t num_classes) const {
  if (!(lambda_th > 0.0) || lambda_th >= std::log(static_cast<double>(num_classes))) {
    throw ConfigError("adapt: lambda_th must lie in (0, ln C), got " + std::to_string(lambda_th));
  }
  if (aux_decoders == 0) throw ConfigError("adapt: need at least one auxiliary decoder");
  if (beta < 0.0 || lambda_con < 0.0 || lambda_im < 0.0) throw ConfigError("adapt: loss weights must be non-negative");
  if (batch_size == 0) throw ConfigError("adapt: batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("adapt: lr must be positive");
}

double default_lambda_th(int class_id) {
  switch (class_id) {
    case 2: return 0.4;
    case 3: return 0.2;
    default: return 0.1;
  }
}

std::size_t RefinedLabels::kept_count() const {
  std::size_t n = 0;
  for (auto k : kept_mask) n += k != 0;
  return n;
}

std::vector<Prototype> compute_prototypes(std::span<const Tensor> probs, std::span<const Tensor> features) {
  if (probs.empty() || probs.size() != features.size()) {
    throw ShapeError("compute_prototypes: need matching non-empty probability and feature lists");
  }
  const std::size_t channels = probs[0].dim(0), dims = features[0].dim(0);
  std::vector<double> mass(channels, 0.0);
  std::vector<std::vector<double>> acc(channels, std::vector<double>(dims, 0.0));
  for (std::size_t b = 0; b < probs.size(); ++b) {
    const Tensor& p = probs[b];
    const Tensor& f = features[b];
    require_rank3(p, "compute_prototypes");
    require_rank3(f, "compute_prototypes");
    if (p.dim(0) != channels || f.dim(0) != dims || p.dim(1) != f.dim(1) || p.dim(2) != f.dim(2)) {
      throw ShapeError("compute_prototypes: shape mismatch " + shape_string(p.shape()) + " vs " +
                       shape_string(f.shape()));
    }
    const std::size_t plane = p.dim(1) * p.dim(2);
    for (std::size_t c = 0; c < channels; ++c) {
      const double* pc = p.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) mass[c] += pc[i];
      for (std::size_t d = 0; d < dims; ++d) {
        const double* fd = f.data() + d * plane;
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += pc[i] * fd[i];
        acc[c][d] += s;
      }
    }
  }
  std::vector<Prototype> out;
  for (std::size_t c = 0; c < channels; ++c) {
    Prototype proto{static_cast<int>(c), Tensor({dims}, 0.0), mass[c] > kPrototypeMassEpsilon};
    if (proto.present) {
      for (std::size_t d = 0; d < dims; ++d) proto.vector[d] = acc[c][d] / mass[c];
    }
    out.push_back(std::move(proto));
  }
  return out;
}

std::vector<Prototype> compute_prototypes(const SegNet& model, std::span<const Tensor> images) {
  if (images.empty()) throw DataError("compute_prototypes: empty dataset");
  NoGradGuard guard;
  std::vector<Tensor> probs, feats;
  for (const Tensor& img : images) {
    const ForwardResult r = forward(model, img);
    probs.push_back(r.probs.value());
    feats.push_back(r.taps.decision.value());
  }
  return compute_prototypes(probs, feats);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na <= kNormFloor || nb <= kNormFloor) return 0.0;
  return dot / (na * nb);
}

double prototype_similarity(const Tensor& f, const Prototype& proto) {
  return cosine_similarity(f.values(), proto.vector.values());
}

RefinedLabels refine_pseudo_labels(const Tensor& probs, const Tensor& features, std::span<const Prototype> prototypes,
                                   double lambda_th) {
  require_rank3(probs, "refine_pseudo_labels");
  require_rank3(features, "refine_pseudo_labels");
  const std::size_t channels = probs.dim(0), dims = features.dim(0);
  const std::size_t h = probs.dim(1), w = probs.dim(2), plane = h * w;
  if (features.dim(1) != h || features.dim(2) != w) {
    throw ShapeError("refine_pseudo_labels: features " + shape_string(features.shape()) + " vs probabilities " +
                     shape_string(probs.shape()));
  }
  if (prototypes.size() != channels) throw ShapeError("refine_pseudo_labels: need one prototype per channel");
  for (const auto& p : prototypes) {
    if (p.present && p.vector.size() != dims) throw ShapeError("refine_pseudo_labels: prototype dimension mismatch");
  }

  RefinedLabels out;
  out.labels = argmax_channels(probs);
  out.kept_mask.assign(plane, 1);
  out.source.assign(plane, LabelSource::kept);
  bool any_present = false;
  for (const auto& p : prototypes) any_present = any_present || p.present;
  out.prototypes_missing = !any_present;
  if (!any_present) return out;

  const std::vector<double> entropy = pixel_entropy(probs);
  std::vector<double> f(dims);
  for (std::size_t i = 0; i < plane; ++i) {
    if (entropy[i] <= lambda_th) continue;
    out.kept_mask[i] = 0;
    out.source[i] = LabelSource::prototype;
    for (std::size_t d = 0; d < dims; ++d) f[d] = features[d * plane + i];
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : prototypes) {
      if (!p.present) continue;
      const double s = cosine_similarity(f, p.vector.values());
      if (s > best) {
        best = s;
        out.labels.data[i] = static_cast<std::uint8_t>(p.class_id);
      }
    }
  }
  return out;
}

Var lrm_loss(std::span<const Var> probs, std::span<const RefinedLabels> refined) {
  std::vector<LabelMap> labels;
  labels.reserve(refined.size());
  for (const auto& r : refined) labels.push_back(r.labels);
  return cross_entropy(probs, labels);
}

Var lrm_loss(const Var& probs, const RefinedLabels& refined) { return cross_entropy(probs, refined.labels); }

Var consistency_loss(const Var& main, std::span<const Var> aux) {
  if (aux.empty()) throw ConfigError("consistency_loss: need at least one auxiliary prediction");
  const Tensor& m = main.value();
  const std::size_t n = m.size();
  double total = 0.0;
  for (const Var& a : aux) {
    if (a.shape() != m.shape()) {
      throw ShapeError("consistency_loss: aux " + shape_string(a.shape()) + " vs main " + shape_string(m.shape()));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a.value()[i] - m[i];
      total += d * d;
    }
  }
  const double inv = 1.0 / (static_cast<double>(n) * static_cast<double>(aux.size()));
  auto target = std::make_shared<Tensor>(m);
  return make_op(Tensor::scalar(total * inv), std::vector<Var>(aux.begin(), aux.end()), [target, inv](Node& self) {
    const double g = 2.0 * inv * self.grad[0];
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor& grad = in->grad_buffer();
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g * (in->value[i] - (*target)[i]);
    }
  });
}

Var info_max_loss(std::span<const Var> probs, double beta) {
  if (probs.empty()) throw ShapeError("info_max_loss: empty batch");
  const std::size_t channels = probs[0].value().dim(0);
  std::vector<double> pbar(channels, 0.0);
  std::size_t pixels = 0;
  double ent = 0.0;
  for (const Var& v : probs) {
    const Tensor& p = v.value();
    require_rank3(p, "info_max_loss");
    if (p.dim(0) != channels) throw ShapeError("info_max_loss: channel count differs within the batch");
    const std::size_t plane = p.dim(1) * p.dim(2);
    pixels += plane;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double x = p[c * plane + i];
        pbar[c] += x;
        if (x > 0.0) ent -= x * std::log(x);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(pixels);
  double div = 0.0;
  for (auto& q : pbar) {
    q *= inv;
    if (q > 0.0) div += q * std::log(q);
  }
  auto coeff = std::make_shared<std::vector<double>>(channels);
  for (std::size_t c = 0; c < channels; ++c) (*coeff)[c] = beta * (safe_log(pbar[c]) + 1.0);
  return make_op(Tensor::scalar(ent * inv + beta * div), std::vector<Var>(probs.begin(), probs.end()),
                 [coeff, inv](Node& self) {
                   const double d = self.grad[0] * inv;
                   for (auto& in : self.inputs) {
                     if (!in->requires_grad) continue;
                     Tensor& g = in->grad_buffer();
                     const std::size_t plane = in->value.dim(1) * in->value.dim(2);
                     for (std::size_t c = 0; c < coeff->size(); ++c) {
                       for (std::size_t i = 0; i < plane; ++i) {
                         const std::size_t idx = c * plane + i;
                         g[idx] += d * ((*coeff)[c] - safe_log(in->value[idx]) - 1.0);
                       }
                     }
                   }
                 });
}

AdaptLosses adaptation_losses(std::span<const AuxForwardResult> batch, std::span<const RefinedLabels> refined,
                              const AdaptConfig& config, std::span<const Tensor> consistency_targets) {
  if (batch.empty() || batch.size() != refined.size()) {
    throw ShapeError("adaptation_losses: need matching non-empty forward and label lists");
  }
  if (!consistency_targets.empty() && consistency_targets.size() != batch.size()) {
    throw ShapeError("adaptation_losses: need one consistency target per image");
  }
  std::vector<Var> main;
  Var con;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& f = batch[b];
    main.push_back(f.main_probs);
    const Var target = consistency_targets.empty() ? f.main_probs : Var::constant(consistency_targets[b]);
    const Var c = consistency_loss(target, f.aux_probs);
    con = con.defined() ? add(con, c) : c;
  }
  con = scale(con, 1.0 / static_cast<double>(batch.size()));
  AdaptLosses out;
  out.lrm = lrm_loss(main, refined);
  out.con = con;
  out.im = info_max_loss(main, config.beta);
  out.total = add(add(out.lrm, scale(out.con, config.lambda_con)), scale(out.im, config.lambda_im));
  return out;
}

std::string AdaptResult::trace_csv() const {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,L_lrm,L_con,L_im,L_ma\n";
  for (const auto& r : trace) os << r.epoch << ',' << r.lrm << ',' << r.con << ',' << r.im << ',' << r.total << '\n';
  return os.str();
}

AdaptResult run_model_adaptation(const SegNet& teacher, std::span<const Tensor> target_images,
                                 const AdaptConfig& config,
                                 const std::function<void(std::size_t, const SegNet&)>& on_epoch) {
  config.validate(teacher.config().num_classes);
  if (target_images.empty()) throw DataError("adapt: empty target dataset");
  AdaptResult result{teacher, {}};
  if (config.epochs == 0) return result;
  if (teacher.config().aux_decoders != config.aux_decoders) {
    throw ConfigError("adapt: network has " + std::to_string(teacher.config().aux_decoders) +
                      " auxiliary decoder slots, config asks for " + std::to_string(config.aux_decoders));
  }

  SegNet& net = result.net;
  net.attach_aux_decoders();
  auto params = net.trainable(true);
  AdamState adam;
  adam.lr = config.lr;
  const std::uint64_t shuffle_root = derive_seed(config.seed, "adapt-shuffle");
  const std::uint64_t dropout_root = derive_seed(config.seed, "adapt-dropout");
  std::uint64_t step = 0;

  // Teacher outputs on the target set, fixed for the whole run.
  std::vector<Tensor> fixed_probs, fixed_feats;
  std::vector<Prototype> prototypes;
  auto snapshot = [&](const SegNet& model) {
    NoGradGuard g;
    fixed_probs.clear();
    fixed_feats.clear();
    for (const Tensor& img : target_images) {
      const ForwardResult r = forward(model, img);
      fixed_probs.push_back(r.probs.value());
      fixed_feats.push_back(r.taps.decision.value());
    }
    prototypes = compute_prototypes(fixed_probs, fixed_feats);
  };
  const bool from_source = config.pseudo_labels == PseudoLabelSource::source_model;
  if (from_source) snapshot(teacher);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (!from_source) snapshot(net);
    const auto order = shuffled_indices(target_images.size(), derive_seed(shuffle_root, epoch));
    AdaptTraceRow row{epoch, 0, 0, 0, 0};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<AuxForwardResult> fwd;
      std::vector<RefinedLabels> refined;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t j = order[i];
        fwd.push_back(forward_with_aux(net, target_images[j], derive_seed(dropout_root, step++)));
        if (from_source) {
          refined.push_back(refine_pseudo_labels(fixed_probs[j], fixed_feats[j], prototypes, config.lambda_th));
        } else {
          refined.push_back(refine_pseudo_labels(fwd.back().main_probs.value(), fwd.back().taps.decision.value(),
                                                 prototypes, config.lambda_th));
        }
      }
      const AdaptLosses losses = adaptation_losses(fwd, refined, config);
      check_finite(losses, epoch, batches);
      zero_grads(params);
      backward(losses.total);
      adam_step(params, adam);
      row.lrm += losses.lrm.value().item();
      row.con += losses.con.value().item();
      row.im += losses.im.value().item();
      row.total += losses.total.value().item();
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    row.lrm *= inv;
    row.con *= inv;
    row.im *= inv;
    row.total *= inv;
    result.trace.push_back(row);
    if (on_epoch) on_epoch(epoch, net);
  }
  net.drop_aux();
  return result;
}

}  // namespace mmadapt
