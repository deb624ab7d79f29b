#include "mmadapt/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mmadapt/errors.hpp"
#include "mmadapt/ops.hpp"
#include "mmadapt/rng.hpp"

namespace mmadapt {

namespace {

constexpr std::string_view kMainDecoder = "dec";

std::string aux_prefix(std::size_t k) { return "aux" + std::to_string(k); }

bool is_aux_name(std::string_view name) { return name.starts_with("aux"); }

void validate_config(const SegNetConfig& c) {
  if (c.num_classes < 2) throw ConfigError("segnet: num_classes must be >= 2");
  if (c.encoder_blocks != 4) throw ConfigError("segnet: encoder_blocks must be 4");
  if (c.in_channels == 0 || c.base_channels == 0) throw ConfigError("segnet: channel counts must be positive");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) throw ConfigError("segnet: dropout_rate must lie in [0, 1)");
}

// (name, shape) pairs of one decoder, in creation order.
std::vector<std::pair<std::string, Shape>> decoder_layout(const SegNet& net, std::string_view prefix) {
  const auto& c = net.config();
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t current = net.encoder_channels(c.encoder_blocks - 1);
  for (std::size_t level = c.encoder_blocks - 1; level >= 1; --level) {
    const std::size_t next = net.encoder_channels(level - 1);
    const std::string base = std::string(prefix) + ".up" + std::to_string(level);
    out.push_back({base + ".weight", Shape{next, current, 3, 3}});
    out.push_back({base + ".bias", Shape{next}});
    current = next;
  }
  const std::size_t d = net.decision_channels();
  out.push_back({std::string(prefix) + ".feat.weight", Shape{d, current, 3, 3}});
  out.push_back({std::string(prefix) + ".feat.bias", Shape{d}});
  out.push_back({std::string(prefix) + ".cls.weight", Shape{c.num_classes, d, 1, 1}});
  out.push_back({std::string(prefix) + ".cls.bias", Shape{c.num_classes}});
  return out;
}

std::vector<std::pair<std::string, Shape>> encoder_layout(const SegNet& net) {
  const auto& c = net.config();
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t in = c.in_channels;
  for (std::size_t b = 0; b < c.encoder_blocks; ++b) {
    const std::size_t ch = net.encoder_channels(b);
    const std::string base = "enc" + std::to_string(b + 1);
    out.push_back({base + ".weight", Shape{ch, in, 3, 3}});
    out.push_back({base + ".bias", Shape{ch}});
    in = ch;
  }
  return out;
}

void check_image(const SegNet& net, const Tensor& image) {
  require_rank3(image, "segnet forward");
  const auto& c = net.config();
  if (image.dim(0) != c.in_channels) {
    throw ShapeError("segnet forward: expected " + std::to_string(c.in_channels) + " input channel(s), got " +
                     shape_string(image.shape()));
  }
  const std::size_t factor = std::size_t{1} << (c.encoder_blocks - 1);
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h % factor != 0 || w % factor != 0) {
    const auto round_up = [factor](std::size_t v) { return (v + factor - 1) / factor * factor; };
    throw ShapeError("segnet forward: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                     " must be divisible by " + std::to_string(factor) + "; pad to " +
                     std::to_string(round_up(h)) + "x" + std::to_string(round_up(w)));
  }
}

std::vector<Var> encode(const SegNet& net, const Var& image) {
  std::vector<Var> outs;
  Var x = image;
  for (std::size_t b = 0; b < net.config().encoder_blocks; ++b) {
    const std::string base = "enc" + std::to_string(b + 1);
    const std::size_t stride = b == 0 ? 1 : 2;
    x = relu(conv2d(x, net.parameter(base + ".weight").var, net.parameter(base + ".bias").var, stride, 1));
    outs.push_back(x);
  }
  return outs;
}

struct Decoded {
  Var logits;
  Var features;
};

Decoded decode(const SegNet& net, std::string_view prefix, const std::vector<Var>& enc) {
  const auto& c = net.config();
  Var x = enc.back();
  for (std::size_t level = c.encoder_blocks - 1; level >= 1; --level) {
    const std::string base = std::string(prefix) + ".up" + std::to_string(level);
    x = conv2d(x, net.parameter(base + ".weight").var, net.parameter(base + ".bias").var, 1, 1);
    const Var& skip = enc[level - 1];
    x = bilinear_upsample(x, skip.value().dim(1), skip.value().dim(2));
    x = relu(add(x, skip));
  }
  const std::string p(prefix);
  // The tap is the convolution output itself; the classifier sees it after ReLU.
  Var feat = conv2d(x, net.parameter(p + ".feat.weight").var, net.parameter(p + ".feat.bias").var, 1, 1);
  Var logits = conv2d(relu(feat), net.parameter(p + ".cls.weight").var, net.parameter(p + ".cls.bias").var, 1, 0);
  return {logits, feat};
}

}  // namespace

SegNet::SegNet(const SegNet& other)
    : config_(other.config_), class_binding_(other.class_binding_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back({p.name, Var::leaf(p.var.value())});
}

SegNet& SegNet::operator=(const SegNet& other) {
  if (this != &other) {
    SegNet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& SegNet::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("segnet: no parameter named '" + std::string(name) + "'");
}

const Parameter& SegNet::parameter(std::string_view name) const {
  return const_cast<SegNet*>(this)->parameter(name);
}

bool SegNet::has_parameter(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::vector<Parameter*> SegNet::trainable(bool include_aux) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (include_aux || !is_aux_name(p.name)) out.push_back(&p);
  }
  return out;
}

std::size_t SegNet::parameter_count(bool include_aux) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (include_aux || !is_aux_name(p.name)) n += p.var.value().size();
  }
  return n;
}

bool SegNet::has_aux() const {
  return std::any_of(params_.begin(), params_.end(), [](const Parameter& p) { return is_aux_name(p.name); });
}

void SegNet::attach_aux_decoders() {
  if (config_.aux_decoders == 0) throw ConfigError("segnet: aux_decoders must be positive");
  drop_aux();
  const auto layout = decoder_layout(*this, kMainDecoder);
  for (std::size_t k = 0; k < config_.aux_decoders; ++k) {
    for (const auto& [name, shape] : layout) {
      const std::string suffix = name.substr(kMainDecoder.size());
      add_parameter(aux_prefix(k) + suffix, parameter(name).var.value());
    }
  }
}

void SegNet::tie_aux_to_main() {
  for (auto& p : params_) {
    if (!is_aux_name(p.name)) continue;
    const auto dot = p.name.find('.');
    p.var.mutable_value() = parameter(std::string(kMainDecoder) + p.name.substr(dot)).var.value();
  }
}

void SegNet::drop_aux() {
  std::erase_if(params_, [](const Parameter& p) { return is_aux_name(p.name); });
}

void SegNet::set_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("segnet: dropout_rate must lie in [0, 1)");
  config_.dropout_rate = rate;
}

std::size_t SegNet::encoder_channels(std::size_t block) const {
  return config_.base_channels << std::min<std::size_t>(block, 2);
}

std::size_t SegNet::low_channels() const { return encoder_channels(config_.encoder_blocks - 1); }
std::size_t SegNet::decision_channels() const { return config_.base_channels; }

void SegNet::add_parameter(std::string name, Tensor value) {
  params_.push_back({std::move(name), Var::leaf(std::move(value))});
}

SegNet SegNet::from_parameters(const SegNetConfig& config, std::vector<int> class_binding,
                               std::vector<std::pair<std::string, Tensor>> tensors) {
  validate_config(config);
  if (class_binding.size() != config.num_classes) {
    throw DataError("segnet: class binding has " + std::to_string(class_binding.size()) + " entries for " +
                    std::to_string(config.num_classes) + " classes");
  }
  SegNet net;
  net.config_ = config;
  net.class_binding_ = std::move(class_binding);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : tensors) by_name[name] = std::move(t);

  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("segnet: missing parameter '" + name + "'");
    if (it->second.shape() != shape) {
      throw DataError("segnet: parameter '" + name + "' has shape " + shape_string(it->second.shape()) +
                      ", expected " + shape_string(shape));
    }
    net.add_parameter(name, std::move(it->second));
    by_name.erase(it);
  };
  for (const auto& [name, shape] : encoder_layout(net)) take(name, shape);
  const auto main_layout = decoder_layout(net, kMainDecoder);
  for (const auto& [name, shape] : main_layout) take(name, shape);
  if (by_name.contains(aux_prefix(0) + ".cls.weight")) {
    for (std::size_t k = 0; k < config.aux_decoders; ++k) {
      for (const auto& [name, shape] : main_layout) take(aux_prefix(k) + name.substr(kMainDecoder.size()), shape);
    }
  }
  if (!by_name.empty()) throw DataError("segnet: unexpected parameter '" + by_name.begin()->first + "'");
  return net;
}

SegNet init_network(const SegNetConfig& config, std::uint64_t seed, std::vector<int> class_binding) {
  validate_config(config);
  if (class_binding.empty()) {
    for (std::size_t c = 0; c < config.num_classes; ++c) class_binding.push_back(static_cast<int>(c));
  }
  if (class_binding.size() != config.num_classes || class_binding.front() != 0) {
    throw ConfigError("segnet: class binding must have num_classes entries starting with background 0");
  }
  SegNet net;
  net.config_ = config;
  net.class_binding_ = std::move(class_binding);

  auto layout = encoder_layout(net);
  const auto dec = decoder_layout(net, kMainDecoder);
  layout.insert(layout.end(), dec.begin(), dec.end());
  for (const auto& [name, shape] : layout) {
    Tensor t(shape, 0.0);
    if (shape.size() == 4) {
      Rng rng(derive_seed(seed, name));
      const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
      const double std_dev = std::sqrt(2.0 / fan_in);
      for (auto& v : t.values()) v = std_dev * rng.normal();
    }
    net.add_parameter(name, std::move(t));
  }
  return net;
}

ForwardResult forward(const SegNet& net, const Var& image) {
  check_image(net, image.value());
  const auto enc = encode(net, image);
  auto [logits, feat] = decode(net, kMainDecoder, enc);
  ForwardResult r;
  r.logits = logits;
  r.probs = softmax(logits);
  r.taps = {enc.back(), feat, feat};
  return r;
}

ForwardResult forward(const SegNet& net, const Tensor& image) { return forward(net, Var::constant(image)); }

AuxForwardResult forward_with_aux(const SegNet& net, const Tensor& image, std::uint64_t dropout_seed) {
  const auto& c = net.config();
  if (c.aux_decoders == 0) throw ConfigError("forward_with_aux: configuration has no auxiliary decoders");
  if (!net.has_aux()) throw ConfigError("forward_with_aux: auxiliary decoders are not attached");
  check_image(net, image);
  const auto enc = encode(net, Var::constant(image));
  auto [logits, feat] = decode(net, kMainDecoder, enc);
  AuxForwardResult r;
  r.main_logits = logits;
  r.main_probs = softmax(logits);
  r.taps = {enc.back(), feat, feat};
  for (std::size_t k = 0; k < c.aux_decoders; ++k) {
    std::vector<Var> perturbed;
    perturbed.reserve(enc.size());
    for (std::size_t level = 0; level < enc.size(); ++level) {
      const std::uint64_t s = derive_seed(derive_seed(dropout_seed, k), level);
      perturbed.push_back(c.dropout_rate > 0.0 ? channel_dropout(enc[level], c.dropout_rate, s) : enc[level]);
    }
    r.aux_probs.push_back(softmax(decode(net, aux_prefix(k), perturbed).logits));
  }
  return r;
}

Tensor extract_decision_features(const SegNet& net, const Tensor& image) {
  NoGradGuard guard;
  return forward(net, image).taps.decision.value();
}

Tensor predict_probs(const SegNet& net, const Tensor& image) {
  NoGradGuard guard;
  return forward(net, image).probs.value();
}

LabelMap predict_labels(const SegNet& net, const Tensor& image) {
  LabelMap local = argmax_channels(predict_probs(net, image));
  for (auto& v : local.data) v = static_cast<std::uint8_t>(net.class_binding()[v]);
  return local;
}

}  // namespace mmadapt
