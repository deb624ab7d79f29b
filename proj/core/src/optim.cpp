#include "mmadapt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mmadapt/errors.hpp"
#include "mmadapt/rng.hpp"

namespace mmadapt {

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->var.zero_grad();
}

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  for (Parameter* p : params) {
    if (!p->var.grad().all_finite()) {
      throw NumericError("non-finite gradient in parameter '" + p->name + "' at step " +
                         std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (Parameter* p : params) {
    Tensor& value = p->var.mutable_value();
    const Tensor& g = p->var.grad();
    auto [it, inserted] = state.moments.try_emplace(p->name);
    auto& mom = it->second;
    if (inserted || mom.m.shape() != value.shape()) {
      mom.m = Tensor(value.shape(), 0.0);
      mom.v = Tensor(value.shape(), 0.0);
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      mom.m[i] = state.beta1 * mom.m[i] + (1.0 - state.beta1) * g[i];
      mom.v[i] = state.beta2 * mom.v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

GradCheckReport finite_diff_report(const std::function<Var()>& loss_fn, std::span<Parameter* const> params,
                                   const GradCheckOptions& options) {
  const double base = loss_fn().value().item();
  zero_grads(params);
  const Var loss = loss_fn();
  if (loss.value().item() != base) {
    throw std::logic_error("finite_diff_check: loss function is not deterministic");
  }
  backward(loss);

  Rng rng(derive_seed(options.seed, "finite_diff_check"));
  GradCheckReport report;
  for (Parameter* p : params) {
    const Tensor analytic = p->var.grad();
    Tensor& value = p->var.mutable_value();
    const std::size_t n = value.size();
    const std::size_t samples = std::min(n, options.samples_per_param);
    for (std::size_t s = 0; s < samples; ++s) {
      const bool exhaustive = samples == n;
      for (int attempt = 0; attempt < 5; ++attempt) {
        const std::size_t i = exhaustive ? s : static_cast<std::size_t>(rng.below(n));
        const double orig = value[i];
        value[i] = orig + options.epsilon;
        const double plus = loss_fn().value().item();
        value[i] = orig - options.epsilon;
        const double minus = loss_fn().value().item();
        value[i] = orig;
        if (options.kink_tolerance > 0.0) {
          const double right = (plus - base) / options.epsilon, left = (base - minus) / options.epsilon;
          const double scale = std::max({std::abs(right), std::abs(left), options.floor});
          if (std::abs(right - left) / scale > options.kink_tolerance) {
            ++report.skipped;
            if (exhaustive) break;
            continue;
          }
        }
        const double numeric = (plus - minus) / (2.0 * options.epsilon);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
        report.worst = std::max(report.worst, std::abs(a - numeric) / denom);
        ++report.compared;
        break;
      }
    }
  }
  zero_grads(params);
  return report;
}

double finite_diff_check(const std::function<Var()>& loss_fn, std::span<Parameter* const> params,
                         const GradCheckOptions& options) {
  return finite_diff_report(loss_fn, params, options).worst;
}

}  // namespace mmadapt
