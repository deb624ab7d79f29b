#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>

#include "mmadapt/autograd.hpp"

namespace mmadapt {

struct AdamState {
  struct Moments {
    Tensor m;
    Tensor v;
  };
  std::map<std::string, Moments> moments;  // keyed by parameter name
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double lr = 2e-3;
  double eps = 1e-8;
};

// One bias-corrected Adam update from the gradients currently held by `params`.
// Throws NumericError naming the first parameter whose gradient is not finite.
void adam_step(std::span<Parameter* const> params, AdamState& state);

void zero_grads(std::span<Parameter* const> params);

struct GradCheckOptions {
  double epsilon = 1e-5;
  std::size_t samples_per_param = 12;
  std::uint64_t seed = 0;
  // Relative error uses max(|analytic|, |numeric|, floor) as denominator.
  double floor = 1e-7;
  // A coordinate whose one-sided differences disagree by more than this (relative)
  // straddles a ReLU or max-pool switch within +-epsilon. Such samples are redrawn
  // (up to 4 times) and counted instead of compared. 0 disables the test.
  double kink_tolerance = 0.0;
};

struct GradCheckReport {
  double worst = 0.0;  // max relative error over compared samples
  std::size_t compared = 0;
  std::size_t skipped = 0;  // samples rejected as non-differentiable
};

// Compares reverse-mode gradients of `loss_fn` against central differences on
// sampled coordinates of every parameter.
// Throws std::logic_error if two evaluations at the same point disagree.
GradCheckReport finite_diff_report(const std::function<Var()>& loss_fn, std::span<Parameter* const> params,
                                   const GradCheckOptions& options = {});

// The max relative error of finite_diff_report.
double finite_diff_check(const std::function<Var()>& loss_fn, std::span<Parameter* const> params,
                         const GradCheckOptions& options = {});

}  // namespace mmadapt
