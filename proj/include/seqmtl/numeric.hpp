#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqmtl/tensor.hpp"

namespace seqmtl {

// log(sum(exp(v))) with the max shift. Throws on empty or NaN input.
double log_sum_exp(std::span<const double> values);

std::vector<double> softmax(std::span<const double> logits);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Evaluates a loss. When `accumulate_grad` is set it must also add the
// analytic gradient into each Parameter::grad.
using LossFn = std::function<double(bool accumulate_grad)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

// Central-difference check of every trainable scalar in `params`. Relative
// error per entry is |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const LossFn& loss_fn, const ParameterList& params, double eps = 1e-5);

constexpr double kDefaultClipNorm = 5.0;

inline double decayed_learning_rate(double base_lr, double decay, int epoch) {
  return base_lr / (1.0 + decay * static_cast<double>(epoch));
}

struct SgdStepInfo {
  double learning_rate = 0.0;
  double grad_norm = 0.0;  // before clipping
  bool clipped = false;
};

// Plain SGD with lr = base_lr / (1 + decay * epoch). The global gradient norm
// is clipped to `clip_norm` first (clip_norm <= 0 disables clipping).
// Gradients are zeroed afterwards. Frozen parameters are skipped.
SgdStepInfo sgd_step(const ParameterList& params, double base_lr, double decay, int epoch,
                     double clip_norm = kDefaultClipNorm);

}  // namespace seqmtl
