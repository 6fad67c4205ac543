#include "seqmtl/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "seqmtl/kernels.hpp"

namespace seqmtl {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw Error("log_sum_exp of an empty vector");
  double m = -INFINITY;
  for (double v : values) {
    if (std::isnan(v)) throw Error("log_sum_exp input contains NaN");
    m = std::max(m, v);
  }
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
  return out;
}

GradCheckReport grad_check(const LossFn& loss_fn, const ParameterList& params, double eps) {
  if (!(eps > 0.0)) throw Error("grad_check needs eps > 0");

  zero_grads(params);
  const double base = loss_fn(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad);
  zero_grads(params);

  const double again = loss_fn(false);
  if (again != base) {
    throw Error("grad_check: loss function is not deterministic (" + std::to_string(base) +
                " vs " + std::to_string(again) + ")");
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double plus = loss_fn(false);
      p.value[i] = saved - eps;
      const double minus = loss_fn(false);
      p.value[i] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_parameter = p.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

SgdStepInfo sgd_step(const ParameterList& params, double base_lr, double decay, int epoch,
                     double clip_norm) {
  const auto& k = kernels::active();
  SgdStepInfo info;
  info.learning_rate = decayed_learning_rate(base_lr, decay, epoch);

  double sq = 0.0;
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    if (!p->grad.all_finite()) throw Error("non-finite gradient in parameter " + p->name);
    sq += k.sum_squares(p->grad.data(), p->grad.size());
  }
  info.grad_norm = std::sqrt(sq);

  double factor = 1.0;
  if (clip_norm > 0.0 && info.grad_norm > clip_norm) {
    factor = clip_norm / info.grad_norm;
    info.clipped = true;
  }

  if (info.learning_rate != 0.0) {
    const double step = -info.learning_rate * factor;
    for (Parameter* p : params) {
      if (!p->trainable) continue;
      k.axpy(step, p->grad.data(), p->value.data(), p->value.size());
    }
  }
  zero_grads(params);
  return info;
}

}  // namespace seqmtl
