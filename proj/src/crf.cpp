#include "seqmtl/crf.hpp"

#include <algorithm>
#include <cmath>

#include "seqmtl/encoders.hpp"
#include "seqmtl/kernels.hpp"
#include "seqmtl/numeric.hpp"

namespace seqmtl {
namespace {

void check_shapes(const CrfPotentials& pot) {
  const std::size_t L = pot.labels();
  if (L == 0 || pot.steps() == 0) throw Error("CRF needs T >= 1 and L >= 1");
  if (pot.transitions.rows() != L + 2 || pot.transitions.cols() != L + 2) {
    throw Error("transition matrix must be (L+2)x(L+2)");
  }
}

void check_gold(std::span<const int> gold, std::size_t T, std::size_t L) {
  if (gold.size() != T) {
    throw Error("gold length " + std::to_string(gold.size()) + " != T " + std::to_string(T));
  }
  for (int y : gold) {
    if (y < 0 || static_cast<std::size_t>(y) >= L) {
      throw Error("label id " + std::to_string(y) + " out of range [0, " + std::to_string(L) + ")");
    }
  }
}

// alpha[t][j]: log-sum of scores of prefixes ending in j at t.
Tensor forward_scores(const CrfPotentials& pot) {
  const std::size_t T = pot.steps(), L = pot.labels();
  const Tensor& tr = pot.transitions;
  Tensor alpha = Tensor::matrix(T, L);
  for (std::size_t j = 0; j < L; ++j) alpha.at(0, j) = tr.at(pot.start(), j) + pot.emissions.at(0, j);
  std::vector<double> terms(L);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < L; ++j) {
      for (std::size_t i = 0; i < L; ++i) terms[i] = alpha.at(t - 1, i) + tr.at(i, j);
      alpha.at(t, j) = pot.emissions.at(t, j) + log_sum_exp(terms);
    }
  }
  return alpha;
}

Tensor backward_scores(const CrfPotentials& pot) {
  const std::size_t T = pot.steps(), L = pot.labels();
  const Tensor& tr = pot.transitions;
  Tensor beta = Tensor::matrix(T, L);
  for (std::size_t i = 0; i < L; ++i) beta.at(T - 1, i) = tr.at(i, pot.stop());
  std::vector<double> terms(L);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        terms[j] = tr.at(i, j) + pot.emissions.at(t + 1, j) + beta.at(t + 1, j);
      }
      beta.at(t, i) = log_sum_exp(terms);
    }
  }
  return beta;
}

double final_log_partition(const CrfPotentials& pot, const Tensor& alpha) {
  const std::size_t T = pot.steps(), L = pot.labels();
  std::vector<double> terms(L);
  for (std::size_t j = 0; j < L; ++j) terms[j] = alpha.at(T - 1, j) + pot.transitions.at(j, pot.stop());
  return log_sum_exp(terms);
}

}  // namespace

double path_score(const CrfPotentials& pot, std::span<const int> path) {
  check_shapes(pot);
  check_gold(path, pot.steps(), pot.labels());
  const Tensor& tr = pot.transitions;
  double s = tr.at(pot.start(), static_cast<std::size_t>(path[0]));
  for (std::size_t t = 0; t < path.size(); ++t) {
    s += pot.emissions.at(t, static_cast<std::size_t>(path[t]));
    if (t > 0) s += tr.at(static_cast<std::size_t>(path[t - 1]), static_cast<std::size_t>(path[t]));
  }
  return s + tr.at(static_cast<std::size_t>(path.back()), pot.stop());
}

double log_partition(const CrfPotentials& pot) {
  check_shapes(pot);
  return final_log_partition(pot, forward_scores(pot));
}

PathScore viterbi(const CrfPotentials& pot) {
  check_shapes(pot);
  const std::size_t T = pot.steps(), L = pot.labels();
  const Tensor& tr = pot.transitions;
  Tensor delta = Tensor::matrix(T, L);
  std::vector<int> back(T * L, 0);
  for (std::size_t j = 0; j < L; ++j) delta.at(0, j) = tr.at(pot.start(), j) + pot.emissions.at(0, j);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < L; ++j) {
      std::size_t best_i = 0;
      double best = delta.at(t - 1, 0) + tr.at(0, j);
      for (std::size_t i = 1; i < L; ++i) {
        const double v = delta.at(t - 1, i) + tr.at(i, j);
        if (v > best) {
          best = v;
          best_i = i;
        }
      }
      delta.at(t, j) = best + pot.emissions.at(t, j);
      back[t * L + j] = static_cast<int>(best_i);
    }
  }
  std::size_t last = 0;
  double best = delta.at(T - 1, 0) + tr.at(0, pot.stop());
  for (std::size_t j = 1; j < L; ++j) {
    const double v = delta.at(T - 1, j) + tr.at(j, pot.stop());
    if (v > best) {
      best = v;
      last = j;
    }
  }
  PathScore out;
  out.labels.assign(T, 0);
  out.labels[T - 1] = static_cast<int>(last);
  for (std::size_t t = T - 1; t > 0; --t) {
    out.labels[t - 1] = back[t * L + static_cast<std::size_t>(out.labels[t])];
  }
  out.score = best;
  out.log_prob = best - log_partition(pot);
  return out;
}

double sequence_nll(const CrfPotentials& pot, std::span<const int> gold, Tensor* emission_grad,
                    Tensor* transition_grad) {
  check_shapes(pot);
  check_gold(gold, pot.steps(), pot.labels());
  const std::size_t T = pot.steps(), L = pot.labels();
  const Tensor alpha = forward_scores(pot);
  const double log_z = final_log_partition(pot, alpha);
  const double loss = log_z - path_score(pot, gold);
  if (emission_grad == nullptr && transition_grad == nullptr) return loss;

  const Tensor beta = backward_scores(pot);
  const Tensor& tr = pot.transitions;
  const std::size_t S = pot.start(), E = pot.stop();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < L; ++j) {
      const double marginal = std::exp(alpha.at(t, j) + beta.at(t, j) - log_z);
      if (emission_grad != nullptr) emission_grad->at(t, j) += marginal;
      if (transition_grad != nullptr) {
        if (t == 0) transition_grad->at(S, j) += marginal;
        if (t == T - 1) transition_grad->at(j, E) += marginal;
      }
    }
  }
  if (emission_grad != nullptr) {
    for (std::size_t t = 0; t < T; ++t) emission_grad->at(t, static_cast<std::size_t>(gold[t])) -= 1.0;
  }
  if (transition_grad != nullptr) {
    for (std::size_t t = 1; t < T; ++t) {
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < L; ++j) {
          transition_grad->at(i, j) += std::exp(alpha.at(t - 1, i) + tr.at(i, j) +
                                                pot.emissions.at(t, j) + beta.at(t, j) - log_z);
        }
      }
    }
    transition_grad->at(S, static_cast<std::size_t>(gold[0])) -= 1.0;
    transition_grad->at(static_cast<std::size_t>(gold[T - 1]), E) -= 1.0;
    for (std::size_t t = 1; t < T; ++t) {
      transition_grad->at(static_cast<std::size_t>(gold[t - 1]), static_cast<std::size_t>(gold[t])) -= 1.0;
    }
  }
  return loss;
}

BruteForceResult brute_force(const CrfPotentials& pot) {
  check_shapes(pot);
  const std::size_t T = pot.steps(), L = pot.labels();
  std::size_t total = 1;
  for (std::size_t t = 0; t < T; ++t) {
    total *= L;
    if (total > kBruteForceLimit) {
      throw Error("brute force guard: L^T exceeds " + std::to_string(kBruteForceLimit));
    }
  }
  BruteForceResult r;
  r.paths.reserve(total);
  r.scores.reserve(total);
  std::vector<int> path(T, 0);
  double max_score = -INFINITY;
  std::size_t best = 0;
  auto reverse_less = [&](const std::vector<int>& a, const std::vector<int>& b) {
    for (std::size_t t = T; t-- > 0;) {
      if (a[t] != b[t]) return a[t] < b[t];
    }
    return false;
  };
  for (std::size_t n = 0; n < total; ++n) {
    // Direct summation, independent of the dynamic programs above.
    const Tensor& tr = pot.transitions;
    double s = tr.at(pot.start(), static_cast<std::size_t>(path[0])) +
               tr.at(static_cast<std::size_t>(path[T - 1]), pot.stop());
    for (std::size_t t = 0; t < T; ++t) s += pot.emissions.at(t, static_cast<std::size_t>(path[t]));
    for (std::size_t t = 1; t < T; ++t) {
      s += tr.at(static_cast<std::size_t>(path[t - 1]), static_cast<std::size_t>(path[t]));
    }
    r.paths.push_back(path);
    r.scores.push_back(s);
    if (s > max_score || (s == max_score && reverse_less(path, r.paths[best]))) {
      max_score = s;
      best = n;
    }
    for (std::size_t t = T; t-- > 0;) {
      if (++path[t] < static_cast<int>(L)) break;
      path[t] = 0;
    }
  }
  double z = 0.0;
  for (double s : r.scores) z += std::exp(s - max_score);
  r.log_partition = max_score + std::log(z);
  r.probabilities.reserve(total);
  for (double s : r.scores) r.probabilities.push_back(std::exp(s - r.log_partition));
  r.best.labels = r.paths[best];
  r.best.score = max_score;
  r.best.log_prob = max_score - r.log_partition;
  return r;
}

double softmax_nll(const Tensor& emissions, std::span<const int> gold, Tensor* emission_grad) {
  const std::size_t T = emissions.rows(), L = emissions.cols();
  check_gold(gold, T, L);
  double loss = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = emissions.row(t);
    const double lse = log_sum_exp(row);
    loss += lse - row[static_cast<std::size_t>(gold[t])];
    if (emission_grad != nullptr) {
      for (std::size_t j = 0; j < L; ++j) emission_grad->at(t, j) += std::exp(row[j] - lse);
      emission_grad->at(t, static_cast<std::size_t>(gold[t])) -= 1.0;
    }
  }
  return loss;
}

std::vector<int> argmax_decode(const Tensor& emissions) {
  std::vector<int> out(emissions.rows(), 0);
  for (std::size_t t = 0; t < emissions.rows(); ++t) {
    const auto row = emissions.row(t);
    out[t] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

// ------------------------------------------------------------------ CrfLayer

CrfLayer::CrfLayer(const std::string& prefix, std::size_t input_dim, std::size_t labels,
                   OutputLayerKind kind)
    : weight(prefix + ".W", Tensor::matrix(labels, input_dim)),
      bias(prefix + ".b", Tensor({labels})),
      input_(input_dim),
      labels_(labels),
      kind_(kind) {
  if (labels == 0) throw Error("output layer " + prefix + " has no labels");
  if (kind_ == OutputLayerKind::crf) {
    transitions = Parameter(prefix + ".transitions", Tensor::matrix(labels + 2, labels + 2));
  }
}

void CrfLayer::init(std::uint64_t seed) {
  init_glorot(weight, input_, labels_, seed);
  bias.value.fill(0.0);
  if (kind_ == OutputLayerKind::crf) {
    transitions.value.fill(0.0);
    const std::size_t S = labels_, E = labels_ + 1;
    for (std::size_t i = 0; i < labels_ + 2; ++i) {
      transitions.value.at(i, S) = kMaskedTransition;
      transitions.value.at(E, i) = kMaskedTransition;
    }
  }
}

Tensor CrfLayer::emissions(const Tensor& h) const {
  if (h.cols() != input_) {
    throw Error("output layer " + weight.name + " expects width " + std::to_string(input_) +
                ", got " + std::to_string(h.cols()));
  }
  const auto& k = kernels::active();
  Tensor e = Tensor::matrix(h.rows(), labels_);
  for (std::size_t t = 0; t < h.rows(); ++t) {
    auto row = e.row(t);
    std::copy(bias.value.values().begin(), bias.value.values().end(), row.begin());
    k.gemv(weight.value.data(), labels_, input_, h.row(t).data(), row.data());
  }
  return e;
}

double CrfLayer::nll(const Tensor& h, std::span<const int> gold, Cache* cache) const {
  const Tensor e = emissions(h);
  if (kind_ == OutputLayerKind::softmax) {
    if (cache == nullptr) return softmax_nll(e, gold, nullptr);
    cache->input = h;
    cache->emission_grad = Tensor::matrix(e.rows(), e.cols());
    return softmax_nll(e, gold, &cache->emission_grad);
  }
  const CrfPotentials pot{e, transitions.value};
  if (cache == nullptr) return sequence_nll(pot, gold, nullptr, nullptr);
  cache->input = h;
  cache->emission_grad = Tensor::matrix(e.rows(), e.cols());
  cache->transition_grad = Tensor(transitions.value.shape());
  return sequence_nll(pot, gold, &cache->emission_grad, &cache->transition_grad);
}

Tensor CrfLayer::backward(const Cache& cache, double scale) {
  const auto& k = kernels::active();
  const std::size_t T = cache.input.rows();
  Tensor dh = Tensor::matrix(T, input_);
  std::vector<double> de(labels_);
  for (std::size_t t = 0; t < T; ++t) {
    const auto g = cache.emission_grad.row(t);
    for (std::size_t j = 0; j < labels_; ++j) de[j] = scale * g[j];
    k.axpy(1.0, de.data(), bias.grad.data(), labels_);
    k.ger(weight.grad.data(), labels_, input_, de.data(), cache.input.row(t).data());
    k.gemv_t(weight.value.data(), labels_, input_, de.data(), dh.row(t).data());
  }
  if (kind_ == OutputLayerKind::crf) {
    k.axpy(scale, cache.transition_grad.data(), transitions.grad.data(), transitions.grad.size());
  }
  return dh;
}

PathScore CrfLayer::decode(const Tensor& h) const {
  const Tensor e = emissions(h);
  if (kind_ == OutputLayerKind::softmax) {
    PathScore out;
    out.labels = argmax_decode(e);
    for (std::size_t t = 0; t < e.rows(); ++t) {
      const auto row = e.row(t);
      const double v = row[static_cast<std::size_t>(out.labels[t])];
      out.score += v;
      out.log_prob += v - log_sum_exp(row);
    }
    return out;
  }
  return viterbi(CrfPotentials{e, transitions.value});
}

ParameterList CrfLayer::parameters() {
  ParameterList out{&weight, &bias};
  if (kind_ == OutputLayerKind::crf) out.push_back(&transitions);
  return out;
}

double crf_nll(const Tensor& h, std::span<const int> gold, const CrfLayer& layer) {
  return layer.nll(h, gold);
}

PathScore viterbi_decode(const Tensor& h, const CrfLayer& layer) { return layer.decode(h); }

BruteForceResult brute_force(const Tensor& h, const CrfLayer& layer) {
  const Tensor e = layer.emissions(h);
  return brute_force(CrfPotentials{e, layer.transitions.value});
}

}  // namespace seqmtl
