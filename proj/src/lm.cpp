#include "seqmtl/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqmtl/encoders.hpp"
#include "seqmtl/kernels.hpp"
#include "seqmtl/numeric.hpp"

namespace seqmtl {

LmVocabulary::LmVocabulary(const Vocabulary& vocab, std::size_t top_k) : top_k_(top_k) {
  const auto& freq = vocab.frequencies();
  std::vector<int> candidates;
  for (std::size_t id = Vocabulary::kReservedWords; id < freq.size(); ++id) {
    if (freq[id] > 0) candidates.push_back(static_cast<int>(id));
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    return freq[static_cast<std::size_t>(a)] > freq[static_cast<std::size_t>(b)];
  });
  if (candidates.size() > top_k) candidates.resize(top_k);
  words_ = std::move(candidates);
  index_.assign(vocab.word_count(), kUnk);
  index_[Vocabulary::kStart] = kStart;
  index_[Vocabulary::kEnd] = kEnd;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    index_[static_cast<std::size_t>(words_[i])] = static_cast<int>(kReserved + i);
  }
}

int LmVocabulary::lm_id(int word_id) const {
  if (word_id < 0 || static_cast<std::size_t>(word_id) >= index_.size()) return kUnk;
  return index_[static_cast<std::size_t>(word_id)];
}

std::vector<int> LmVocabulary::map(std::span<const int> word_ids) const {
  std::vector<int> out;
  out.reserve(word_ids.size());
  for (int w : word_ids) out.push_back(lm_id(w));
  return out;
}

nlohmann::json LmVocabulary::to_json() const {
  return {{"top_k", top_k_}, {"word_ids", words_}};
}

LmVocabulary LmVocabulary::from_json(const nlohmann::json& j, std::size_t model_vocab_size) {
  LmVocabulary v;
  v.top_k_ = j.at("top_k").get<std::size_t>();
  v.words_ = j.at("word_ids").get<std::vector<int>>();
  v.index_.assign(model_vocab_size, kUnk);
  if (model_vocab_size > Vocabulary::kEnd) {
    v.index_[Vocabulary::kStart] = kStart;
    v.index_[Vocabulary::kEnd] = kEnd;
  }
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    const int w = v.words_[i];
    if (w < 0 || static_cast<std::size_t>(w) >= model_vocab_size) {
      throw Error("LM vocabulary refers to word id " + std::to_string(w) + " outside the vocabulary");
    }
    v.index_[static_cast<std::size_t>(w)] = static_cast<int>(kReserved + i);
  }
  return v;
}

// -------------------------------------------------------------------- LmHead

LmHead::LmHead(const std::string& prefix, std::size_t hidden, std::size_t vocab_size)
    : forward_weight(prefix + ".fwd.W", Tensor::matrix(vocab_size, hidden)),
      forward_bias(prefix + ".fwd.b", Tensor({vocab_size})),
      backward_weight(prefix + ".bwd.W", Tensor::matrix(vocab_size, hidden)),
      backward_bias(prefix + ".bwd.b", Tensor({vocab_size})),
      hidden_(hidden),
      vocab_(vocab_size) {
  if (vocab_size < LmVocabulary::kReserved) throw Error("LM vocabulary too small");
}

void LmHead::init(std::uint64_t seed) {
  init_glorot(forward_weight, hidden_, vocab_, seed);
  init_glorot(backward_weight, hidden_, vocab_, seed);
  forward_bias.value.fill(0.0);
  backward_bias.value.fill(0.0);
}

std::vector<int> forward_targets(std::span<const int> lm_ids) {
  std::vector<int> out(lm_ids.begin() + (lm_ids.empty() ? 0 : 1), lm_ids.end());
  out.push_back(LmVocabulary::kEnd);
  return out;
}

std::vector<int> backward_targets(std::span<const int> lm_ids) {
  std::vector<int> out{LmVocabulary::kStart};
  if (!lm_ids.empty()) out.insert(out.end(), lm_ids.begin(), lm_ids.end() - 1);
  return out;
}

namespace {

// Cross-entropy of softmax(W s + b) against `target`; the logit gradient
// (p - onehot) goes to `grad` when non-null.
double softmax_term(const Parameter& w, const Parameter& b, std::span<const double> state, int target,
                    std::span<double> grad) {
  const auto& k = kernels::active();
  const std::size_t V = b.value.size();
  std::vector<double> logits(b.value.values().begin(), b.value.values().end());
  k.gemv(w.value.data(), V, state.size(), state.data(), logits.data());
  const double lse = log_sum_exp(logits);
  const double loss = lse - logits[static_cast<std::size_t>(target)];
  if (!grad.empty()) {
    for (std::size_t v = 0; v < V; ++v) grad[v] = std::exp(logits[v] - lse);
    grad[static_cast<std::size_t>(target)] -= 1.0;
  }
  return loss;
}

void accumulate(Parameter& w, Parameter& b, const Tensor& logit_grad, const Tensor& states,
                std::size_t offset, std::size_t H, double scale, Tensor& state_grad) {
  const auto& k = kernels::active();
  const std::size_t V = b.value.size();
  std::vector<double> g(V);
  for (std::size_t t = 0; t < states.rows(); ++t) {
    const auto src = logit_grad.row(t);
    for (std::size_t v = 0; v < V; ++v) g[v] = scale * src[v];
    k.axpy(1.0, g.data(), b.grad.data(), V);
    k.ger(w.grad.data(), V, H, g.data(), states.row(t).data() + offset);
    k.gemv_t(w.value.data(), V, H, g.data(), state_grad.row(t).data() + offset);
  }
}

}  // namespace

std::pair<double, double> LmHead::losses(const Tensor& states, std::span<const int> lm_ids,
                                         Cache* cache) const {
  const std::size_t T = states.rows();
  if (states.cols() != 2 * hidden_) {
    throw Error("LM head expects states of width " + std::to_string(2 * hidden_) + ", got " +
                std::to_string(states.cols()));
  }
  if (lm_ids.size() != T) {
    throw Error("LM head: " + std::to_string(lm_ids.size()) + " words for " + std::to_string(T) +
                " states");
  }
  for (int id : lm_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_) throw Error("LM id out of range");
  }
  const auto next = forward_targets(lm_ids);
  const auto prev = backward_targets(lm_ids);
  if (cache != nullptr) {
    cache->states = states;
    cache->forward_grad = Tensor::matrix(T, vocab_);
    cache->backward_grad = Tensor::matrix(T, vocab_);
  }
  double e_fwd = 0.0, e_bwd = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = states.row(t);
    e_fwd += softmax_term(forward_weight, forward_bias, row.subspan(0, hidden_), next[t],
                          cache ? cache->forward_grad.row(t) : std::span<double>{});
    e_bwd += softmax_term(backward_weight, backward_bias, row.subspan(hidden_, hidden_), prev[t],
                          cache ? cache->backward_grad.row(t) : std::span<double>{});
  }
  return {e_fwd, e_bwd};
}

Tensor LmHead::backward(const Cache& cache, double scale) {
  Tensor grad = Tensor::matrix(cache.states.rows(), 2 * hidden_);
  accumulate(forward_weight, forward_bias, cache.forward_grad, cache.states, 0, hidden_, scale, grad);
  accumulate(backward_weight, backward_bias, cache.backward_grad, cache.states, hidden_, hidden_, scale,
             grad);
  return grad;
}

std::pair<double, double> lm_losses(const Tensor& forward_states, const Tensor& backward_states,
                                    std::span<const int> lm_ids, const LmHead& head) {
  if (forward_states.rows() != backward_states.rows() || forward_states.cols() != head.hidden() ||
      backward_states.cols() != head.hidden()) {
    throw Error("LM states must both be T x " + std::to_string(head.hidden()) + ", got " +
                forward_states.shape_string() + " and " + backward_states.shape_string());
  }
  const std::size_t T = forward_states.rows(), H = head.hidden();
  Tensor states = Tensor::matrix(T, 2 * H);
  for (std::size_t t = 0; t < T; ++t) {
    std::copy_n(forward_states.row(t).begin(), H, states.row(t).begin());
    std::copy_n(backward_states.row(t).begin(), H, states.row(t).begin() + static_cast<long>(H));
  }
  return head.losses(states, lm_ids);
}

double joint_loss(double task_loss, double lm_forward, double lm_backward, double lambda) {
  if (!(lambda >= 0.0)) throw Error("lambda must be non-negative");
  return task_loss + lambda * (lm_forward + lm_backward);
}

}  // namespace seqmtl
