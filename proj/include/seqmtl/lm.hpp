#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seqmtl/corpus.hpp"
#include "seqmtl/tensor.hpp"

namespace seqmtl {

// Output vocabulary of the language-model heads: UNK, START and END, then the
// most frequent training words.
class LmVocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr std::size_t kReserved = 3;
  static constexpr std::size_t kDefaultSize = 5000;

  LmVocabulary() = default;
  // Keeps the `top_k` words with the highest training frequency; ties go to
  // the lower word id. Words never seen in training are left out.
  LmVocabulary(const Vocabulary& vocab, std::size_t top_k);

  std::size_t size() const { return kReserved + words_.size(); }
  std::size_t top_k() const { return top_k_; }
  // Word ids (model vocabulary) kept, in LM-id order after the reserved ones.
  const std::vector<int>& words() const { return words_; }

  int lm_id(int word_id) const;
  std::vector<int> map(std::span<const int> word_ids) const;

  nlohmann::json to_json() const;
  static LmVocabulary from_json(const nlohmann::json& j, std::size_t model_vocab_size);

 private:
  std::size_t top_k_ = 0;
  std::vector<int> words_;
  std::vector<int> index_;  // model word id -> lm id
};

// Two independent softmax projections: forward states predict the next word,
// backward states the previous one.
class LmHead {
 public:
  struct Cache {
    Tensor states;         // T x 2H, [forward ; backward]
    Tensor forward_grad;   // T x V, d loss / d logits
    Tensor backward_grad;  // T x V
  };

  LmHead() = default;
  LmHead(const std::string& prefix, std::size_t hidden, std::size_t vocab_size);

  void init(std::uint64_t seed);

  std::size_t hidden() const { return hidden_; }
  std::size_t vocab_size() const { return vocab_; }

  // `states` is a BLSTM output (T x 2H); `lm_ids` the sentence in LM ids.
  // Returns (E_fwd, E_bwd). Fills `cache` for backward when given.
  std::pair<double, double> losses(const Tensor& states, std::span<const int> lm_ids,
                                   Cache* cache = nullptr) const;
  // Adds `scale` times the parameter gradients; returns d states (T x 2H).
  Tensor backward(const Cache& cache, double scale);

  ParameterList parameters() { return {&forward_weight, &forward_bias, &backward_weight, &backward_bias}; }

  Parameter forward_weight;   // V x H
  Parameter forward_bias;     // V
  Parameter backward_weight;  // V x H
  Parameter backward_bias;    // V

 private:
  std::size_t hidden_ = 0;
  std::size_t vocab_ = 0;
};

// Targets of the two directions for a sentence of LM ids.
std::vector<int> forward_targets(std::span<const int> lm_ids);
std::vector<int> backward_targets(std::span<const int> lm_ids);

std::pair<double, double> lm_losses(const Tensor& forward_states, const Tensor& backward_states,
                                    std::span<const int> lm_ids, const LmHead& head);

// E + lambda * (E_fwd + E_bwd); lambda must be non-negative.
double joint_loss(double task_loss, double lm_forward, double lm_backward, double lambda);

}  // namespace seqmtl
