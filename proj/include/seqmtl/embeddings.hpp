#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqmtl/corpus.hpp"
#include "seqmtl/rng.hpp"
#include "seqmtl/tensor.hpp"

namespace seqmtl {

struct EmbeddingMatrix {
  Tensor matrix;  // |vocab| x dim, row 0 (PAD) all zeros
  std::size_t dim = 0;
  bool trainable = true;
  std::size_t covered = 0;  // vocabulary rows copied from the file
};

// Rows drawn uniform in +-sqrt(3/dim); PAD row zero.
EmbeddingMatrix random_embeddings(std::size_t vocab_size, std::size_t dim, Rng& rng);

// Words of a `word f1 ... fd` text file, in file order. Validates dimensions.
std::vector<std::string> read_pretrained_words(const std::string& path);

// Copies rows for vocabulary words found in the file (first occurrence of a
// normalized form wins); the rest are random as above.
EmbeddingMatrix load_pretrained(const std::string& path, const Vocabulary& vocab, Rng& rng);

// Precomputed per-sentence layer outputs of an external bidirectional LM.
struct ContextualRecord {
  std::size_t tokens = 0;
  std::size_t layers = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // (layer, token, dim) row-major

  const double* at(std::size_t layer, std::size_t token) const {
    return values.data() + (layer * tokens + token) * dim;
  }
};

class ContextualVectorStore {
 public:
  std::size_t layers() const { return layers_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool contains(const std::string& key) const { return records_.count(key) != 0; }

  // Throws Error("contextual vectors missing ...") naming the sentence.
  const ContextualRecord& lookup(const std::string& key, const std::string& sentence_text = {}) const;
  const ContextualRecord* find(const std::string& key) const;

  // Throws on inconsistent layer count/dimension or duplicate key;
  // `record_index` only feeds the error message.
  void insert(const std::string& key, ContextualRecord record, std::size_t record_index = 0);
  void merge(const ContextualVectorStore& other);

 private:
  std::size_t layers_ = 0;
  std::size_t dim_ = 0;
  std::unordered_map<std::string, ContextualRecord> records_;
};

// Binary records: u32 key length, key bytes, u32 token_count, u32 layer_count,
// u32 dim, then token_count*layer_count*dim float32, all little-endian.
// Files whose first non-space byte is '{' are read as JSON lines with the
// fields key (or tokens), token_count, layer_count, dim, values.
ContextualVectorStore load_contextual_store(const std::string& path);
void save_contextual_store_binary(const std::string& path,
                                  const std::vector<std::pair<std::string, ContextualRecord>>& records);

// Softmax-normalised layer mixture scaled by gamma.
struct ElmoMix {
  std::vector<double> layer_weights;  // softmax(raw)
  double gamma = 1.0;
};

ElmoMix elmo_mix(std::span<const double> raw_weights, double gamma);

// out (T x dim) = gamma * sum_l softmax(raw)_l * layer_l.
Tensor elmo_combine(const ContextualRecord& layers, std::span<const double> raw_weights,
                    double gamma);

// Gradients w.r.t. the raw weights and gamma given d(out).
void elmo_combine_backward(const ContextualRecord& layers, std::span<const double> raw_weights,
                           double gamma, const Tensor& out_grad, std::span<double> raw_grad,
                           double& gamma_grad);

// Raw weights that put all mass on one layer (softmax underflows the rest to
// exactly zero).
std::vector<double> frozen_layer_selection(std::size_t layers, std::size_t selected);

}  // namespace seqmtl
