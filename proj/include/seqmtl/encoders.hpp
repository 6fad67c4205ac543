#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqmtl/embeddings.hpp"
#include "seqmtl/rng.hpp"
#include "seqmtl/tensor.hpp"

namespace seqmtl {

enum class Mode { train, eval };

struct DropoutSpec {
  double input_rate = 0.33;
  double blstm_output_rate = 0.5;
};

// Inverted dropout: kept entries are scaled by 1/(1-rate) at train time, so
// eval mode is the identity. Masks are drawn independently per entry.
class DropoutMask {
 public:
  DropoutMask() = default;
  DropoutMask(std::size_t n, double rate, Mode mode, Rng& rng);

  bool identity() const { return scale_.empty(); }
  void apply(std::span<double> values) const;
  // Same multiplication; the mask is its own Jacobian.
  void backward(std::span<double> grad) const { apply(grad); }

 private:
  std::vector<double> scale_;
};

// Glorot-uniform fill, +-sqrt(6/(fan_in+fan_out)), from a stream keyed by the
// parameter name.
void init_glorot(Parameter& p, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);
void init_uniform(Parameter& p, double bound, std::uint64_t seed);

// Character convolution: embed, convolve a window over the PAD-padded word,
// tanh, max-pool over positions.
class CharCnn {
 public:
  struct Cache {
    std::vector<int> padded;
    std::vector<std::size_t> argmax;  // per filter: window start in `padded`
    std::vector<double> out;
  };

  CharCnn() = default;
  CharCnn(const std::string& prefix, std::size_t chars, std::size_t char_dim, std::size_t window,
          std::size_t filters);

  void init(std::uint64_t seed);

  std::size_t window() const { return window_; }
  std::size_t output_dim() const { return filters_; }

  // Trailing PAD ids in `chars` are ignored. Unknown ids map to the UNK char.
  std::vector<double> forward(std::span<const int> chars, Cache* cache = nullptr) const;
  void backward(const Cache& cache, std::span<const double> out_grad);

  ParameterList parameters() { return {&embed, &filters, &bias}; }

  Parameter embed;    // chars x char_dim
  Parameter filters;  // filters x (window * char_dim)
  Parameter bias;     // filters

 private:
  std::size_t char_dim_ = 0;
  std::size_t window_ = 0;
  std::size_t filters_ = 0;
};

// Single-direction LSTM. Gate rows are stacked input, forget, output, cell.
class Lstm {
 public:
  struct Cache {
    std::size_t steps = 0;
    bool reverse = false;
    std::vector<double> xh;     // steps x (in + H), in processing order
    std::vector<double> gates;  // steps x 4H, activated
    std::vector<double> cell;   // steps x H
    std::vector<double> tanh_cell;
  };

  Lstm() = default;
  Lstm(const std::string& prefix, std::size_t input_size, std::size_t hidden);

  // Weights Glorot, biases zero except the forget gate at 1.
  void init(std::uint64_t seed);

  std::size_t input_size() const { return input_; }
  std::size_t hidden() const { return hidden_; }

  // x: T x in. Returns T x H in original time order; `reverse` reads t=T..1.
  Tensor forward(const Tensor& x, bool reverse, Cache* cache = nullptr) const;
  // Accumulates parameter gradients, returns d x.
  Tensor backward(const Cache& cache, const Tensor& h_grad);

  ParameterList parameters() { return {&weight, &bias}; }

  Parameter weight;  // 4H x (in + H)
  Parameter bias;    // 4H

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
};

class Blstm {
 public:
  struct Cache {
    Lstm::Cache forward;
    Lstm::Cache backward;
  };

  Blstm() = default;
  Blstm(const std::string& prefix, std::size_t input_size, std::size_t hidden);

  void init(std::uint64_t seed);

  std::size_t input_size() const { return fwd_.input_size(); }
  std::size_t hidden() const { return fwd_.hidden(); }
  std::size_t output_dim() const { return 2 * fwd_.hidden(); }

  // T x 2H: [forward h_t ; backward h_t]. Zero initial states.
  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& out_grad);

  ParameterList parameters();

 private:
  Lstm fwd_;
  Lstm bwd_;
};

// Per-token inputs of one sentence.
struct SentenceInput {
  std::span<const int> words;
  std::vector<std::span<const int>> chars;   // one id run per token
  const ContextualRecord* context = nullptr;  // required when contextual vectors are on

  std::size_t length() const { return words.size(); }
};

struct WordReprConfig {
  std::size_t word_dim = 300;
  bool word_trainable = true;
  std::size_t char_dim = 30;
  std::size_t char_window = 3;
  std::size_t char_filters = 30;
  // Contextual vectors (0 layers = disabled).
  std::size_t context_layers = 0;
  std::size_t context_dim = 0;
  bool context_trainable = true;
  std::vector<double> context_raw_weights;  // empty = zeros (uniform mix)
  double gamma = 1.0;
};

// word embedding (+) char-CNN (+) optional contextual mix, per token.
class WordRepresenter {
 public:
  struct Cache {
    std::vector<int> word_ids;
    std::vector<CharCnn::Cache> chars;
    const ContextualRecord* context = nullptr;
    Tensor raw;  // T x d, before dropout
    DropoutMask mask;
  };

  WordRepresenter() = default;
  WordRepresenter(const WordReprConfig& config, std::size_t vocab_words, std::size_t vocab_chars);

  void init(std::uint64_t seed);
  void set_embeddings(const EmbeddingMatrix& m);

  std::size_t output_dim() const;
  bool contextual() const { return config_.context_layers > 0; }
  const WordReprConfig& config() const { return config_; }

  // Applies input dropout at train time; the undropped matrix stays in the
  // cache.
  Tensor forward(const SentenceInput& input, double dropout_rate, Mode mode, Rng& rng,
                 Cache* cache = nullptr) const;
  // grad w.r.t. the pre-dropout matrix.
  void backward_raw(const Cache& cache, const Tensor& raw_grad);

  ParameterList parameters();

  Parameter word_embed;  // vocab x word_dim
  CharCnn char_cnn;
  Parameter context_weights;  // raw layer weights
  Parameter context_gamma;    // scalar

 private:
  WordReprConfig config_;
};

}  // namespace seqmtl
