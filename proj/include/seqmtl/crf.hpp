#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "seqmtl/tensor.hpp"

namespace seqmtl {

// Finite stand-in for -inf on transitions into START and out of STOP.
constexpr double kMaskedTransition = -1e4;

// Transition scores over L labels plus virtual START (index L) and STOP
// (index L+1); entry (i, j) scores moving from i to j.
struct CrfPotentials {
  const Tensor& emissions;    // T x L
  const Tensor& transitions;  // (L+2) x (L+2)

  std::size_t steps() const { return emissions.rows(); }
  std::size_t labels() const { return emissions.cols(); }
  std::size_t start() const { return labels(); }
  std::size_t stop() const { return labels() + 1; }
};

double path_score(const CrfPotentials& pot, std::span<const int> path);

// log Z by the forward algorithm in log space.
double log_partition(const CrfPotentials& pot);

struct PathScore {
  std::vector<int> labels;
  double score = 0.0;
  double log_prob = 0.0;
};

// Max-score path; ties go to the lower label id at every backtrack step.
PathScore viterbi(const CrfPotentials& pot);

// -log P(gold) and, when the grad tensors are non-null, d/d emissions and
// d/d transitions (accumulated).
double sequence_nll(const CrfPotentials& pot, std::span<const int> gold, Tensor* emission_grad,
                    Tensor* transition_grad);

struct BruteForceResult {
  double log_partition = 0.0;
  PathScore best;
  std::vector<std::vector<int>> paths;  // lexicographic order
  std::vector<double> scores;
  std::vector<double> probabilities;
};

constexpr std::size_t kBruteForceLimit = 1'000'000;

// Exhaustive enumeration of all L^T paths. Among tied maxima it returns the
// path Viterbi's tie rule selects (smallest when compared from the last
// position backwards). Throws when L^T exceeds kBruteForceLimit.
BruteForceResult brute_force(const CrfPotentials& pot);

// Independent per-position softmax objective over the same emissions, used
// when the CRF is switched off.
double softmax_nll(const Tensor& emissions, std::span<const int> gold, Tensor* emission_grad);
std::vector<int> argmax_decode(const Tensor& emissions);

enum class OutputLayerKind { crf, softmax };

// Emission projection plus transitions.
class CrfLayer {
 public:
  struct Cache {
    Tensor input;            // T x in
    Tensor emission_grad;    // T x L, d loss / d emissions
    Tensor transition_grad;  // (L+2) x (L+2), CRF mode only
  };

  CrfLayer() = default;
  CrfLayer(const std::string& prefix, std::size_t input_dim, std::size_t labels,
           OutputLayerKind kind = OutputLayerKind::crf);

  void init(std::uint64_t seed);

  std::size_t labels() const { return labels_; }
  std::size_t input_dim() const { return input_; }
  OutputLayerKind kind() const { return kind_; }

  Tensor emissions(const Tensor& h) const;

  // Loss for one sentence; when `cache` is given it also records the
  // loss gradient for backward. Throws on gold ids outside [0, L).
  double nll(const Tensor& h, std::span<const int> gold, Cache* cache = nullptr) const;
  // Accumulates `scale` times the parameter gradients, returns d h.
  Tensor backward(const Cache& cache, double scale = 1.0);

  PathScore decode(const Tensor& h) const;

  ParameterList parameters();

  Parameter weight;       // L x in
  Parameter bias;         // L
  Parameter transitions;  // (L+2) x (L+2); absent in softmax mode

 private:
  std::size_t input_ = 0;
  std::size_t labels_ = 0;
  OutputLayerKind kind_ = OutputLayerKind::crf;
};

// Convenience wrappers over a layer.
double crf_nll(const Tensor& h, std::span<const int> gold, const CrfLayer& layer);
PathScore viterbi_decode(const Tensor& h, const CrfLayer& layer);
BruteForceResult brute_force(const Tensor& h, const CrfLayer& layer);

}  // namespace seqmtl
