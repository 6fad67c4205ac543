#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "seqmtl/model.hpp"
#include "seqmtl/numeric.hpp"

namespace seqmtl {

// Forward algorithm and Viterbi against exhaustive enumeration on random
// potentials, T in [1, 6] and L in [2, 5].
struct CrfExactnessReport {
  std::size_t instances = 0;
  double max_log_partition_error = 0.0;
  double max_best_score_error = 0.0;   // Viterbi score vs brute-force maximum
  std::size_t path_mismatches = 0;     // among instances with a unique maximum
  double seconds = 0.0;
};

CrfExactnessReport crf_exactness(std::size_t instances, std::uint64_t seed);

// Tiny model of the given layout on one batch of two T = 4 sentences,
// train-mode dropout with a fixed mask stream, both tasks' losses summed.
struct GradCase {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

struct GradCaseSpec {
  std::string name;
  Topology topology = Topology::single;
  LmMode lm_mode = LmMode::none;
  OutputLayerKind output_layer = OutputLayerKind::crf;
  bool contextual = false;  // trainable two-layer mix
};

GradCase run_grad_case(const GradCaseSpec& spec, std::uint64_t seed, double eps = 1e-5);

// Every buildable topology x LM mode; with `extras`, also the softmax
// output layer and the contextual mix.
std::vector<GradCaseSpec> grad_case_menu(bool extras = true);

// Each "<name>.txt" in `dir` is scored and compared with "<name>.expected".
struct FixtureResult {
  std::string name;
  std::string expected;
  std::string actual;
  bool match = false;
};

std::vector<FixtureResult> scorer_fixtures(const std::string& dir);

}  // namespace seqmtl
