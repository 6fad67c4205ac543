#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "seqmtl/corpus.hpp"

namespace seqmtl {

// Generated labelled corpora with a learnable structure: entity names carry
// a class-specific suffix (PER, LOC, ORG) and, in fine-grained mode, a cue
// word before the mention decides the subtype (e.g. PER-actor vs
// PER-politician). Different seeds give mostly disjoint names.
struct SyntheticOptions {
  std::size_t sentences = 50;
  std::uint64_t seed = 1;
  bool fine_types = false;      // 6 fine types instead of 3 coarse ones
  std::size_t min_length = 4;   // tokens
  std::size_t max_length = 10;
  double entity_rate = 0.35;    // chance that a slot starts a mention
  std::size_t name_pool = 0;    // 0: fresh names everywhere; n: reuse n names per class
};

TaggedCorpus synthetic_corpus(const std::string& task, const SyntheticOptions& options, Split split = Split::train);

// "B-PER-actor" -> "B-PER"; "O" stays "O".
std::string coarse_label(const std::string& label);

}  // namespace seqmtl
