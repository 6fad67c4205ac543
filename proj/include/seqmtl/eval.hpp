#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace seqmtl {

using LabelSequence = std::vector<std::string>;

// Half-open token span [start, end) carrying an entity type.
struct Chunk {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Chunk&, const Chunk&) = default;
  friend auto operator<=>(const Chunk&, const Chunk&) = default;
};

struct ParsedLabel {
  char prefix = 'O';  // 'O', 'B' or 'I'
  std::string type;
};

// Throws Error for anything other than "O", "B-<type>" or "I-<type>".
ParsedLabel parse_label(std::string_view label);

// BIO2 chunking with conlleval's lenient rules: an I- tag that cannot
// continue the open chunk starts a new one, and a type change closes it.
std::vector<Chunk> extract_chunks(const LabelSequence& labels);

// IOB1 (B- only between adjacent same-type chunks) to BIO2.
LabelSequence iob1_to_bio2(const LabelSequence& labels);

struct TypeScore {
  std::size_t gold = 0;       // support
  std::size_t predicted = 0;
  std::size_t correct = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_gold_length = 0.0;  // mean token length of gold chunks
};

struct EvalReport {
  std::size_t tokens = 0;
  std::size_t correct_tags = 0;
  std::size_t gold_chunks = 0;
  std::size_t predicted_chunks = 0;
  std::size_t correct_chunks = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::string, TypeScore> per_type;  // sorted by type name
};

// F1 = 2PR/(P+R), 0 when P+R == 0.
double f1_from(double precision, double recall);

// Exact span-and-type matching over aligned gold/predicted sequences.
EvalReport f1_score(const std::vector<LabelSequence>& gold, const std::vector<LabelSequence>& pred);

// conlleval-style text: the "processed ..." header, the overall line and one
// line per type, percentages with two decimals.
std::string format_conlleval(const EvalReport& report);

nlohmann::json to_json(const EvalReport& report);

// Columns "... gold predicted" per token, blank line between sentences (the
// input format of conlleval). Throws with the line number on short lines.
struct ScoredSequences {
  std::vector<LabelSequence> gold;
  std::vector<LabelSequence> predicted;
};
ScoredSequences parse_scored(std::istream& in);
ScoredSequences parse_scored_file(const std::string& path);

}  // namespace seqmtl
