#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "seqmtl/eval.hpp"
#include "seqmtl/rng.hpp"

namespace seqmtl {

enum class Split { train, dev, test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct Sentence {
  std::vector<std::string> tokens;
  std::map<std::string, LabelSequence> labels;  // task name -> labels
  std::size_t first_line = 0;                   // 1-based, inclusive
  std::size_t last_line = 0;

  std::size_t size() const { return tokens.size(); }
};

struct TaggedCorpus {
  std::string task_name;
  Split split = Split::train;
  std::vector<Sentence> sentences;
  std::vector<std::string> label_set;  // first-appearance order

  std::size_t size() const { return sentences.size(); }
  bool has_labels() const;
};

enum class LabelScheme { bio2, iob1 };

struct ConllOptions {
  std::size_t token_column = 0;
  // Column holding the label; negative counts from the end (-1 = last).
  // std::nullopt reads tokens only.
  std::optional<int> label_column = -1;
  LabelScheme scheme = LabelScheme::bio2;
  Split split = Split::train;
};

// Whitespace-separated columns, one token per line, blank line between
// sentences, "-DOCSTART-" lines skipped. Throws Error with the line number on
// short lines.
TaggedCorpus parse_conll(std::istream& in, const std::string& task_name,
                         const ConllOptions& options = {});
TaggedCorpus parse_conll_text(std::string_view text, const std::string& task_name,
                              const ConllOptions& options = {});
TaggedCorpus read_conll_file(const std::string& path, const std::string& task_name,
                             const ConllOptions& options = {});

// "token label" lines for `corpus.task_name`, blank line after each sentence.
std::string write_conll(const TaggedCorpus& corpus);

// Re-labels every sentence with `label_fn(label)` under a new task name.
TaggedCorpus relabel(const TaggedCorpus& corpus, const std::string& new_task,
                     const std::function<std::string(const std::string&)>& label_fn);

// Seeded sample without replacement, original order kept.
TaggedCorpus sample_sentences(const TaggedCorpus& corpus, std::size_t count, std::uint64_t seed);

// Splits a UTF-8 string into code points (each returned as its byte sequence).
std::vector<std::string> utf8_chars(std::string_view word);

struct VocabOptions {
  bool lowercase = true;
  bool digits_to_zero = true;
  int min_freq = 1;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kStart = 2;
  static constexpr int kEnd = 3;
  static constexpr int kReservedWords = 4;
  static constexpr int kCharPad = 0;
  static constexpr int kCharUnk = 1;

  Vocabulary();
  explicit Vocabulary(VocabOptions options);

  const VocabOptions& options() const { return options_; }

  std::string normalize(std::string_view word) const;

  int add_word(const std::string& normalized, std::size_t count = 0);
  int add_char(const std::string& ch);
  int add_label(const std::string& task, const std::string& label);

  // Raw surface token in, normalized lookup, UNK on miss.
  int word_id(std::string_view token) const;
  std::vector<int> char_ids(std::string_view token) const;
  // -1 when the label is unknown for the task.
  int label_id(const std::string& task, const std::string& label) const;

  std::size_t word_count() const { return words_.size(); }
  std::size_t char_count() const { return chars_.size(); }
  std::size_t label_count(const std::string& task) const;
  bool has_task(const std::string& task) const { return labels_.count(task) != 0; }

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::string>& chars() const { return chars_; }
  const std::vector<std::string>& labels(const std::string& task) const;
  std::vector<std::string> tasks() const;
  // Training-corpus frequency per word id (0 for reserved and pretrained-only).
  const std::vector<std::size_t>& frequencies() const { return freq_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  // SHA-256 over the canonical JSON form.
  std::string fingerprint() const;

 private:
  VocabOptions options_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> word_index_;
  std::vector<std::size_t> freq_;
  std::vector<std::string> chars_;
  std::unordered_map<std::string, int> char_index_;
  std::map<std::string, std::vector<std::string>> labels_;
  std::map<std::string, std::unordered_map<std::string, int>> label_index_;
};

// Words with training frequency >= min_freq, plus every pretrained word, in
// first-appearance order; characters of every training token; label sets
// of every corpus's task.
Vocabulary build_vocab(const std::vector<const TaggedCorpus*>& corpora,
                       const std::vector<std::string>* pretrained_words = nullptr,
                       const VocabOptions& options = {});

// Equal-length minibatch. Matrices are row-major with one row per sentence.
struct Batch {
  std::vector<std::size_t> sentence_indices;
  std::size_t length = 0;         // T, shared by every sentence
  std::size_t max_word_len = 0;
  std::vector<int> word_ids;      // batch x T
  std::vector<int> char_ids;      // batch x T x max_word_len, PAD-filled
  std::map<std::string, std::vector<int>> label_ids;  // task -> batch x T, -1 unknown
  std::vector<std::string> context_keys;              // per sentence

  std::size_t size() const { return sentence_indices.size(); }
  std::span<const int> words_of(std::size_t b) const {
    return {word_ids.data() + b * length, length};
  }
  std::span<const int> chars_of(std::size_t b, std::size_t t) const {
    return {char_ids.data() + (b * length + t) * max_word_len, max_word_len};
  }
  std::span<const int> labels_of(const std::string& task, std::size_t b) const;
};

// Sentences grouped by exact length; each group shuffled, chunked into
// batches of at most batch_size (final partial batch kept), and the batch
// order shuffled.
std::vector<std::vector<std::size_t>> group_by_length(const TaggedCorpus& corpus,
                                                      std::size_t batch_size, Rng& rng);

Batch encode_batch(const TaggedCorpus& corpus, std::span<const std::size_t> indices,
                   const Vocabulary& vocab);

std::vector<Batch> make_batches(const TaggedCorpus& corpus, const Vocabulary& vocab,
                                std::size_t batch_size, Rng& rng);

struct EntityTypeStats {
  std::size_t count = 0;
  double mean_length = 0.0;
};

struct CorpusStats {
  std::string task_name;
  Split split = Split::train;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::size_t distinct_words = 0;
  std::size_t labels = 0;
  std::size_t entities = 0;
  double mean_entity_length = 0.0;
  bool no_entities = true;
  std::map<std::string, EntityTypeStats> per_type;
};

CorpusStats corpus_stats(const TaggedCorpus& corpus);
std::string format_stats(const std::vector<CorpusStats>& stats);
nlohmann::json stats_to_json(const std::vector<CorpusStats>& stats);

}  // namespace seqmtl
