#include "seqmtl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "seqmtl/hash.hpp"
#include "seqmtl/tensor.hpp"

namespace seqmtl {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw Error("unknown split '" + std::string(s) + "'");
}

bool TaggedCorpus::has_labels() const {
  return !sentences.empty() && sentences.front().labels.count(task_name) != 0;
}

namespace {

std::vector<std::string_view> split_columns(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    cols.push_back(line.substr(i, j - i));
    i = j;
  }
  return cols;
}

void register_labels(TaggedCorpus& corpus, const LabelSequence& labels) {
  for (const auto& l : labels) {
    if (std::find(corpus.label_set.begin(), corpus.label_set.end(), l) == corpus.label_set.end()) {
      corpus.label_set.push_back(l);
    }
  }
}

}  // namespace

TaggedCorpus parse_conll(std::istream& in, const std::string& task_name,
                         const ConllOptions& options) {
  TaggedCorpus corpus;
  corpus.task_name = task_name;
  corpus.split = options.split;

  Sentence current;
  LabelSequence labels;
  auto flush = [&] {
    if (current.tokens.empty()) return;
    if (options.label_column) {
      if (options.scheme == LabelScheme::iob1) labels = iob1_to_bio2(labels);
      register_labels(corpus, labels);
      current.labels[task_name] = std::move(labels);
    }
    corpus.sentences.push_back(std::move(current));
    current = Sentence{};
    labels.clear();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto cols = split_columns(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols.front().starts_with("-DOCSTART-")) continue;

    if (cols.size() <= options.token_column) {
      throw Error("line " + std::to_string(line_no) + ": expected at least " +
                  std::to_string(options.token_column + 1) + " columns, found " +
                  std::to_string(cols.size()));
    }
    if (options.label_column) {
      const int lc = *options.label_column;
      const long idx = lc >= 0 ? lc : static_cast<long>(cols.size()) + lc;
      const std::size_t needed =
          lc >= 0 ? std::max<std::size_t>(options.token_column, static_cast<std::size_t>(lc)) + 1
                  : std::max<std::size_t>(options.token_column + 2, static_cast<std::size_t>(-lc));
      if (idx < 0 || static_cast<std::size_t>(idx) >= cols.size() ||
          static_cast<std::size_t>(idx) == options.token_column) {
        throw Error("line " + std::to_string(line_no) + ": expected at least " +
                    std::to_string(needed) + " columns, found " + std::to_string(cols.size()));
      }
      labels.emplace_back(cols[static_cast<std::size_t>(idx)]);
      if (options.scheme == LabelScheme::bio2) {
        try {
          parse_label(labels.back());
        } catch (const Error& e) {
          throw Error("line " + std::to_string(line_no) + ": " + e.what());
        }
      }
    }
    if (current.tokens.empty()) current.first_line = line_no;
    current.last_line = line_no;
    current.tokens.emplace_back(cols[options.token_column]);
  }
  flush();
  return corpus;
}

TaggedCorpus parse_conll_text(std::string_view text, const std::string& task_name,
                              const ConllOptions& options) {
  std::istringstream in{std::string(text)};
  return parse_conll(in, task_name, options);
}

TaggedCorpus read_conll_file(const std::string& path, const std::string& task_name,
                             const ConllOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return parse_conll(in, task_name, options);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string write_conll(const TaggedCorpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    const auto it = s.labels.find(corpus.task_name);
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      out += s.tokens[t];
      if (it != s.labels.end()) {
        out += ' ';
        out += it->second[t];
      }
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

TaggedCorpus relabel(const TaggedCorpus& corpus, const std::string& new_task,
                     const std::function<std::string(const std::string&)>& label_fn) {
  TaggedCorpus out;
  out.task_name = new_task;
  out.split = corpus.split;
  for (const auto& s : corpus.sentences) {
    Sentence copy;
    copy.tokens = s.tokens;
    copy.first_line = s.first_line;
    copy.last_line = s.last_line;
    const auto it = s.labels.find(corpus.task_name);
    if (it == s.labels.end()) throw Error("relabel: sentence without " + corpus.task_name + " labels");
    LabelSequence mapped;
    mapped.reserve(it->second.size());
    for (const auto& l : it->second) mapped.push_back(label_fn(l));
    register_labels(out, mapped);
    copy.labels[new_task] = std::move(mapped);
    out.sentences.push_back(std::move(copy));
  }
  return out;
}

TaggedCorpus sample_sentences(const TaggedCorpus& corpus, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(corpus.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(std::min(count, idx.size()));
  std::sort(idx.begin(), idx.end());
  TaggedCorpus out;
  out.task_name = corpus.task_name;
  out.split = corpus.split;
  for (std::size_t i : idx) {
    out.sentences.push_back(corpus.sentences[i]);
    const auto it = corpus.sentences[i].labels.find(corpus.task_name);
    if (it != corpus.sentences[i].labels.end()) register_labels(out, it->second);
  }
  return out;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto c = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    len = std::min(len, word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() : Vocabulary(VocabOptions{}) {}

Vocabulary::Vocabulary(VocabOptions options) : options_(options) {
  for (const char* w : {"<pad>", "<unk>", "<s>", "</s>"}) add_word(w);
  add_char("<pad>");
  add_char("<unk>");
}

std::string Vocabulary::normalize(std::string_view word) const {
  std::string out(word);
  for (char& c : out) {
    const auto u = static_cast<unsigned char>(c);
    if (options_.lowercase && u < 0x80) c = static_cast<char>(std::tolower(u));
    if (options_.digits_to_zero && u < 0x80 && std::isdigit(u)) c = '0';
  }
  return out;
}

int Vocabulary::add_word(const std::string& normalized, std::size_t count) {
  auto [it, inserted] = word_index_.emplace(normalized, static_cast<int>(words_.size()));
  if (inserted) {
    words_.push_back(normalized);
    freq_.push_back(count);
  } else {
    freq_[static_cast<std::size_t>(it->second)] += count;
  }
  return it->second;
}

int Vocabulary::add_char(const std::string& ch) {
  auto [it, inserted] = char_index_.emplace(ch, static_cast<int>(chars_.size()));
  if (inserted) chars_.push_back(ch);
  return it->second;
}

int Vocabulary::add_label(const std::string& task, const std::string& label) {
  auto& index = label_index_[task];
  auto& list = labels_[task];
  auto [it, inserted] = index.emplace(label, static_cast<int>(list.size()));
  if (inserted) list.push_back(label);
  return it->second;
}

int Vocabulary::word_id(std::string_view token) const {
  const auto it = word_index_.find(normalize(token));
  return it == word_index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::char_ids(std::string_view token) const {
  std::vector<int> ids;
  for (const auto& ch : utf8_chars(token)) {
    const auto it = char_index_.find(ch);
    ids.push_back(it == char_index_.end() ? kCharUnk : it->second);
  }
  return ids;
}

int Vocabulary::label_id(const std::string& task, const std::string& label) const {
  const auto t = label_index_.find(task);
  if (t == label_index_.end()) return -1;
  const auto it = t->second.find(label);
  return it == t->second.end() ? -1 : it->second;
}

std::size_t Vocabulary::label_count(const std::string& task) const {
  const auto it = labels_.find(task);
  return it == labels_.end() ? 0 : it->second.size();
}

const std::vector<std::string>& Vocabulary::labels(const std::string& task) const {
  const auto it = labels_.find(task);
  if (it == labels_.end()) throw Error("vocabulary has no labels for task '" + task + "'");
  return it->second;
}

std::vector<std::string> Vocabulary::tasks() const {
  std::vector<std::string> out;
  for (const auto& [task, _] : labels_) out.push_back(task);
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j;
  j["lowercase"] = options_.lowercase;
  j["digits_to_zero"] = options_.digits_to_zero;
  j["min_freq"] = options_.min_freq;
  j["words"] = words_;
  j["frequencies"] = freq_;
  j["chars"] = chars_;
  j["labels"] = labels_;
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  VocabOptions opt;
  opt.lowercase = j.at("lowercase").get<bool>();
  opt.digits_to_zero = j.at("digits_to_zero").get<bool>();
  opt.min_freq = j.at("min_freq").get<int>();
  Vocabulary v(opt);
  const auto words = j.at("words").get<std::vector<std::string>>();
  const auto freq = j.at("frequencies").get<std::vector<std::size_t>>();
  if (words.size() != freq.size() || words.size() < kReservedWords) {
    throw Error("vocabulary record is inconsistent");
  }
  for (std::size_t i = kReservedWords; i < words.size(); ++i) v.add_word(words[i], freq[i]);
  const auto chars = j.at("chars").get<std::vector<std::string>>();
  for (std::size_t i = 2; i < chars.size(); ++i) v.add_char(chars[i]);
  for (const auto& [task, labels] : j.at("labels").items()) {
    for (const auto& l : labels) v.add_label(task, l.get<std::string>());
  }
  return v;
}

std::string Vocabulary::fingerprint() const { return sha256_hex(to_json().dump()); }

Vocabulary build_vocab(const std::vector<const TaggedCorpus*>& corpora,
                       const std::vector<std::string>* pretrained_words,
                       const VocabOptions& options) {
  if (options.min_freq < 1) throw Error("min_freq must be >= 1");
  Vocabulary vocab(options);

  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> counts;
  for (const TaggedCorpus* corpus : corpora) {
    for (const auto& s : corpus->sentences) {
      for (const auto& tok : s.tokens) {
        const std::string w = vocab.normalize(tok);
        if (counts[w]++ == 0) order.push_back(w);
        for (const auto& ch : utf8_chars(tok)) vocab.add_char(ch);
      }
      const auto it = s.labels.find(corpus->task_name);
      if (it != s.labels.end()) {
        for (const auto& l : it->second) vocab.add_label(corpus->task_name, l);
      }
    }
    for (const auto& l : corpus->label_set) vocab.add_label(corpus->task_name, l);
  }
  for (const auto& w : order) {
    const std::size_t n = counts[w];
    if (n >= static_cast<std::size_t>(options.min_freq)) vocab.add_word(w, n);
  }
  if (pretrained_words != nullptr) {
    for (const auto& w : *pretrained_words) vocab.add_word(vocab.normalize(w));
  }
  return vocab;
}

// ------------------------------------------------------------------- batches

std::span<const int> Batch::labels_of(const std::string& task, std::size_t b) const {
  const auto it = label_ids.find(task);
  if (it == label_ids.end()) throw Error("batch carries no labels for task '" + task + "'");
  return {it->second.data() + b * length, length};
}

std::vector<std::vector<std::size_t>> group_by_length(const TaggedCorpus& corpus,
                                                      std::size_t batch_size, Rng& rng) {
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < corpus.size(); ++i) groups[corpus.sentences[i].size()].push_back(i);

  std::vector<std::vector<std::size_t>> batches;
  for (auto& [len, members] : groups) {
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); i += batch_size) {
      const std::size_t end = std::min(members.size(), i + batch_size);
      batches.emplace_back(members.begin() + static_cast<long>(i), members.begin() + static_cast<long>(end));
    }
  }
  rng.shuffle(batches);
  return batches;
}

Batch encode_batch(const TaggedCorpus& corpus, std::span<const std::size_t> indices,
                   const Vocabulary& vocab) {
  Batch batch;
  if (indices.empty()) return batch;
  batch.sentence_indices.assign(indices.begin(), indices.end());
  batch.length = corpus.sentences[indices[0]].size();

  std::vector<std::vector<std::vector<int>>> chars;
  for (std::size_t idx : indices) {
    const Sentence& s = corpus.sentences[idx];
    if (s.size() != batch.length) throw Error("encode_batch: sentences differ in length");
    auto& per_token = chars.emplace_back();
    for (const auto& tok : s.tokens) {
      batch.word_ids.push_back(vocab.word_id(tok));
      per_token.push_back(vocab.char_ids(tok));
      batch.max_word_len = std::max(batch.max_word_len, per_token.back().size());
    }
    batch.context_keys.push_back(sentence_key(s.tokens));
    for (const auto& [task, labels] : s.labels) {
      auto& ids = batch.label_ids[task];
      for (const auto& l : labels) ids.push_back(vocab.label_id(task, l));
    }
  }
  for (auto it = batch.label_ids.begin(); it != batch.label_ids.end();) {
    // Tasks not labelled on every sentence are dropped.
    if (it->second.size() != batch.size() * batch.length) it = batch.label_ids.erase(it);
    else ++it;
  }
  batch.char_ids.assign(batch.size() * batch.length * batch.max_word_len, Vocabulary::kCharPad);
  for (std::size_t b = 0; b < chars.size(); ++b) {
    for (std::size_t t = 0; t < chars[b].size(); ++t) {
      std::copy(chars[b][t].begin(), chars[b][t].end(),
                batch.char_ids.begin() + static_cast<long>((b * batch.length + t) * batch.max_word_len));
    }
  }
  return batch;
}

std::vector<Batch> make_batches(const TaggedCorpus& corpus, const Vocabulary& vocab,
                                std::size_t batch_size, Rng& rng) {
  std::vector<Batch> out;
  for (const auto& indices : group_by_length(corpus, batch_size, rng)) {
    out.push_back(encode_batch(corpus, indices, vocab));
  }
  return out;
}

// --------------------------------------------------------------------- stats

CorpusStats corpus_stats(const TaggedCorpus& corpus) {
  CorpusStats st;
  st.task_name = corpus.task_name;
  st.split = corpus.split;
  st.sentences = corpus.size();
  st.labels = corpus.label_set.size();
  std::set<std::string> words;
  std::size_t entity_tokens = 0;
  std::map<std::string, std::size_t> type_tokens;
  for (const auto& s : corpus.sentences) {
    st.tokens += s.size();
    words.insert(s.tokens.begin(), s.tokens.end());
    const auto it = s.labels.find(corpus.task_name);
    if (it == s.labels.end()) continue;
    for (const Chunk& c : extract_chunks(it->second)) {
      ++st.entities;
      entity_tokens += c.length();
      ++st.per_type[c.type].count;
      type_tokens[c.type] += c.length();
    }
  }
  st.distinct_words = words.size();
  st.no_entities = st.entities == 0;
  if (!st.no_entities) {
    st.mean_entity_length = static_cast<double>(entity_tokens) / static_cast<double>(st.entities);
  }
  for (auto& [type, ts] : st.per_type) {
    ts.mean_length = static_cast<double>(type_tokens[type]) / static_cast<double>(ts.count);
  }
  return st;
}

std::string format_stats(const std::vector<CorpusStats>& stats) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-6s %10s %10s %10s %7s %9s %9s\n", "task", "split",
                "sentences", "tokens", "words", "labels", "entities", "mean_len");
  out += buf;
  for (const auto& s : stats) {
    std::snprintf(buf, sizeof buf, "%-16s %-6s %10zu %10zu %10zu %7zu %9zu %9s\n",
                  s.task_name.c_str(), std::string(to_string(s.split)).c_str(), s.sentences,
                  s.tokens, s.distinct_words, s.labels, s.entities,
                  s.no_entities ? "-" : std::to_string(s.mean_entity_length).substr(0, 6).c_str());
    out += buf;
  }
  for (const auto& s : stats) {
    if (s.per_type.empty()) continue;
    std::snprintf(buf, sizeof buf, "\n%s/%s entity types\n%-24s %9s %9s\n", s.task_name.c_str(),
                  std::string(to_string(s.split)).c_str(), "type", "count", "mean_len");
    out += buf;
    for (const auto& [type, ts] : s.per_type) {
      std::snprintf(buf, sizeof buf, "%-24s %9zu %9.3f\n", type.c_str(), ts.count, ts.mean_length);
      out += buf;
    }
  }
  return out;
}

nlohmann::json stats_to_json(const std::vector<CorpusStats>& stats) {
  nlohmann::json out;
  out["splits"] = nlohmann::json::array();
  out["entity_types"] = nlohmann::json::array();
  for (const auto& s : stats) {
    out["splits"].push_back({{"task", s.task_name},
                             {"split", to_string(s.split)},
                             {"sentences", s.sentences},
                             {"tokens", s.tokens},
                             {"distinct_words", s.distinct_words},
                             {"labels", s.labels},
                             {"entities", s.entities},
                             {"mean_entity_length", s.mean_entity_length},
                             {"no_entities", s.no_entities}});
    for (const auto& [type, ts] : s.per_type) {
      out["entity_types"].push_back({{"task", s.task_name},
                                     {"split", to_string(s.split)},
                                     {"type", type},
                                     {"count", ts.count},
                                     {"mean_length", ts.mean_length}});
    }
  }
  return out;
}

}  // namespace seqmtl
