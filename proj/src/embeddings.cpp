#include "seqmtl/embeddings.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seqmtl/hash.hpp"
#include "seqmtl/numeric.hpp"

namespace seqmtl {

EmbeddingMatrix random_embeddings(std::size_t vocab_size, std::size_t dim, Rng& rng) {
  EmbeddingMatrix m;
  m.dim = dim;
  m.matrix = Tensor::matrix(vocab_size, dim);
  const double bound = std::sqrt(3.0 / static_cast<double>(dim));
  for (std::size_t r = 1; r < vocab_size; ++r) {
    for (double& v : m.matrix.row(r)) v = rng.uniform(-bound, bound);
  }
  return m;
}

namespace {

struct PretrainedLine {
  std::string word;
  std::vector<double> values;
};

// Returns false on a blank line.
bool parse_pretrained_line(const std::string& line, std::size_t line_no, PretrainedLine& out) {
  std::string_view rest(line);
  while (!rest.empty() && (rest.back() == '\r' || rest.back() == ' ' || rest.back() == '\n')) {
    rest.remove_suffix(1);
  }
  if (rest.empty()) return false;
  const auto sp = rest.find(' ');
  out.word = std::string(rest.substr(0, sp));
  out.values.clear();
  if (sp == std::string_view::npos) return true;
  rest.remove_prefix(sp + 1);
  while (!rest.empty()) {
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    if (rest.empty()) break;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
    if (ec != std::errc() || (ptr != rest.data() + rest.size() && *ptr != ' ')) {
      throw Error("pretrained embeddings line " + std::to_string(line_no) + ": unreadable float");
    }
    out.values.push_back(v);
    rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
  }
  return true;
}

template <typename Fn>
void for_each_pretrained(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  PretrainedLine entry;
  while (std::getline(in, line)) {
    ++line_no;
    if (!parse_pretrained_line(line, line_no, entry)) continue;
    if (entry.values.empty()) {
      throw Error("pretrained embeddings line " + std::to_string(line_no) + ": no vector values");
    }
    if (dim == 0) dim = entry.values.size();
    if (entry.values.size() != dim) {
      throw Error("pretrained embeddings line " + std::to_string(line_no) + ": dimension " +
                  std::to_string(entry.values.size()) + " differs from " + std::to_string(dim));
    }
    fn(entry);
  }
}

}  // namespace

std::vector<std::string> read_pretrained_words(const std::string& path) {
  std::vector<std::string> words;
  for_each_pretrained(path, [&](const PretrainedLine& e) { words.push_back(e.word); });
  return words;
}

EmbeddingMatrix load_pretrained(const std::string& path, const Vocabulary& vocab, Rng& rng) {
  std::vector<PretrainedLine> entries;
  for_each_pretrained(path, [&](const PretrainedLine& e) { entries.push_back(e); });
  if (entries.empty()) throw Error("pretrained embeddings file " + path + " is empty");

  EmbeddingMatrix m = random_embeddings(vocab.word_count(), entries.front().values.size(), rng);
  std::vector<bool> filled(vocab.word_count(), false);
  for (const auto& e : entries) {
    const int id = vocab.word_id(e.word);
    if (id < Vocabulary::kReservedWords || filled[static_cast<std::size_t>(id)]) continue;
    filled[static_cast<std::size_t>(id)] = true;
    std::copy(e.values.begin(), e.values.end(), m.matrix.row(static_cast<std::size_t>(id)).begin());
    ++m.covered;
  }
  return m;
}

// ------------------------------------------------------------ contextual store

const ContextualRecord* ContextualVectorStore::find(const std::string& key) const {
  const auto it = records_.find(key);
  return it == records_.end() ? nullptr : &it->second;
}

const ContextualRecord& ContextualVectorStore::lookup(const std::string& key,
                                                      const std::string& sentence_text) const {
  if (const ContextualRecord* r = find(key)) return *r;
  throw Error("contextual vectors missing for sentence '" + sentence_text + "' (key " + key + ")");
}

void ContextualVectorStore::insert(const std::string& key, ContextualRecord record,
                                   std::size_t record_index) {
  const std::string where = "contextual record " + std::to_string(record_index);
  if (record.tokens == 0 || record.layers == 0 || record.dim == 0) {
    throw Error(where + ": zero-sized record");
  }
  if (record.values.size() != record.tokens * record.layers * record.dim) {
    throw Error(where + ": expected " + std::to_string(record.tokens * record.layers * record.dim) +
                " values, found " + std::to_string(record.values.size()));
  }
  if (records_.empty()) {
    layers_ = record.layers;
    dim_ = record.dim;
  } else if (record.layers != layers_ || record.dim != dim_) {
    throw Error(where + ": layer_count/dim " + std::to_string(record.layers) + "/" +
                std::to_string(record.dim) + " inconsistent with store " + std::to_string(layers_) +
                "/" + std::to_string(dim_));
  }
  if (!records_.emplace(key, std::move(record)).second) {
    throw Error(where + ": duplicate key " + key);
  }
}

void ContextualVectorStore::merge(const ContextualVectorStore& other) {
  std::size_t i = 0;
  for (const auto& [key, rec] : other.records_) insert(key, rec, i++);
}

namespace {

std::uint32_t read_u32(std::istream& in, bool& ok) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  ok = static_cast<bool>(in);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void flatten(const nlohmann::json& j, std::vector<double>& out) {
  if (j.is_array()) {
    for (const auto& e : j) flatten(e, out);
  } else {
    out.push_back(j.get<double>());
  }
}

ContextualVectorStore load_jsonl(std::istream& in) {
  ContextualVectorStore store;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "contextual record " + std::to_string(index);
    try {
      const auto j = nlohmann::json::parse(line);
      std::string key;
      if (j.contains("key")) {
        key = j.at("key").get<std::string>();
      } else {
        key = sentence_key(j.at("tokens").get<std::vector<std::string>>());
      }
      ContextualRecord rec;
      rec.tokens = j.at("token_count").get<std::size_t>();
      rec.layers = j.at("layer_count").get<std::size_t>();
      rec.dim = j.at("dim").get<std::size_t>();
      flatten(j.at("values"), rec.values);
      store.insert(key, std::move(rec), index);
    } catch (const nlohmann::json::exception& e) {
      throw Error(where + ": malformed (" + e.what() + ")");
    }
    ++index;
  }
  return store;
}

ContextualVectorStore load_binary(std::istream& in) {
  ContextualVectorStore store;
  std::size_t index = 0;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::string where = "contextual record " + std::to_string(index);
    bool ok = false;
    const std::uint32_t key_len = read_u32(in, ok);
    if (!ok || key_len == 0 || key_len > 4096) throw Error(where + ": malformed key length");
    std::string key(key_len, '\0');
    in.read(key.data(), key_len);
    ContextualRecord rec;
    bool ok1, ok2, ok3;
    rec.tokens = read_u32(in, ok1);
    rec.layers = read_u32(in, ok2);
    rec.dim = read_u32(in, ok3);
    if (!in || !ok1 || !ok2 || !ok3) throw Error(where + ": truncated header");
    const std::size_t n = rec.tokens * rec.layers * rec.dim;
    rec.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t bits = read_u32(in, ok);
      if (!ok) throw Error(where + ": truncated values");
      rec.values[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    store.insert(key, std::move(rec), index);
    ++index;
  }
  return store;
}

}  // namespace

ContextualVectorStore load_contextual_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  int c;
  while ((c = in.peek()) == ' ' || c == '\n' || c == '\r' || c == '\t') in.get();
  try {
    return c == '{' ? load_jsonl(in) : load_binary(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

void save_contextual_store_binary(
    const std::string& path, const std::vector<std::pair<std::string, ContextualRecord>>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const auto& [key, rec] : records) {
    write_u32(out, static_cast<std::uint32_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    write_u32(out, static_cast<std::uint32_t>(rec.tokens));
    write_u32(out, static_cast<std::uint32_t>(rec.layers));
    write_u32(out, static_cast<std::uint32_t>(rec.dim));
    for (double v : rec.values) write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

// ------------------------------------------------------------------- ELMo mix

ElmoMix elmo_mix(std::span<const double> raw_weights, double gamma) {
  return {softmax(raw_weights), gamma};
}

Tensor elmo_combine(const ContextualRecord& layers, std::span<const double> raw_weights,
                    double gamma) {
  if (raw_weights.size() != layers.layers) {
    throw Error("elmo_combine: " + std::to_string(raw_weights.size()) + " weights for " +
                std::to_string(layers.layers) + " layers");
  }
  const auto s = softmax(raw_weights);
  Tensor out = Tensor::matrix(layers.tokens, layers.dim);
  for (std::size_t t = 0; t < layers.tokens; ++t) {
    auto row = out.row(t);
    for (std::size_t l = 0; l < layers.layers; ++l) {
      const double* h = layers.at(l, t);
      for (std::size_t k = 0; k < layers.dim; ++k) row[k] += s[l] * h[k];
    }
    for (double& v : row) v *= gamma;
  }
  return out;
}

void elmo_combine_backward(const ContextualRecord& layers, std::span<const double> raw_weights,
                           double gamma, const Tensor& out_grad, std::span<double> raw_grad,
                           double& gamma_grad) {
  const auto s = softmax(raw_weights);
  std::vector<double> ds(layers.layers, 0.0);  // d out / d s_l, gamma included
  double mixed_dot = 0.0;                      // sum_t g_t . (sum_l s_l h_tl)
  for (std::size_t l = 0; l < layers.layers; ++l) {
    double acc = 0.0;
    for (std::size_t t = 0; t < layers.tokens; ++t) {
      const double* h = layers.at(l, t);
      const auto g = out_grad.row(t);
      for (std::size_t k = 0; k < layers.dim; ++k) acc += g[k] * h[k];
    }
    ds[l] = gamma * acc;
    mixed_dot += s[l] * acc;
  }
  gamma_grad += mixed_dot;
  double weighted = 0.0;
  for (std::size_t l = 0; l < layers.layers; ++l) weighted += s[l] * ds[l];
  for (std::size_t l = 0; l < layers.layers; ++l) raw_grad[l] += s[l] * (ds[l] - weighted);
}

std::vector<double> frozen_layer_selection(std::size_t layers, std::size_t selected) {
  if (selected >= layers) throw Error("selected layer out of range");
  std::vector<double> raw(layers, -1000.0);
  raw[selected] = 0.0;
  return raw;
}

}  // namespace seqmtl
