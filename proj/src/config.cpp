#include "seqmtl/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace seqmtl {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes") return out = true, true;
  if (v == "false" || v == "0" || v == "no") return out = false, true;
  return false;
}

bool parse_int(const std::string& v, long long& out) {
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && ptr == v.data() + v.size();
}

bool parse_real(const std::string& v, double& out) {
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && ptr == v.data() + v.size();
}

}  // namespace

const std::vector<RunConfig::Key>& RunConfig::keys() {
  using K = Kind;
  static const std::vector<Key> k = {
      {"topology", K::text, "single", "single | embedding_shared | rnn_shared | hierarchical"},
      {"lm_mode", K::text, "none", "none | shared | unshared"},
      {"output_layer", K::text, "crf", "crf | softmax"},
      {"main_task", K::text, "ner", "name of the main task"},
      {"aux_task", K::text, "chunk", "name of the auxiliary task"},
      {"label_scheme", K::text, "bio2", "bio2 | iob1 (converted to bio2 on read)"},
      {"hidden_size", K::integer, "256", "LSTM hidden size per direction"},
      {"char_window", K::integer, "3", "char CNN window (odd)"},
      {"char_filters", K::integer, "30", "char CNN filters"},
      {"char_dim", K::integer, "30", "char embedding size"},
      {"input_dropout", K::real, "0.33", "dropout on token representations"},
      {"blstm_dropout", K::real, "0.5", "dropout on BLSTM outputs"},
      {"glove_dim", K::integer, "300", "word embedding size"},
      {"word_trainable", K::boolean, "true", "update word embeddings"},
      {"elmo_dim", K::integer, "1024", "contextual vector size"},
      {"elmo_mode", K::text, "frozen", "frozen (one selected layer, fixed gamma) | trainable"},
      {"elmo_layer", K::integer, "2", "1-based layer used by the frozen mix"},
      {"gamma", K::real, "1.0", "contextual vector scale"},
      {"lambda", K::real, "0.05", "weight of the language-model objective"},
      {"lm_vocab_size", K::integer, "5000", "most frequent words kept by the LM heads"},
      {"batch_size", K::integer, "16", "sentences per batch"},
      {"lr", K::real, "0.01", "base learning rate"},
      {"decay", K::real, "0.05", "lr = lr / (1 + decay * epoch)"},
      {"clip_norm", K::real, "5.0", "global gradient norm clip (0 disables)"},
      {"epochs", K::integer, "100", "maximum epochs"},
      {"patience", K::integer, "10", "epochs without dev improvement before stopping (0 disables)"},
      {"seed", K::integer, "1", "random seed"},
      {"min_freq", K::integer, "1", "minimum training frequency for a word"},
      {"lowercase", K::boolean, "true", "lowercase words before lookup"},
      {"digits_to_zero", K::boolean, "true", "map digits to 0 before lookup"},
  };
  return k;
}

RunConfig::RunConfig() {
  for (const Key& k : keys()) values_[k.name] = k.default_value;
}

const RunConfig::Key& RunConfig::key(const std::string& name) const {
  for (const Key& k : keys()) {
    if (k.name == name) return k;
  }
  throw Error("unknown config key '" + name + "'");
}

void RunConfig::set(const std::string& name, const std::string& raw) {
  const Key& k = key(name);
  const std::string value = trim(raw);
  bool ok = true;
  switch (k.kind) {
    case Kind::integer: {
      long long v = 0;
      ok = parse_int(value, v);
      break;
    }
    case Kind::real: {
      double v = 0;
      ok = parse_real(value, v);
      break;
    }
    case Kind::boolean: {
      bool v = false;
      ok = parse_bool(value, v);
      break;
    }
    case Kind::text: ok = !value.empty(); break;
  }
  if (!ok) throw Error("config key '" + name + "': invalid value '" + value + "'");
  values_[name] = value;
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(source + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      set(trim(body.substr(0, eq)), body.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  merge_text(ss.str(), path);
}

void RunConfig::merge_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::get(const std::string& name) const {
  key(name);
  return values_.at(name);
}

long long RunConfig::get_int(const std::string& name) const {
  long long v = 0;
  if (key(name).kind != Kind::integer || !parse_int(get(name), v)) {
    throw Error("config key '" + name + "' is not an integer");
  }
  return v;
}

std::size_t RunConfig::get_size(const std::string& name) const {
  const long long v = get_int(name);
  if (v < 0) throw Error("config key '" + name + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

double RunConfig::get_real(const std::string& name) const {
  double v = 0;
  if (key(name).kind != Kind::real || !parse_real(get(name), v)) {
    throw Error("config key '" + name + "' is not a real number");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& name) const {
  bool v = false;
  if (key(name).kind != Kind::boolean || !parse_bool(get(name), v)) {
    throw Error("config key '" + name + "' is not a boolean");
  }
  return v;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const Key& k : keys()) {
    switch (k.kind) {
      case Kind::integer: j[k.name] = get_int(k.name); break;
      case Kind::real: j[k.name] = get_real(k.name); break;
      case Kind::boolean: j[k.name] = get_bool(k.name); break;
      case Kind::text: j[k.name] = get(k.name); break;
    }
  }
  return j;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const Key& k : keys()) out += k.name + " = " + values_.at(k.name) + "\n";
  return out;
}

ModelSpec RunConfig::model_spec(std::size_t context_layers, std::size_t context_dim) const {
  ModelSpec s;
  s.topology = parse_topology(get("topology"));
  s.lm_mode = parse_lm_mode(get("lm_mode"));
  s.output_layer = parse_output_layer(get("output_layer"));
  s.main_task = get("main_task");
  if (s.topology != Topology::single) s.aux_task = get("aux_task");
  s.hidden = get_size("hidden_size");
  s.dropout.input_rate = get_real("input_dropout");
  s.dropout.blstm_output_rate = get_real("blstm_dropout");
  s.lm_vocab_size = get_size("lm_vocab_size");
  s.repr.word_dim = get_size("glove_dim");
  s.repr.word_trainable = get_bool("word_trainable");
  s.repr.char_dim = get_size("char_dim");
  s.repr.char_window = get_size("char_window");
  s.repr.char_filters = get_size("char_filters");
  s.repr.gamma = get_real("gamma");
  if (context_layers > 0) {
    if (context_dim != get_size("elmo_dim")) {
      throw Error("contextual vectors have dimension " + std::to_string(context_dim) + ", elmo_dim is " +
                  get("elmo_dim"));
    }
    s.repr.context_layers = context_layers;
    s.repr.context_dim = context_dim;
    const std::string& mode = get("elmo_mode");
    if (mode == "frozen") {
      const std::size_t layer = get_size("elmo_layer");
      if (layer < 1 || layer > context_layers) {
        throw Error("elmo_layer " + std::to_string(layer) + " outside 1.." + std::to_string(context_layers));
      }
      s.repr.context_raw_weights = frozen_layer_selection(context_layers, layer - 1);
      s.repr.context_trainable = false;
    } else if (mode == "trainable") {
      s.repr.context_trainable = true;
    } else {
      throw Error("elmo_mode must be frozen or trainable");
    }
  }
  s.validate();
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.epochs = static_cast<int>(get_int("epochs"));
  c.batch_size = get_size("batch_size");
  c.base_lr = get_real("lr");
  c.decay = get_real("decay");
  c.lambda = get_real("lambda");
  c.clip_norm = get_real("clip_norm");
  c.seed = static_cast<std::uint64_t>(get_int("seed"));
  c.patience = static_cast<int>(get_int("patience"));
  c.run_config = to_json();
  c.validate();
  return c;
}

VocabOptions RunConfig::vocab_options() const {
  VocabOptions o;
  o.lowercase = get_bool("lowercase");
  o.digits_to_zero = get_bool("digits_to_zero");
  o.min_freq = static_cast<int>(get_int("min_freq"));
  return o;
}

LabelScheme RunConfig::label_scheme() const {
  const std::string& s = get("label_scheme");
  if (s == "bio2") return LabelScheme::bio2;
  if (s == "iob1") return LabelScheme::iob1;
  throw Error("label_scheme must be bio2 or iob1");
}

}  // namespace seqmtl
