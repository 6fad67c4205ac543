#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqmtl/model.hpp"
#include "seqmtl/trainer.hpp"

namespace seqmtl {

// Flat key = value run configuration. Every key has a typed default; unknown
// keys and ill-typed values are rejected.
class RunConfig {
 public:
  enum class Kind { integer, real, boolean, text };

  struct Key {
    std::string name;
    Kind kind;
    std::string default_value;
    std::string help;
  };

  static const std::vector<Key>& keys();

  RunConfig();

  // Later sources override earlier ones.
  void set(const std::string& key, const std::string& value);
  // "key = value" lines; '#' starts a comment.
  void merge_text(const std::string& text, const std::string& source = "<config>");
  void merge_file(const std::string& path);
  // "key=value" as given on a command line.
  void merge_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  nlohmann::json to_json() const;
  // Canonical "key = value" text, one line per key in declaration order;
  // merge_text(to_text()) round-trips.
  std::string to_text() const;

  // Contextual layer count and dimension come from the vector store, when
  // one is used (0 layers disables contextual input).
  ModelSpec model_spec(std::size_t context_layers = 0, std::size_t context_dim = 0) const;
  TrainConfig train_config() const;
  VocabOptions vocab_options() const;
  LabelScheme label_scheme() const;

 private:
  const Key& key(const std::string& name) const;
  std::map<std::string, std::string> values_;
};

}  // namespace seqmtl
