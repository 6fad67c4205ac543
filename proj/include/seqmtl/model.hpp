#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "seqmtl/corpus.hpp"
#include "seqmtl/crf.hpp"
#include "seqmtl/embeddings.hpp"
#include "seqmtl/encoders.hpp"
#include "seqmtl/lm.hpp"
#include "seqmtl/rng.hpp"

namespace seqmtl {

enum class Topology { single, embedding_shared, rnn_shared, hierarchical };
enum class LmMode { none, shared, unshared };
enum class TaskRole { main, auxiliary };

std::string_view to_string(Topology t);
std::string_view to_string(LmMode m);
std::string_view to_string(TaskRole r);
std::string_view to_string(OutputLayerKind k);
Topology parse_topology(std::string_view s);
LmMode parse_lm_mode(std::string_view s);
OutputLayerKind parse_output_layer(std::string_view s);

struct ModelSpec {
  Topology topology = Topology::single;
  std::string main_task = "main";
  std::optional<std::string> aux_task;
  LmMode lm_mode = LmMode::none;
  OutputLayerKind output_layer = OutputLayerKind::crf;
  WordReprConfig repr;
  std::size_t hidden = 256;
  DropoutSpec dropout;
  std::size_t lm_vocab_size = LmVocabulary::kDefaultSize;

  // Throws Error naming the violated constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

// Every topology x LM-mode pair that passes validate().
std::vector<std::pair<Topology, LmMode>> buildable_combinations();

struct ForwardOptions {
  Mode mode = Mode::eval;
  bool compute_loss = true;
  bool accumulate_grad = false;  // requires compute_loss
  double lambda = 0.05;          // weight of the LM objective
};

struct TaskOutput {
  std::vector<Tensor> hidden;   // per sentence: the tensor the task's output layer reads
  double task_loss = 0.0;
  double lm_forward = 0.0;
  double lm_backward = 0.0;
  double loss = 0.0;            // task_loss + lambda * (lm_forward + lm_backward)
  bool has_lm = false;
};

class Model {
 public:
  // Parameters are initialized from `seed`, one derived stream per parameter
  // name. `pretrained` replaces the word embedding matrix when given.
  static Model build(const ModelSpec& spec, const Vocabulary& vocab, std::uint64_t seed,
                     const EmbeddingMatrix* pretrained = nullptr);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelSpec& spec() const { return spec_; }
  const Vocabulary& vocab() const { return vocab_; }
  const LmVocabulary& lm_vocab() const { return lm_vocab_; }

  std::string task_name(TaskRole role) const;
  bool has_task(TaskRole role) const;
  std::size_t repr_dim() const { return repr_.output_dim(); }
  // Input width of the BLSTM feeding the task's output layer.
  std::size_t level_input_dim(TaskRole role) const;
  std::size_t blstm_count() const;
  std::size_t output_layer_count() const { return aux_crf_ ? 2 : 1; }
  std::size_t lm_head_count() const;
  // True when the task's batches carry the LM objective.
  bool lm_applies(TaskRole role) const { return lm_head(role) != nullptr; }

  // Needed when contextual vectors are enabled; not owned.
  void set_context_store(const ContextualVectorStore* store) { context_ = store; }

  ParameterList parameters();
  std::size_t parameter_count();
  Parameter* find_parameter(const std::string& name);

  // Runs the task over a batch. In train mode dropout masks are drawn from
  // `rng`. With accumulate_grad set, the gradient of the summed loss is added
  // to each parameter's grad.
  TaskOutput forward_task(const Batch& batch, TaskRole role, const ForwardOptions& options, Rng& rng);

  std::vector<std::vector<int>> predict(const Batch& batch, TaskRole role);
  // Decoded label strings per sentence of `corpus`, in corpus order.
  std::vector<LabelSequence> predict_corpus(const TaggedCorpus& corpus, TaskRole role,
                                            std::size_t batch_size = 64);

  CrfLayer& output_layer(TaskRole role);
  WordRepresenter& representer() { return repr_; }

 private:
  Model() = default;

  struct SentenceState;

  const LmHead* lm_head(TaskRole role) const;
  LmHead* lm_head(TaskRole role);
  Blstm* task_blstm(TaskRole role);
  SentenceInput sentence_input(const Batch& batch, std::size_t b,
                               std::vector<std::span<const int>>& chars) const;
  void check_role(TaskRole role) const;

  ModelSpec spec_;
  Vocabulary vocab_;
  LmVocabulary lm_vocab_;
  WordRepresenter repr_;
  std::unique_ptr<Blstm> main_blstm_;    // also the shared BLSTM of rnn_shared
  std::unique_ptr<Blstm> aux_blstm_;
  std::unique_ptr<CrfLayer> main_crf_;
  std::unique_ptr<CrfLayer> aux_crf_;
  std::unique_ptr<LmHead> shared_lm_;
  std::unique_ptr<LmHead> main_lm_;
  std::unique_ptr<LmHead> aux_lm_;
  const ContextualVectorStore* context_ = nullptr;
};

}  // namespace seqmtl
