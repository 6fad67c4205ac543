#include "seqmtl/model.hpp"

#include <algorithm>

#include "seqmtl/kernels.hpp"

namespace seqmtl {

std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::single: return "single";
    case Topology::embedding_shared: return "embedding_shared";
    case Topology::rnn_shared: return "rnn_shared";
    case Topology::hierarchical: return "hierarchical";
  }
  return "?";
}

std::string_view to_string(LmMode m) {
  switch (m) {
    case LmMode::none: return "none";
    case LmMode::shared: return "shared";
    case LmMode::unshared: return "unshared";
  }
  return "?";
}

std::string_view to_string(TaskRole r) { return r == TaskRole::main ? "main" : "auxiliary"; }

std::string_view to_string(OutputLayerKind k) { return k == OutputLayerKind::crf ? "crf" : "softmax"; }

Topology parse_topology(std::string_view s) {
  for (Topology t : {Topology::single, Topology::embedding_shared, Topology::rnn_shared,
                     Topology::hierarchical}) {
    if (s == to_string(t)) return t;
  }
  throw Error("unknown topology '" + std::string(s) +
              "' (expected single, embedding_shared, rnn_shared or hierarchical)");
}

LmMode parse_lm_mode(std::string_view s) {
  for (LmMode m : {LmMode::none, LmMode::shared, LmMode::unshared}) {
    if (s == to_string(m)) return m;
  }
  throw Error("unknown lm_mode '" + std::string(s) + "' (expected none, shared or unshared)");
}

OutputLayerKind parse_output_layer(std::string_view s) {
  if (s == "crf") return OutputLayerKind::crf;
  if (s == "softmax") return OutputLayerKind::softmax;
  throw Error("unknown output layer '" + std::string(s) + "' (expected crf or softmax)");
}

// ----------------------------------------------------------------- ModelSpec

void ModelSpec::validate() const {
  if (main_task.empty()) throw Error("model spec: main task name is empty");
  if (topology == Topology::single) {
    if (aux_task) throw Error("model spec: single topology takes no auxiliary task");
    if (lm_mode == LmMode::unshared) throw Error("model spec: unshared LM requires a multi-task topology");
  } else {
    if (!aux_task || aux_task->empty()) {
      throw Error("model spec: topology " + std::string(to_string(topology)) + " requires an auxiliary task");
    }
    if (*aux_task == main_task) throw Error("model spec: auxiliary and main task names must differ");
  }
  if (hidden == 0) throw Error("model spec: hidden size must be positive");
  if (repr.word_dim == 0) throw Error("model spec: word dimension must be positive");
  if (repr.char_filters == 0 || repr.char_dim == 0) throw Error("model spec: char CNN sizes must be positive");
  if (repr.char_window % 2 == 0) throw Error("model spec: char window must be odd");
  for (double r : {dropout.input_rate, dropout.blstm_output_rate}) {
    if (r < 0.0 || r >= 1.0) throw Error("model spec: dropout rates must lie in [0, 1)");
  }
  if (repr.context_layers > 0 && repr.context_dim == 0) {
    throw Error("model spec: contextual vectors need a nonzero dimension");
  }
  if (!repr.context_raw_weights.empty() && repr.context_raw_weights.size() != repr.context_layers) {
    throw Error("model spec: contextual mix weights do not match the layer count");
  }
  if (lm_mode != LmMode::none && lm_vocab_size == 0) {
    throw Error("model spec: LM vocabulary size must be positive");
  }
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json j;
  j["topology"] = to_string(topology);
  j["main_task"] = main_task;
  j["aux_task"] = aux_task ? nlohmann::json(*aux_task) : nlohmann::json(nullptr);
  j["lm_mode"] = to_string(lm_mode);
  j["output_layer"] = to_string(output_layer);
  j["hidden"] = hidden;
  j["input_dropout"] = dropout.input_rate;
  j["blstm_dropout"] = dropout.blstm_output_rate;
  j["lm_vocab_size"] = lm_vocab_size;
  j["repr"] = {{"word_dim", repr.word_dim},
               {"word_trainable", repr.word_trainable},
               {"char_dim", repr.char_dim},
               {"char_window", repr.char_window},
               {"char_filters", repr.char_filters},
               {"context_layers", repr.context_layers},
               {"context_dim", repr.context_dim},
               {"context_trainable", repr.context_trainable},
               {"context_raw_weights", repr.context_raw_weights},
               {"gamma", repr.gamma}};
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.topology = parse_topology(j.at("topology").get<std::string>());
  s.main_task = j.at("main_task").get<std::string>();
  if (!j.at("aux_task").is_null()) s.aux_task = j.at("aux_task").get<std::string>();
  s.lm_mode = parse_lm_mode(j.at("lm_mode").get<std::string>());
  s.output_layer = parse_output_layer(j.at("output_layer").get<std::string>());
  s.hidden = j.at("hidden").get<std::size_t>();
  s.dropout.input_rate = j.at("input_dropout").get<double>();
  s.dropout.blstm_output_rate = j.at("blstm_dropout").get<double>();
  s.lm_vocab_size = j.at("lm_vocab_size").get<std::size_t>();
  const auto& r = j.at("repr");
  s.repr.word_dim = r.at("word_dim").get<std::size_t>();
  s.repr.word_trainable = r.at("word_trainable").get<bool>();
  s.repr.char_dim = r.at("char_dim").get<std::size_t>();
  s.repr.char_window = r.at("char_window").get<std::size_t>();
  s.repr.char_filters = r.at("char_filters").get<std::size_t>();
  s.repr.context_layers = r.at("context_layers").get<std::size_t>();
  s.repr.context_dim = r.at("context_dim").get<std::size_t>();
  s.repr.context_trainable = r.at("context_trainable").get<bool>();
  s.repr.context_raw_weights = r.at("context_raw_weights").get<std::vector<double>>();
  s.repr.gamma = r.at("gamma").get<double>();
  s.validate();
  return s;
}

std::vector<std::pair<Topology, LmMode>> buildable_combinations() {
  std::vector<std::pair<Topology, LmMode>> out;
  for (Topology t : {Topology::single, Topology::embedding_shared, Topology::rnn_shared,
                     Topology::hierarchical}) {
    for (LmMode m : {LmMode::none, LmMode::shared, LmMode::unshared}) {
      if (t == Topology::single && m == LmMode::unshared) continue;
      out.emplace_back(t, m);
    }
  }
  return out;
}

// --------------------------------------------------------------------- Model

Model Model::build(const ModelSpec& spec, const Vocabulary& vocab, std::uint64_t seed,
                   const EmbeddingMatrix* pretrained) {
  spec.validate();
  if (!vocab.has_task(spec.main_task)) throw Error("vocabulary has no labels for task " + spec.main_task);
  if (spec.aux_task && !vocab.has_task(*spec.aux_task)) {
    throw Error("vocabulary has no labels for task " + *spec.aux_task);
  }
  Model m;
  m.spec_ = spec;
  m.vocab_ = vocab;
  m.repr_ = WordRepresenter(spec.repr, vocab.word_count(), vocab.char_count());
  m.repr_.init(seed);
  if (pretrained != nullptr) m.repr_.set_embeddings(*pretrained);

  const std::size_t d = m.repr_.output_dim();
  const std::size_t H = spec.hidden;
  switch (spec.topology) {
    case Topology::single:
      m.main_blstm_ = std::make_unique<Blstm>("main.blstm", d, H);
      break;
    case Topology::rnn_shared:
      m.main_blstm_ = std::make_unique<Blstm>("shared.blstm", d, H);
      break;
    case Topology::embedding_shared:
      m.main_blstm_ = std::make_unique<Blstm>("main.blstm", d, H);
      m.aux_blstm_ = std::make_unique<Blstm>("aux.blstm", d, H);
      break;
    case Topology::hierarchical:
      m.aux_blstm_ = std::make_unique<Blstm>("aux.blstm", d, H);
      m.main_blstm_ = std::make_unique<Blstm>("main.blstm", d + 2 * H, H);
      break;
  }
  m.main_crf_ = std::make_unique<CrfLayer>("main.crf", 2 * H, vocab.label_count(spec.main_task),
                                           spec.output_layer);
  if (spec.aux_task) {
    m.aux_crf_ = std::make_unique<CrfLayer>("aux.crf", 2 * H, vocab.label_count(*spec.aux_task),
                                            spec.output_layer);
  }
  if (spec.lm_mode != LmMode::none) {
    m.lm_vocab_ = LmVocabulary(vocab, spec.lm_vocab_size);
    const std::size_t V = m.lm_vocab_.size();
    if (spec.lm_mode == LmMode::shared) {
      m.shared_lm_ = std::make_unique<LmHead>("lm", H, V);
    } else {
      m.main_lm_ = std::make_unique<LmHead>("main.lm", H, V);
      m.aux_lm_ = std::make_unique<LmHead>("aux.lm", H, V);
    }
  }
  for (Blstm* b : {m.main_blstm_.get(), m.aux_blstm_.get()}) {
    if (b) b->init(seed);
  }
  for (CrfLayer* c : {m.main_crf_.get(), m.aux_crf_.get()}) {
    if (c) c->init(seed);
  }
  for (LmHead* h : {m.shared_lm_.get(), m.main_lm_.get(), m.aux_lm_.get()}) {
    if (h) h->init(seed);
  }
  return m;
}

std::string Model::task_name(TaskRole role) const {
  check_role(role);
  return role == TaskRole::main ? spec_.main_task : *spec_.aux_task;
}

bool Model::has_task(TaskRole role) const { return role == TaskRole::main || aux_crf_ != nullptr; }

void Model::check_role(TaskRole role) const {
  if (!has_task(role)) {
    throw Error("model with topology " + std::string(to_string(spec_.topology)) +
                " has no auxiliary task");
  }
}

std::size_t Model::level_input_dim(TaskRole role) const {
  check_role(role);
  if (spec_.topology == Topology::hierarchical && role == TaskRole::main) return main_blstm_->input_size();
  return repr_.output_dim();
}

std::size_t Model::blstm_count() const { return (main_blstm_ ? 1 : 0) + (aux_blstm_ ? 1 : 0); }

std::size_t Model::lm_head_count() const {
  return (shared_lm_ ? 1 : 0) + (main_lm_ ? 1 : 0) + (aux_lm_ ? 1 : 0);
}

const LmHead* Model::lm_head(TaskRole role) const {
  if (!has_task(role)) return nullptr;
  switch (spec_.lm_mode) {
    case LmMode::none: return nullptr;
    case LmMode::shared:
      // Hierarchical: the single head sits on the low (auxiliary) level.
      if (spec_.topology == Topology::hierarchical && role == TaskRole::main) return nullptr;
      return shared_lm_.get();
    case LmMode::unshared: return role == TaskRole::main ? main_lm_.get() : aux_lm_.get();
  }
  return nullptr;
}

LmHead* Model::lm_head(TaskRole role) {
  return const_cast<LmHead*>(static_cast<const Model*>(this)->lm_head(role));
}

Blstm* Model::task_blstm(TaskRole role) {
  if (role == TaskRole::auxiliary && aux_blstm_) return aux_blstm_.get();
  return main_blstm_.get();
}

CrfLayer& Model::output_layer(TaskRole role) {
  check_role(role);
  return role == TaskRole::main ? *main_crf_ : *aux_crf_;
}

ParameterList Model::parameters() {
  ParameterList out = repr_.parameters();
  auto append = [&](ParameterList ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  if (spec_.topology == Topology::hierarchical) {
    append(aux_blstm_->parameters());
    append(main_blstm_->parameters());
  } else {
    append(main_blstm_->parameters());
    if (aux_blstm_) append(aux_blstm_->parameters());
  }
  append(main_crf_->parameters());
  if (aux_crf_) append(aux_crf_->parameters());
  for (LmHead* h : {shared_lm_.get(), main_lm_.get(), aux_lm_.get()}) {
    if (h) append(h->parameters());
  }
  return out;
}

std::size_t Model::parameter_count() { return scalar_count(parameters()); }

Parameter* Model::find_parameter(const std::string& name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

SentenceInput Model::sentence_input(const Batch& batch, std::size_t b,
                                    std::vector<std::span<const int>>& chars) const {
  chars.clear();
  for (std::size_t t = 0; t < batch.length; ++t) chars.push_back(batch.chars_of(b, t));
  SentenceInput in{batch.words_of(b), chars, nullptr};
  if (repr_.contextual()) {
    if (context_ == nullptr) throw Error("model uses contextual vectors but no store is attached");
    in.context = &context_->lookup(batch.context_keys.at(b));
  }
  return in;
}

TaskOutput Model::forward_task(const Batch& batch, TaskRole role, const ForwardOptions& options, Rng& rng) {
  check_role(role);
  if (options.accumulate_grad && !options.compute_loss) {
    throw Error("forward_task: gradients need the loss");
  }
  if (options.lambda < 0.0) throw Error("lambda must be non-negative");
  const std::string task = task_name(role);
  if (options.compute_loss && batch.label_ids.count(task) == 0) {
    throw Error("batch carries no gold labels for task " + task);
  }
  CrfLayer& crf = output_layer(role);
  LmHead* head = lm_head(role);
  const bool stacked = spec_.topology == Topology::hierarchical && role == TaskRole::main;
  Blstm* blstm = task_blstm(role);
  const std::size_t H = spec_.hidden;
  const std::size_t d = repr_.output_dim();
  const auto& k = kernels::active();

  TaskOutput out;
  out.has_lm = head != nullptr && options.compute_loss;
  std::vector<std::span<const int>> chars;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SentenceInput input = sentence_input(batch, b, chars);
    const std::size_t T = input.length();
    WordRepresenter::Cache repr_cache;
    const Tensor x = repr_.forward(input, spec_.dropout.input_rate, options.mode, rng, &repr_cache);

    Blstm::Cache low_cache, top_cache;
    DropoutMask z_mask;
    Tensor h;
    if (stacked) {
      const Tensor h_aux = aux_blstm_->forward(x, &low_cache);
      Tensor z = Tensor::matrix(T, d + 2 * H);
      for (std::size_t t = 0; t < T; ++t) {
        auto row = z.row(t);
        std::copy(repr_cache.raw.row(t).begin(), repr_cache.raw.row(t).end(), row.begin());
        std::copy(h_aux.row(t).begin(), h_aux.row(t).end(), row.begin() + static_cast<long>(d));
      }
      z_mask = DropoutMask(z.size(), spec_.dropout.input_rate, options.mode, rng);
      z_mask.apply(z.values());
      h = main_blstm_->forward(z, &top_cache);
    } else {
      h = blstm->forward(x, &top_cache);
    }
    const DropoutMask h_mask(h.size(), spec_.dropout.blstm_output_rate, options.mode, rng);
    h_mask.apply(h.values());

    if (options.compute_loss) {
      const auto gold = batch.labels_of(task, b);
      for (std::size_t t = 0; t < gold.size(); ++t) {
        if (gold[t] < 0) {
          throw Error("sentence " + std::to_string(batch.sentence_indices[b]) + " has a label unknown to task " + task);
        }
      }
      CrfLayer::Cache crf_cache;
      out.task_loss += crf.nll(h, gold, options.accumulate_grad ? &crf_cache : nullptr);
      LmHead::Cache lm_cache;
      if (head != nullptr) {
        const auto lm_ids = lm_vocab_.map(input.words);
        const auto [f, bw] = head->losses(h, lm_ids, options.accumulate_grad ? &lm_cache : nullptr);
        out.lm_forward += f;
        out.lm_backward += bw;
      }
      if (options.accumulate_grad) {
        Tensor dh = crf.backward(crf_cache, 1.0);
        if (head != nullptr) {
          const Tensor dlm = head->backward(lm_cache, options.lambda);
          k.axpy(1.0, dlm.data(), dh.data(), dh.size());
        }
        h_mask.backward(dh.values());
        if (stacked) {
          Tensor dz = main_blstm_->backward(top_cache, dh);
          z_mask.backward(dz.values());
          Tensor d_raw = Tensor::matrix(T, d);
          Tensor d_aux = Tensor::matrix(T, 2 * H);
          for (std::size_t t = 0; t < T; ++t) {
            const auto row = dz.row(t);
            std::copy_n(row.begin(), d, d_raw.row(t).begin());
            std::copy_n(row.begin() + static_cast<long>(d), 2 * H, d_aux.row(t).begin());
          }
          Tensor dx = aux_blstm_->backward(low_cache, d_aux);
          repr_cache.mask.backward(dx.values());
          k.axpy(1.0, dx.data(), d_raw.data(), d_raw.size());
          repr_.backward_raw(repr_cache, d_raw);
        } else {
          Tensor dx = blstm->backward(top_cache, dh);
          repr_cache.mask.backward(dx.values());
          repr_.backward_raw(repr_cache, dx);
        }
      }
    }
    out.hidden.push_back(std::move(h));
  }
  if (options.compute_loss) {
    out.loss = head != nullptr ? joint_loss(out.task_loss, out.lm_forward, out.lm_backward, options.lambda)
                               : out.task_loss;
  }
  return out;
}

std::vector<std::vector<int>> Model::predict(const Batch& batch, TaskRole role) {
  ForwardOptions options;
  options.mode = Mode::eval;
  options.compute_loss = false;
  Rng unused(0);
  const TaskOutput out = forward_task(batch, role, options, unused);
  const CrfLayer& crf = output_layer(role);
  std::vector<std::vector<int>> paths;
  paths.reserve(out.hidden.size());
  for (const Tensor& h : out.hidden) paths.push_back(crf.decode(h).labels);
  return paths;
}

std::vector<LabelSequence> Model::predict_corpus(const TaggedCorpus& corpus, TaskRole role,
                                                 std::size_t batch_size) {
  const std::string task = task_name(role);
  const auto& names = vocab_.labels(task);
  std::vector<LabelSequence> out(corpus.size());
  // Same-length sentences share a batch; results go back to corpus order.
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_length[corpus.sentences[i].size()].push_back(i);
  for (const auto& [length, indices] : by_length) {
    if (length == 0) continue;
    for (std::size_t start = 0; start < indices.size(); start += std::max<std::size_t>(batch_size, 1)) {
      const std::size_t end = std::min(indices.size(), start + std::max<std::size_t>(batch_size, 1));
      const std::span<const std::size_t> chunk(indices.data() + start, end - start);
      const Batch batch = encode_batch(corpus, chunk, vocab_);
      const auto paths = predict(batch, role);
      for (std::size_t b = 0; b < chunk.size(); ++b) {
        LabelSequence labels;
        labels.reserve(paths[b].size());
        for (int id : paths[b]) labels.push_back(names.at(static_cast<std::size_t>(id)));
        out[chunk[b]] = std::move(labels);
      }
    }
  }
  return out;
}

}  // namespace seqmtl
