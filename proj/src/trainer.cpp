#include "seqmtl/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "seqmtl/checkpoint.hpp"
#include "seqmtl/eval.hpp"

namespace seqmtl {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("epochs must be positive");
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (!(base_lr >= 0.0)) throw Error("learning rate must be non-negative");
  if (!(decay >= 0.0)) throw Error("decay must be non-negative");
  if (!(lambda >= 0.0)) throw Error("lambda must be non-negative");
}

TaskRole sample_task(std::size_t main_size, std::size_t aux_size, Rng& rng) {
  if (main_size == 0 || aux_size == 0) throw Error("sample_task: both dataset sizes must be positive");
  const double p_main = static_cast<double>(main_size) / static_cast<double>(main_size + aux_size);
  return rng.bernoulli(p_main) ? TaskRole::main : TaskRole::auxiliary;
}

std::size_t same_level_iterations(std::size_t main_batches, std::size_t main_size, std::size_t aux_size) {
  if (main_size == 0) throw Error("main corpus is empty");
  // ceil(b * (m + a) / m) in integers.
  const std::size_t num = main_batches * (main_size + aux_size);
  return (num + main_size - 1) / main_size;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},         {"lr", lr},
          {"main_loss", main_loss}, {"aux_loss", aux_loss},
          {"lm_loss", lm_loss},     {"dev_p", dev_p},
          {"dev_r", dev_r},         {"dev_f1", dev_f1},
          {"checkpointed", checkpointed}, {"main_steps", main_steps},
          {"aux_steps", aux_steps}, {"p_main", p_main}};
}

namespace {

// Endless supply of shuffled batches; reshuffles when exhausted.
class BatchQueue {
 public:
  BatchQueue(const TaggedCorpus& corpus, const Vocabulary& vocab, std::size_t batch_size, Rng& rng)
      : corpus_(corpus), vocab_(vocab), batch_size_(batch_size), rng_(rng) {}

  const Batch& next() {
    if (pos_ == batches_.size()) {
      batches_ = make_batches(corpus_, vocab_, batch_size_, rng_);
      pos_ = 0;
      if (batches_.empty()) throw Error("corpus " + corpus_.task_name + " yields no batches");
    }
    return batches_[pos_++];
  }

 private:
  const TaggedCorpus& corpus_;
  const Vocabulary& vocab_;
  std::size_t batch_size_;
  Rng& rng_;
  std::vector<Batch> batches_;
  std::size_t pos_ = 0;
};

std::vector<LabelSequence> gold_labels(const TaggedCorpus& corpus, const std::string& task) {
  std::vector<LabelSequence> out;
  out.reserve(corpus.size());
  for (const Sentence& s : corpus.sentences) {
    const auto it = s.labels.find(task);
    if (it == s.labels.end()) throw Error("dev corpus lacks labels for task " + task);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

TrainState train(Model& model, const TrainData& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (data.main == nullptr || data.main->size() == 0) throw Error("training needs a non-empty main corpus");
  if (data.dev == nullptr) throw Error("training needs a dev corpus");
  const bool multi = model.spec().topology != Topology::single;
  if (multi && (data.aux == nullptr || data.aux->size() == 0)) {
    throw Error("topology " + std::string(to_string(model.spec().topology)) + " needs an auxiliary corpus");
  }

  const Rng root(config.seed);
  Rng shuffle_rng = root.split("shuffle");
  Rng sampling_rng = root.split("sampling");
  Rng dropout_rng = root.split("dropout");

  const Vocabulary& vocab = model.vocab();
  const ParameterList params = model.parameters();
  const std::string main_task = model.task_name(TaskRole::main);
  const auto dev_gold = gold_labels(*data.dev, main_task);

  std::ofstream history_file;
  std::string best_path;
  if (!config.checkpoint_dir.empty()) {
    std::filesystem::create_directories(config.checkpoint_dir);
    history_file.open(std::filesystem::path(config.checkpoint_dir) / "history.jsonl", std::ios::trunc);
    if (!history_file) throw Error("cannot write history under " + config.checkpoint_dir);
    best_path = (std::filesystem::path(config.checkpoint_dir) / "best.ckpt").string();
  }

  BatchQueue main_queue(*data.main, vocab, config.batch_size, shuffle_rng);
  std::optional<BatchQueue> aux_queue;
  if (multi && model.spec().topology != Topology::hierarchical) {
    aux_queue.emplace(*data.aux, vocab, config.batch_size, shuffle_rng);
  }

  TrainState state;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = decayed_learning_rate(config.base_lr, config.decay, epoch);
    std::size_t batch_index = 0;

    auto step = [&](const Batch& batch, TaskRole role) {
      ForwardOptions options;
      options.mode = Mode::train;
      options.compute_loss = true;
      options.accumulate_grad = true;
      options.lambda = config.lambda;
      const TaskOutput out = model.forward_task(batch, role, options, dropout_rng);
      if (!std::isfinite(out.loss)) {
        zero_grads(params);
        throw Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch_index) + " (" + std::string(to_string(role)) + " task)");
      }
      sgd_step(params, config.base_lr, config.decay, epoch, config.clip_norm);
      if (role == TaskRole::main) {
        rec.main_loss += out.task_loss;
        ++rec.main_steps;
      } else {
        rec.aux_loss += out.task_loss;
        ++rec.aux_steps;
      }
      if (out.has_lm) rec.lm_loss += out.lm_forward + out.lm_backward;
      if (config.keep_batch_log) state.batch_log.push_back({epoch, role, batch.size(), out.loss});
      ++batch_index;
    };

    if (!multi) {
      for (const Batch& b : make_batches(*data.main, vocab, config.batch_size, shuffle_rng)) step(b, TaskRole::main);
    } else if (model.spec().topology == Topology::hierarchical) {
      // Low-level task first, then the high-level task, each a full pass.
      for (const Batch& b : make_batches(*data.aux, vocab, config.batch_size, shuffle_rng)) {
        step(b, TaskRole::auxiliary);
      }
      for (const Batch& b : make_batches(*data.main, vocab, config.batch_size, shuffle_rng)) {
        step(b, TaskRole::main);
      }
    } else {
      const std::size_t m = data.main->size(), a = data.aux->size();
      rec.p_main = static_cast<double>(m) / static_cast<double>(m + a);
      Rng count_rng(0);  // batch count does not depend on the shuffle
      const std::size_t main_batches = group_by_length(*data.main, config.batch_size, count_rng).size();
      const std::size_t iterations = same_level_iterations(main_batches, m, a);
      for (std::size_t i = 0; i < iterations; ++i) {
        const TaskRole role = sample_task(m, a, sampling_rng);
        step(role == TaskRole::main ? main_queue.next() : aux_queue->next(), role);
      }
    }

    const auto predicted = model.predict_corpus(*data.dev, TaskRole::main);
    const EvalReport report = f1_score(dev_gold, predicted);
    rec.dev_p = report.precision;
    rec.dev_r = report.recall;
    rec.dev_f1 = report.f1;
    if (report.f1 > state.best_dev_f1) {
      state.best_dev_f1 = report.f1;
      state.best_epoch = epoch;
      if (!best_path.empty()) {
        save_checkpoint(model, best_path, config.run_config);
        state.best_checkpoint = best_path;
        rec.checkpointed = true;
      }
    }
    state.history.push_back(rec);
    state.epochs_completed = epoch + 1;
    if (history_file.is_open()) {
      history_file << rec.to_json().dump() << '\n';
      history_file.flush();
    }
    if (on_epoch && !on_epoch(rec)) break;
    if (config.patience > 0 && epoch - state.best_epoch >= config.patience) {
      state.stopped_early = true;
      break;
    }
  }
  return state;
}

}  // namespace seqmtl
