#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqmtl/corpus.hpp"
#include "seqmtl/model.hpp"
#include "seqmtl/numeric.hpp"
#include "seqmtl/rng.hpp"

namespace seqmtl {

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 16;
  double base_lr = 0.01;
  double decay = 0.05;
  double lambda = 0.05;
  double clip_norm = kDefaultClipNorm;
  std::uint64_t seed = 1;
  int patience = 10;             // epochs without dev improvement; <= 0 disables
  std::string checkpoint_dir;    // empty: nothing written
  bool keep_batch_log = false;
  nlohmann::json run_config = nlohmann::json::object();  // stored in each checkpoint

  void validate() const;
};

// Returns main with probability main_size / (main_size + aux_size).
TaskRole sample_task(std::size_t main_size, std::size_t aux_size, Rng& rng);

// Iterations per same-level epoch: the expected number of steps needed to
// visit every main batch once, ceil(main_batches / P(main)).
std::size_t same_level_iterations(std::size_t main_batches, std::size_t main_size, std::size_t aux_size);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double main_loss = 0.0;
  double aux_loss = 0.0;
  double lm_loss = 0.0;
  double dev_p = 0.0;
  double dev_r = 0.0;
  double dev_f1 = 0.0;
  bool checkpointed = false;
  std::size_t main_steps = 0;
  std::size_t aux_steps = 0;
  double p_main = 1.0;

  nlohmann::json to_json() const;
};

struct BatchLogEntry {
  int epoch = 0;
  TaskRole task = TaskRole::main;
  std::size_t batch_size = 0;
  double loss = 0.0;
};

struct TrainState {
  int epochs_completed = 0;
  double best_dev_f1 = -1.0;
  int best_epoch = -1;
  std::string best_checkpoint;
  std::vector<EpochRecord> history;
  std::vector<BatchLogEntry> batch_log;
  bool stopped_early = false;
};

struct TrainData {
  const TaggedCorpus* main = nullptr;
  const TaggedCorpus* aux = nullptr;  // required for multi-task topologies
  const TaggedCorpus* dev = nullptr;  // main-task dev set; required
};

// Called after each epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// Trains in place. Writes `history.jsonl` and `best.ckpt` under
// config.checkpoint_dir when it is set.
TrainState train(Model& model, const TrainData& data, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

}  // namespace seqmtl
