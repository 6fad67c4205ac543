#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "seqmtl/checkpoint.hpp"
#include "seqmtl/eval.hpp"
#include "seqmtl/trainer.hpp"
#include "test_support.hpp"

using namespace seqmtl;
using seqmtl::testing::fine_and_coarse;
using seqmtl::testing::read_file;
using seqmtl::testing::TempDir;
using seqmtl::testing::tiny_spec;
using seqmtl::testing::vocab_for;

namespace {

struct Data {
  seqmtl::testing::TaskPair train = fine_and_coarse(30, 11);
  seqmtl::testing::TaskPair dev = fine_and_coarse(10, 12);
  Vocabulary vocab = vocab_for(train);

  TrainData for_model(const Model& m) const {
    return {&train.main, m.spec().topology == Topology::single ? nullptr : &train.aux, &dev.main};
  }
};

TrainConfig quick(int epochs = 2) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.patience = 0;
  return c;
}

double sample_rate(std::size_t m, std::size_t a, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t hits = 0;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) hits += sample_task(m, a, rng) == TaskRole::main;
  return static_cast<double>(hits) / static_cast<double>(draws);
}

}  // namespace

TEST_CASE("task sampler follows corpus sizes") {
  // numeric_oracles.py: p_main and 3 sigma over 1e5 draws
  CHECK(std::abs(sample_rate(14176, 8000, 1) - 0.63924963924963925) < 0.0045557500389283958);
  CHECK(std::abs(sample_rate(1, 1, 2) - 0.5) < 0.004743416490252569);
  CHECK(std::abs(sample_rate(1000, 9000, 3) - 0.1) < 0.0028460498941515414);
  Rng rng(1);
  CHECK_THROWS_AS(sample_task(5, 0, rng), Error);
  CHECK_THROWS_AS(sample_task(0, 3, rng), Error);
}

TEST_CASE("same-level epoch length") {
  CHECK(same_level_iterations(10, 1, 1) == 20);
  CHECK(same_level_iterations(10, 3, 1) == 14);  // ceil(10 / 0.75)
  CHECK(same_level_iterations(7, 5, 0) == 7);
  CHECK_THROWS_AS(same_level_iterations(7, 0, 3), Error);
}

TEST_CASE("learning rate decays per epoch") {
  const Data d;
  Model m = Model::build(tiny_spec(Topology::single), d.vocab, 1);
  TrainConfig c = quick(3);
  c.base_lr = 0.01;
  c.decay = 0.05;
  const auto st = train(m, d.for_model(m), c);
  REQUIRE(st.history.size() == 3);
  CHECK(st.history[0].lr == 0.01);
  // numeric_oracles.py: lr(epoch 1) = 0.0095238095238095238
  CHECK(st.history[1].lr == doctest::Approx(0.0095238095238095238).epsilon(1e-15));
  CHECK(st.history[2].lr == doctest::Approx(0.01 / 1.1).epsilon(1e-15));
}

TEST_CASE("lambda 0 reproduces the no-LM run bit for bit") {
  const Data d;
  for (Topology t : {Topology::single, Topology::embedding_shared, Topology::hierarchical}) {
    CAPTURE(to_string(t));
    Model plain = Model::build(tiny_spec(t), d.vocab, 5);
    Model lm = Model::build(tiny_spec(t, LmMode::shared), d.vocab, 5);
    TrainConfig c = quick(2);
    c.keep_batch_log = true;
    TrainConfig c0 = c;
    c0.lambda = 0.0;
    const auto a = train(plain, d.for_model(plain), c);
    const auto b = train(lm, d.for_model(lm), c0);
    REQUIRE(a.batch_log.size() == b.batch_log.size());
    for (std::size_t i = 0; i < a.batch_log.size(); ++i) {
      CHECK(a.batch_log[i].loss == b.batch_log[i].loss);
      CHECK(a.batch_log[i].task == b.batch_log[i].task);
    }
    for (Parameter* p : plain.parameters()) CHECK(lm.find_parameter(p->name)->value == p->value);
  }
}

TEST_CASE("hierarchical epochs run the low task before the high task") {
  const Data d;
  Model m = Model::build(tiny_spec(Topology::hierarchical), d.vocab, 2);
  TrainConfig c = quick(2);
  c.keep_batch_log = true;
  const auto st = train(m, d.for_model(m), c);
  for (int epoch = 0; epoch < 2; ++epoch) {
    bool seen_main = false;
    std::size_t aux_sentences = 0, main_sentences = 0;
    for (const auto& e : st.batch_log) {
      if (e.epoch != epoch) continue;
      if (e.task == TaskRole::main) {
        seen_main = true;
        main_sentences += e.batch_size;
      } else {
        CHECK_FALSE(seen_main);
        aux_sentences += e.batch_size;
      }
    }
    CHECK(aux_sentences == d.train.aux.size());
    CHECK(main_sentences == d.train.main.size());
  }
}

TEST_CASE("same-level epochs mix both tasks") {
  const Data d;
  Model m = Model::build(tiny_spec(Topology::rnn_shared), d.vocab, 2);
  const auto st = train(m, d.for_model(m), quick(1));
  CHECK(st.history[0].main_steps > 0);
  CHECK(st.history[0].aux_steps > 0);
  CHECK(st.history[0].p_main == doctest::Approx(0.5));
}

TEST_CASE("auxiliary steps leave the main output layer untouched") {
  const Data d;
  Model m = Model::build(tiny_spec(Topology::embedding_shared), d.vocab, 3);
  const std::vector<std::size_t> rows{0};
  const Batch b = encode_batch(d.train.aux, rows, d.vocab);
  const Tensor before_w = m.find_parameter("main.crf.W")->value;
  const Tensor before_t = m.find_parameter("main.crf.transitions")->value;
  const Tensor before_repr = m.find_parameter("charcnn.filters")->value;
  ForwardOptions o;
  o.mode = Mode::train;
  o.accumulate_grad = true;
  Rng rng(3);
  m.forward_task(b, TaskRole::auxiliary, o, rng);
  sgd_step(m.parameters(), 0.1, 0.0, 0);
  CHECK(m.find_parameter("main.crf.W")->value == before_w);
  CHECK(m.find_parameter("main.crf.transitions")->value == before_t);
  CHECK(m.find_parameter("charcnn.filters")->value != before_repr);
}

TEST_CASE("training is deterministic given the seed") {
  const Data d;
  TempDir a_dir, b_dir;
  auto run = [&](const std::string& dir) {
    Model m = Model::build(tiny_spec(Topology::embedding_shared, LmMode::shared), d.vocab, 4);
    TrainConfig c = quick(2);
    c.checkpoint_dir = dir;
    c.seed = 9;
    return train(m, d.for_model(m), c);
  };
  const auto a = run(a_dir.path().string());
  const auto b = run(b_dir.path().string());
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].to_json() == b.history[i].to_json());
  CHECK(read_file(a_dir.file("history.jsonl")) == read_file(b_dir.file("history.jsonl")));
  CHECK(read_file(a_dir.file("best.ckpt")) == read_file(b_dir.file("best.ckpt")));
  CHECK_FALSE(read_file(a_dir.file("best.ckpt")).empty());
}

TEST_CASE("the best checkpoint reproduces its dev score") {
  const Data d;
  TempDir dir;
  Model m = Model::build(tiny_spec(Topology::single), d.vocab, 6);
  TrainConfig c = quick(4);
  c.base_lr = 0.05;
  c.checkpoint_dir = dir.path().string();
  c.run_config = {{"tag", "best"}};
  const auto st = train(m, d.for_model(m), c);
  REQUIRE(std::filesystem::exists(st.best_checkpoint));
  LoadedCheckpoint back = load_checkpoint(st.best_checkpoint);
  CHECK(back.config == c.run_config);
  std::vector<LabelSequence> gold;
  for (const auto& s : d.dev.main.sentences) gold.push_back(s.labels.at("fine"));
  const double f1 = f1_score(gold, back.model.predict_corpus(d.dev.main, TaskRole::main)).f1;
  CHECK(f1 == st.best_dev_f1);
  CHECK(st.history[static_cast<std::size_t>(st.best_epoch)].checkpointed);
}

TEST_CASE("multi-task training needs the auxiliary corpus") {
  const Data d;
  Model m = Model::build(tiny_spec(Topology::rnn_shared), d.vocab, 1);
  CHECK_THROWS_WITH_AS(train(m, {&d.train.main, nullptr, &d.dev.main}, quick(1)),
                       doctest::Contains("auxiliary corpus"), Error);
  CHECK_THROWS_AS(train(m, {&d.train.main, &d.train.aux, nullptr}, quick(1)), Error);
}

TEST_CASE("patience stops training and the callback can stop it too") {
  const Data d;
  Model m = Model::build(tiny_spec(Topology::single), d.vocab, 1);
  TrainConfig c = quick(30);
  c.base_lr = 0.0;  // dev F1 never improves after the first epoch
  c.patience = 2;
  const auto st = train(m, d.for_model(m), c);
  CHECK(st.stopped_early);
  CHECK(st.epochs_completed == 3);

  Model m2 = Model::build(tiny_spec(Topology::single), d.vocab, 1);
  int calls = 0;
  const auto st2 = train(m2, d.for_model(m2), quick(5), [&](const EpochRecord&) { return ++calls < 2; });
  CHECK(st2.epochs_completed == 2);
}
