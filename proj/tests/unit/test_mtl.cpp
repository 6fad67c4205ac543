#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "seqmtl/checkpoint.hpp"
#include "seqmtl/diagnostics.hpp"
#include "seqmtl/model.hpp"
#include "test_support.hpp"

using namespace seqmtl;
using seqmtl::testing::fine_and_coarse;
using seqmtl::testing::tiny_spec;
using seqmtl::testing::vocab_for;

namespace {

struct Setup {
  seqmtl::testing::TaskPair data = fine_and_coarse(24, 5);
  Vocabulary vocab = vocab_for(data);

  // Up to `n` sentences sharing the most common length.
  Batch batch(const TaggedCorpus& c, std::size_t n = 3) const {
    std::map<std::size_t, std::vector<std::size_t>> by_length;
    for (std::size_t i = 0; i < c.size(); ++i) by_length[c.sentences[i].size()].push_back(i);
    std::vector<std::size_t> rows;
    for (const auto& [len, idx] : by_length) {
      if (idx.size() > rows.size()) rows = idx;
    }
    if (rows.size() > n) rows.resize(n);
    return encode_batch(c, rows, vocab);
  }
};

// Gradients of one task's loss in eval mode; returns the L1 norm per parameter.
std::map<std::string, double> grad_norms(Model& m, const Batch& b, TaskRole role, double lambda = 0.05) {
  zero_grads(m.parameters());
  ForwardOptions o;
  o.accumulate_grad = true;
  o.lambda = lambda;
  Rng rng(1);
  m.forward_task(b, role, o, rng);
  std::map<std::string, double> out;
  for (Parameter* p : m.parameters()) {
    double s = 0.0;
    for (double g : p->grad.values()) s += std::abs(g);
    out[p->name] = s;
  }
  return out;
}

double prefix_norm(const std::map<std::string, double>& norms, const std::string& prefix) {
  double s = 0.0;
  for (const auto& [name, v] : norms) {
    if (name.starts_with(prefix)) s += v;
  }
  return s;
}

std::size_t expected_blstms(Topology t) {
  return (t == Topology::single || t == Topology::rnn_shared) ? 1 : 2;
}

}  // namespace

TEST_CASE("eleven buildable combinations with the expected structure") {
  const Setup s;
  const auto combos = buildable_combinations();
  CHECK(combos.size() == 11);
  for (const auto& [topo, lm] : combos) {
    CAPTURE(to_string(topo));
    CAPTURE(to_string(lm));
    Model m = Model::build(tiny_spec(topo, lm), s.vocab, 1);
    CHECK(m.blstm_count() == expected_blstms(topo));
    CHECK(m.output_layer_count() == (topo == Topology::single ? 1u : 2u));
    CHECK(m.lm_head_count() == (lm == LmMode::none ? 0u : lm == LmMode::shared ? 1u : 2u));
    if (topo == Topology::single) {
      for (Parameter* p : m.parameters()) CHECK_FALSE(p->name.starts_with("aux."));
      CHECK_FALSE(m.has_task(TaskRole::auxiliary));
    }
    CHECK(m.repr_dim() == 5 + 4);
  }
}

TEST_CASE("spec validation") {
  ModelSpec s = tiny_spec(Topology::single, LmMode::unshared);
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("unshared"), Error);
  s = tiny_spec(Topology::hierarchical, LmMode::none, false);
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("auxiliary task"), Error);
  s = tiny_spec(Topology::single);
  s.aux_task = "coarse";
  CHECK_THROWS_AS(s.validate(), Error);
  s = tiny_spec(Topology::rnn_shared);
  s.aux_task = "fine";
  CHECK_THROWS_AS(s.validate(), Error);
  s = tiny_spec(Topology::single);
  s.dropout.input_rate = 1.0;
  CHECK_THROWS_AS(s.validate(), Error);
  CHECK_THROWS_AS(parse_topology("cascade"), Error);
  const ModelSpec h = tiny_spec(Topology::hierarchical, LmMode::shared);
  CHECK(ModelSpec::from_json(h.to_json()).to_json() == h.to_json());
}

TEST_CASE("hierarchical main level reads the representation and the low states") {
  const Setup s;
  Model m = Model::build(tiny_spec(Topology::hierarchical), s.vocab, 1);
  CHECK(m.level_input_dim(TaskRole::main) == m.repr_dim() + 2 * 4);
  CHECK(m.level_input_dim(TaskRole::auxiliary) == m.repr_dim());
  CHECK(m.find_parameter("main.blstm.fwd.W")->value.cols() == m.repr_dim() + 2 * 4 + 4);
}

TEST_CASE("unshared LM heads add one head's worth of parameters") {
  const Setup s;
  for (Topology t : {Topology::embedding_shared, Topology::rnn_shared, Topology::hierarchical}) {
    Model shared = Model::build(tiny_spec(t, LmMode::shared), s.vocab, 1);
    Model unshared = Model::build(tiny_spec(t, LmMode::unshared), s.vocab, 1);
    const std::size_t H = 4, V = shared.lm_vocab().size();
    CHECK(unshared.parameter_count() - shared.parameter_count() == 2 * (H * V + V));
  }
}

TEST_CASE("rnn_shared tasks read the same hidden states") {
  const Setup s;
  Model m = Model::build(tiny_spec(Topology::rnn_shared), s.vocab, 1);
  ForwardOptions o;
  o.compute_loss = false;
  Rng rng(1);
  const Batch b = s.batch(s.data.main);
  const auto a = m.forward_task(b, TaskRole::main, o, rng);
  const auto c = m.forward_task(b, TaskRole::auxiliary, o, rng);
  REQUIRE(a.hidden.size() == c.hidden.size());
  for (std::size_t i = 0; i < a.hidden.size(); ++i) CHECK(a.hidden[i] == c.hidden[i]);
  for (Parameter* p : m.parameters()) {
    if (p->name.find("blstm") != std::string::npos) CHECK(p->name.starts_with("shared."));
  }
}

TEST_CASE("gradient routing between levels") {
  const Setup s;
  const Batch main_b = s.batch(s.data.main);
  const Batch aux_b = s.batch(s.data.aux);

  SUBCASE("embedding_shared: main loss leaves the auxiliary branch alone") {
    Model m = Model::build(tiny_spec(Topology::embedding_shared), s.vocab, 1);
    const auto g = grad_norms(m, main_b, TaskRole::main);
    CHECK(prefix_norm(g, "aux.") == 0.0);
    CHECK(prefix_norm(g, "main.blstm") > 0.0);
    CHECK(prefix_norm(g, "embed.") > 0.0);
    const auto ga = grad_norms(m, aux_b, TaskRole::auxiliary);
    CHECK(prefix_norm(ga, "main.") == 0.0);
    CHECK(prefix_norm(ga, "charcnn.") > 0.0);
  }
  SUBCASE("hierarchical: main loss reaches the low BLSTM but not its output layer") {
    Model m = Model::build(tiny_spec(Topology::hierarchical), s.vocab, 1);
    const auto g = grad_norms(m, main_b, TaskRole::main);
    CHECK(prefix_norm(g, "aux.crf") == 0.0);
    CHECK(prefix_norm(g, "aux.blstm") > 0.0);
    const auto ga = grad_norms(m, aux_b, TaskRole::auxiliary);
    CHECK(prefix_norm(ga, "main.") == 0.0);
    CHECK(prefix_norm(ga, "aux.blstm") > 0.0);
  }
  SUBCASE("rnn_shared: both losses reach the shared BLSTM") {
    Model m = Model::build(tiny_spec(Topology::rnn_shared), s.vocab, 1);
    CHECK(prefix_norm(grad_norms(m, main_b, TaskRole::main), "shared.blstm") > 0.0);
    CHECK(prefix_norm(grad_norms(m, aux_b, TaskRole::auxiliary), "shared.blstm") > 0.0);
    CHECK(prefix_norm(grad_norms(m, aux_b, TaskRole::auxiliary), "main.crf") == 0.0);
  }
  SUBCASE("hierarchical shared LM sits on the low level") {
    Model m = Model::build(tiny_spec(Topology::hierarchical, LmMode::shared), s.vocab, 1);
    CHECK_FALSE(m.lm_applies(TaskRole::main));
    CHECK(m.lm_applies(TaskRole::auxiliary));
    CHECK(prefix_norm(grad_norms(m, main_b, TaskRole::main), "lm.") == 0.0);
    CHECK(prefix_norm(grad_norms(m, aux_b, TaskRole::auxiliary), "lm.") > 0.0);
  }
  SUBCASE("unshared heads follow their task") {
    Model m = Model::build(tiny_spec(Topology::embedding_shared, LmMode::unshared), s.vocab, 1);
    const auto g = grad_norms(m, main_b, TaskRole::main);
    CHECK(prefix_norm(g, "main.lm") > 0.0);
    CHECK(prefix_norm(g, "aux.lm") == 0.0);
  }
}

TEST_CASE("auxiliary forward on a single-task model throws") {
  const Setup s;
  Model m = Model::build(tiny_spec(Topology::single), s.vocab, 1);
  Rng rng(1);
  CHECK_THROWS_WITH_AS(m.forward_task(s.batch(s.data.main), TaskRole::auxiliary, {}, rng),
                       doctest::Contains("no auxiliary task"), Error);
  CHECK_THROWS_AS(m.output_layer(TaskRole::auxiliary), Error);
}

TEST_CASE("hierarchical main task runs with a silent low level") {
  const Setup s;
  Model m = Model::build(tiny_spec(Topology::hierarchical), s.vocab, 1);
  for (Parameter* p : m.parameters()) {
    if (p->name.starts_with("aux.blstm")) p->value.fill(0.0);
  }
  Rng rng(1);
  const auto out = m.forward_task(s.batch(s.data.main), TaskRole::main, {}, rng);
  CHECK(std::isfinite(out.loss));
  CHECK(out.loss > 0.0);
  CHECK(m.predict(s.batch(s.data.main), TaskRole::main).size() == s.batch(s.data.main).size());
}

TEST_CASE("lambda 0 matches a model without LM heads bit for bit") {
  const Setup s;
  for (Topology t : {Topology::single, Topology::hierarchical}) {
    Model plain = Model::build(tiny_spec(t), s.vocab, 9);
    Model lm = Model::build(tiny_spec(t, LmMode::shared), s.vocab, 9);
    ForwardOptions o;
    o.mode = Mode::train;
    o.accumulate_grad = true;
    o.lambda = 0.0;
    for (TaskRole role : {TaskRole::main}) {
      zero_grads(plain.parameters());
      zero_grads(lm.parameters());
      Rng r1(4), r2(4);
      const auto a = plain.forward_task(s.batch(s.data.main), role, o, r1);
      const auto b = lm.forward_task(s.batch(s.data.main), role, o, r2);
      CHECK(a.loss == b.loss);
      for (Parameter* p : plain.parameters()) CHECK(lm.find_parameter(p->name)->grad == p->grad);
    }
  }
}

TEST_CASE("checkpoint round trip preserves predictions") {
  const Setup s;
  seqmtl::testing::TempDir dir;
  Model m = Model::build(tiny_spec(Topology::hierarchical, LmMode::unshared), s.vocab, 3);
  const nlohmann::json cfg = {{"note", "x"}};
  save_checkpoint(m, dir.file("m.ckpt"), cfg);
  LoadedCheckpoint back = load_checkpoint(dir.file("m.ckpt"));
  CHECK(back.config == cfg);
  for (TaskRole role : {TaskRole::main, TaskRole::auxiliary}) {
    CHECK(back.model.predict_corpus(s.data.main, role) == m.predict_corpus(s.data.main, role));
  }
  for (Parameter* p : m.parameters()) CHECK(back.model.find_parameter(p->name)->value == p->value);
  CHECK(serialize_checkpoint(back.model, cfg) == serialize_checkpoint(m, cfg));
}

namespace {

std::string edit_manifest(const std::string& bytes, const std::function<void(nlohmann::json&)>& edit) {
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  nlohmann::json manifest = nlohmann::json::parse(bytes.substr(16, len));
  edit(manifest);
  const std::string text = manifest.dump();
  const std::uint64_t n = text.size();
  std::string out = bytes.substr(0, 8);
  out.append(reinterpret_cast<const char*>(&n), 8);
  out += text;
  out += bytes.substr(16 + len);
  return out;
}

}  // namespace

TEST_CASE("checkpoint loading validates names, shapes and size") {
  const Setup s;
  Model m = Model::build(tiny_spec(Topology::rnn_shared), s.vocab, 3);
  const std::string bytes = serialize_checkpoint(m);
  CHECK_NOTHROW(deserialize_checkpoint(bytes));
  CHECK_THROWS_WITH_AS(
      deserialize_checkpoint(edit_manifest(bytes, [](nlohmann::json& j) { j["parameters"][5]["name"] = "bogus"; })),
      doctest::Contains("bogus"), Error);
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(edit_manifest(bytes, [](nlohmann::json& j) {
                         j["parameters"][0]["shape"] = {1, 1};
                       })),
                       doctest::Contains("wrong shape"), Error);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)), Error);
  CHECK_THROWS_AS(deserialize_checkpoint("NOTACKPT"), Error);
  CHECK_THROWS_WITH_AS(
      deserialize_checkpoint(edit_manifest(bytes, [](nlohmann::json& j) { j["vocab_sha256"] = "00"; })),
      doctest::Contains("hash"), Error);
}

TEST_CASE("every layout passes the gradient check") {
  for (const auto& spec : grad_case_menu(true)) {
    CAPTURE(spec.name);
    const GradCase c = run_grad_case(spec, 7);
    CHECK(c.report.max_relative_error < 1e-4);
    CHECK(c.report.entries_checked > 0);
  }
}
