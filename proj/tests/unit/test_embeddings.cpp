#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "seqmtl/corpus.hpp"
#include "seqmtl/embeddings.hpp"
#include "seqmtl/hash.hpp"
#include "seqmtl/numeric.hpp"
#include "test_support.hpp"

using namespace seqmtl;
using seqmtl::testing::TempDir;
using seqmtl::testing::write_file;

namespace {

ContextualRecord make_record(std::size_t layers, std::size_t tokens, std::size_t dim, Rng& rng) {
  ContextualRecord r;
  r.layers = layers;
  r.tokens = tokens;
  r.dim = dim;
  r.values.resize(layers * tokens * dim);
  for (double& v : r.values) v = rng.uniform(-2.0, 2.0);
  return r;
}

}  // namespace

TEST_CASE("load_pretrained copies rows and fills the rest") {
  TempDir dir;
  write_file(dir.file("vec.txt"), "hello 0.1 0.2\nworld -0.5 0.25\n");
  const auto c = parse_conll_text("hello O\nthere O\n", "t");
  const Vocabulary v = build_vocab({&c});
  Rng rng(1);
  const auto m = load_pretrained(dir.file("vec.txt"), v, rng);
  CHECK(m.dim == 2);
  CHECK(m.covered == 1);
  const int hello = v.word_id("hello");
  CHECK(m.matrix.at(hello, 0) == 0.1);
  CHECK(m.matrix.at(hello, 1) == 0.2);
  // numeric_oracles.py: sqrt(3/2) = 1.224744871391589
  const int there = v.word_id("there");
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(std::abs(m.matrix.at(there, k)) <= 1.224744871391589);
    CHECK(m.matrix.at(there, k) != 0.0);
  }
  CHECK(m.matrix.at(Vocabulary::kPad, 0) == 0.0);
  CHECK(m.matrix.at(Vocabulary::kPad, 1) == 0.0);
  CHECK(read_pretrained_words(dir.file("vec.txt")) == std::vector<std::string>{"hello", "world"});
}

TEST_CASE("load_pretrained rejects malformed files") {
  TempDir dir;
  const auto c = parse_conll_text("a O\n", "t");
  const Vocabulary v = build_vocab({&c});
  Rng rng(1);
  write_file(dir.file("dim.txt"), "a 0.1 0.2\nb 0.3\n");
  CHECK_THROWS_WITH_AS(load_pretrained(dir.file("dim.txt"), v, rng), doctest::Contains("line 2"), Error);
  write_file(dir.file("nan.txt"), "a 0.1 zz\n");
  CHECK_THROWS_WITH_AS(load_pretrained(dir.file("nan.txt"), v, rng), doctest::Contains("unreadable"), Error);
}

TEST_CASE("random embeddings respect the bound and zero PAD row") {
  Rng rng(4);
  const auto m = random_embeddings(50, 8, rng);
  const double bound = std::sqrt(3.0 / 8.0);
  for (std::size_t r = 0; r < 50; ++r) {
    for (std::size_t k = 0; k < 8; ++k) {
      if (r == 0) {
        CHECK(m.matrix.at(r, k) == 0.0);
      } else {
        CHECK(std::abs(m.matrix.at(r, k)) <= bound);
      }
    }
  }
}

TEST_CASE("elmo_combine examples") {
  ContextualRecord r;
  r.layers = 2;
  r.tokens = 1;
  r.dim = 2;
  r.values = {2.0, 0.0, 0.0, 2.0};
  const Tensor mixed = elmo_combine(r, std::vector<double>{0.0, 0.0}, 1.0);
  CHECK(mixed.at(0, 0) == 1.0);
  CHECK(mixed.at(0, 1) == 1.0);

  const Tensor zero = elmo_combine(r, std::vector<double>{0.3, -1.0}, 0.0);
  CHECK(zero.at(0, 0) == 0.0);
  CHECK(zero.at(0, 1) == 0.0);

  CHECK_THROWS_AS(elmo_combine(r, std::vector<double>{0.0}, 1.0), Error);
}

TEST_CASE("frozen selection reproduces the second layer exactly") {
  Rng rng(12);
  const ContextualRecord r = make_record(3, 5, 4, rng);
  const auto raw = frozen_layer_selection(3, 1);
  const ElmoMix mix = elmo_mix(raw, 1.0);
  CHECK(mix.layer_weights[0] == 0.0);
  CHECK(mix.layer_weights[1] == 1.0);
  CHECK(mix.layer_weights[2] == 0.0);
  const Tensor out = elmo_combine(r, raw, 1.0);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t k = 0; k < 4; ++k) CHECK(out.at(t, k) == r.at(1, t)[k]);
  }
  CHECK_THROWS_AS(frozen_layer_selection(2, 2), Error);
}

TEST_CASE("elmo_combine is linear in gamma and convex in layers") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const ContextualRecord r = make_record(2 + trial % 3, 3, 4, rng);
    std::vector<double> raw(r.layers);
    for (double& w : raw) w = rng.uniform(-2.0, 2.0);
    const double gamma = rng.uniform(0.1, 2.0);
    const Tensor a = elmo_combine(r, raw, gamma);
    const Tensor b = elmo_combine(r, raw, 2.0 * gamma);
    double s = 0.0;
    for (double w : elmo_mix(raw, gamma).layer_weights) s += w;
    CHECK(std::abs(s - 1.0) < 1e-12);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(b[i] - 2.0 * a[i]) < 1e-12);
    for (std::size_t t = 0; t < r.tokens; ++t) {
      for (std::size_t k = 0; k < r.dim; ++k) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t l = 0; l < r.layers; ++l) {
          lo = std::min(lo, gamma * r.at(l, t)[k]);
          hi = std::max(hi, gamma * r.at(l, t)[k]);
        }
        CHECK(a.at(t, k) >= lo - 1e-12);
        CHECK(a.at(t, k) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("identical layers pass through scaled by gamma") {
  Rng rng(6);
  ContextualRecord one = make_record(1, 3, 2, rng);
  ContextualRecord r = one;
  r.layers = 3;
  r.values.clear();
  for (int l = 0; l < 3; ++l) r.values.insert(r.values.end(), one.values.begin(), one.values.end());
  const Tensor out = elmo_combine(r, std::vector<double>{0.4, -1.3, 2.2}, 0.7);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(0.7 * one.values[i]).epsilon(1e-14));
}

TEST_CASE("elmo_combine gradients pass grad_check") {
  Rng rng(8);
  const ContextualRecord r = make_record(3, 4, 3, rng);
  Parameter raw("raw", Tensor({3}, std::vector<double>{0.2, -0.4, 0.9}));
  Parameter gamma("gamma", Tensor({1}, 1.3));
  Tensor target = Tensor::matrix(4, 3);
  for (double& v : target.values()) v = rng.uniform(-1.0, 1.0);
  const LossFn f = [&](bool acc) {
    const Tensor out = elmo_combine(r, raw.value.values(), gamma.value[0]);
    double loss = 0.0;
    Tensor g = Tensor::matrix(4, 3);
    for (std::size_t i = 0; i < out.size(); ++i) {
      loss += 0.5 * (out[i] - target[i]) * (out[i] - target[i]);
      g[i] = out[i] - target[i];
    }
    if (acc) elmo_combine_backward(r, raw.value.values(), gamma.value[0], g, raw.grad.values(), gamma.grad[0]);
    return loss;
  };
  CHECK(grad_check(f, {&raw, &gamma}).max_relative_error < 1e-4);
}

TEST_CASE("contextual store lookups and errors") {
  Rng rng(3);
  ContextualVectorStore store;
  const std::vector<std::string> toks{"a", "b", "c"};
  store.insert(sentence_key(toks), make_record(2, 3, 4, rng));
  const auto& rec = store.lookup(sentence_key(toks));
  CHECK(rec.values.size() == 2 * 3 * 4);
  CHECK(store.layers() == 2);
  CHECK(store.dim() == 4);
  CHECK_THROWS_WITH_AS(store.lookup(sentence_key({"x"}), "x"), doctest::Contains("contextual vectors missing"),
                       Error);
  CHECK_THROWS_WITH_AS(store.insert("other", make_record(3, 1, 4, rng), 7), doctest::Contains("record 7"), Error);

  ContextualVectorStore other;
  other.insert(sentence_key({"d"}), make_record(2, 1, 4, rng));
  store.merge(other);
  CHECK(store.size() == 2);
  CHECK_THROWS_WITH_AS(store.merge(other), doctest::Contains("duplicate"), Error);
}

TEST_CASE("sentence keys are SHA-256 over unit-separated tokens") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sentence_key({"a", "b"}) == sha256_hex(std::string("a\x1f" "b")));
  CHECK(sentence_key({"a b"}) != sentence_key({"a", "b"}));
}

TEST_CASE("contextual store files: binary and JSON lines") {
  TempDir dir;
  Rng rng(5);
  ContextualRecord r = make_record(2, 3, 2, rng);
  for (double& v : r.values) v = static_cast<float>(v);  // float32 on disk
  const std::string key = sentence_key({"x", "y", "z"});
  save_contextual_store_binary(dir.file("s.bin"), {{key, r}});
  const auto loaded = load_contextual_store(dir.file("s.bin"));
  CHECK(loaded.lookup(key).values == r.values);

  write_file(dir.file("s.jsonl"),
             "{\"tokens\": [\"p\", \"q\"], \"token_count\": 2, \"layer_count\": 1, \"dim\": 2, "
             "\"values\": [[1, 2], [3, 4]]}\n"
             "{\"key\": \"k2\", \"token_count\": 1, \"layer_count\": 1, \"dim\": 2, \"values\": [5, 6]}\n");
  const auto js = load_contextual_store(dir.file("s.jsonl"));
  CHECK(js.size() == 2);
  CHECK(js.lookup(sentence_key({"p", "q"})).values == std::vector<double>{1, 2, 3, 4});

  write_file(dir.file("bad.jsonl"),
             "{\"key\": \"a\", \"token_count\": 1, \"layer_count\": 1, \"dim\": 2, \"values\": [5, 6]}\n"
             "{\"key\": \"b\", \"token_count\": 1, \"layer_count\": 2, \"dim\": 2, \"values\": [5, 6]}\n");
  CHECK_THROWS_WITH_AS(load_contextual_store(dir.file("bad.jsonl")), doctest::Contains("record 1"), Error);
  write_file(dir.file("trunc.bin"), std::string("\x05\x00\x00\x00" "ab", 6));
  CHECK_THROWS_AS(load_contextual_store(dir.file("trunc.bin")), Error);
}
