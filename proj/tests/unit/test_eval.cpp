#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "seqmtl/diagnostics.hpp"
#include "seqmtl/eval.hpp"
#include "seqmtl/rng.hpp"
#include "seqmtl/tensor.hpp"

using namespace seqmtl;

TEST_CASE("extract_chunks follows BIO2") {
  CHECK(extract_chunks({"B-PER", "I-PER", "O"}) == std::vector<Chunk>{{"PER", 0, 2}});
  CHECK(extract_chunks({"B-PER", "B-PER"}) == std::vector<Chunk>{{"PER", 0, 1}, {"PER", 1, 2}});
  CHECK(extract_chunks({"O", "O"}).empty());
  CHECK(extract_chunks({"B-PER", "I-PER", "I-PER"}) == std::vector<Chunk>{{"PER", 0, 3}});
}

TEST_CASE("extract_chunks repairs orphan and mistyped I- tags") {
  // conlleval opens a chunk at an I- tag that cannot continue the open one.
  CHECK(extract_chunks({"O", "I-LOC"}) == std::vector<Chunk>{{"LOC", 1, 2}});
  CHECK(extract_chunks({"B-PER", "I-LOC"}) == std::vector<Chunk>{{"PER", 0, 1}, {"LOC", 1, 2}});
  CHECK(extract_chunks({"I-ORG", "I-ORG", "O", "I-ORG"}) ==
        std::vector<Chunk>{{"ORG", 0, 2}, {"ORG", 3, 4}});
}

TEST_CASE("labels must be O, B- or I-") {
  CHECK_THROWS_AS(extract_chunks({"PER"}), Error);
  CHECK_THROWS_AS(extract_chunks({"X-PER"}), Error);
  CHECK_THROWS_AS(parse_label("B-"), Error);
  CHECK(parse_label("I-ORG").prefix == 'I');
  CHECK(parse_label("I-ORG").type == "ORG");
}

TEST_CASE("IOB1 to BIO2") {
  CHECK(iob1_to_bio2({"I-PER", "I-PER", "B-PER", "O", "I-LOC"}) ==
        LabelSequence{"B-PER", "I-PER", "B-PER", "O", "B-LOC"});
  CHECK(iob1_to_bio2({"I-PER", "I-LOC"}) == LabelSequence{"B-PER", "B-LOC"});
}

TEST_CASE("F1 formula cases") {
  const std::vector<LabelSequence> gold{{"B-PER", "O", "B-LOC", "I-LOC"}};
  SUBCASE("identical predictions") {
    const auto r = f1_score(gold, gold);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
  }
  SUBCASE("one of two chunks exact") {
    // LOC boundary wrong: 2 proposed, 1 correct.
    const auto r = f1_score(gold, {{"B-PER", "O", "B-LOC", "O"}});
    CHECK(r.predicted_chunks == 2);
    CHECK(r.correct_chunks == 1);
    CHECK(r.precision == 0.5);
    CHECK(r.recall == 0.5);
    CHECK(r.f1 == 0.5);
  }
  SUBCASE("nothing predicted") {
    const auto r = f1_score(gold, {{"O", "O", "O", "O"}});
    CHECK(r.precision == 0.0);
    CHECK(r.recall == 0.0);
    CHECK(r.f1 == 0.0);
  }
  SUBCASE("type must match") {
    const auto r = f1_score(gold, {{"B-LOC", "O", "B-LOC", "I-LOC"}});
    CHECK(r.correct_chunks == 1);
  }
  CHECK(f1_from(0.0, 0.0) == 0.0);
  CHECK(f1_from(0.5, 1.0) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("no gold chunks gives zero recall") {
  const auto r = f1_score({{"O", "O"}}, {{"B-PER", "O"}});
  CHECK(r.recall == 0.0);
  CHECK(r.precision == 0.0);
  CHECK(r.f1 == 0.0);
}

TEST_CASE("alignment errors name the sentence") {
  CHECK_THROWS_WITH_AS(f1_score({{"O"}, {"O", "O"}}, {{"O"}, {"O"}}), doctest::Contains("1"), Error);
  CHECK_THROWS_AS(f1_score({{"O"}}, {}), Error);
}

namespace {

std::vector<LabelSequence> random_labels(Rng& rng, std::size_t sentences) {
  const std::vector<std::string> pool{"O", "O", "O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG"};
  std::vector<LabelSequence> out(sentences);
  for (auto& s : out) {
    const std::size_t n = 1 + rng.below(9);
    for (std::size_t i = 0; i < n; ++i) s.push_back(pool[rng.below(pool.size())]);
  }
  return out;
}

}  // namespace

TEST_CASE("report invariants on random sequences") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto gold = random_labels(rng, 12);
    auto pred = gold;
    const std::vector<std::string> pool{"O", "B-PER", "I-PER", "B-LOC", "I-ORG"};
    for (auto& s : pred) {
      for (auto& l : s) {
        if (rng.bernoulli(0.3)) l = pool[rng.below(pool.size())];
      }
    }
    const auto r = f1_score(gold, pred);
    std::size_t correct = 0, found = 0, support = 0;
    for (const auto& [type, ts] : r.per_type) {
      correct += ts.correct;
      found += ts.predicted;
      support += ts.gold;
    }
    CHECK(correct == r.correct_chunks);
    CHECK(found == r.predicted_chunks);
    CHECK(support == r.gold_chunks);
    if (found > 0) CHECK(std::abs(r.precision - double(correct) / double(found)) < 1e-12);
    if (support > 0) CHECK(std::abs(r.recall - double(correct) / double(support)) < 1e-12);
    if (r.precision + r.recall > 0) {
      CHECK(std::abs(r.f1 - 2 * r.precision * r.recall / (r.precision + r.recall)) < 1e-12);
    }

    // Sentence order does not matter.
    std::vector<std::size_t> order(gold.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<LabelSequence> g2, p2;
    for (std::size_t i : order) {
      g2.push_back(gold[i]);
      p2.push_back(pred[i]);
    }
    const auto r2 = f1_score(g2, p2);
    CHECK(r2.f1 == r.f1);
    CHECK(r2.correct_chunks == r.correct_chunks);
    CHECK(r2.correct_tags == r.correct_tags);

    // Identity gives perfect scores whenever a gold chunk exists.
    const auto self = f1_score(gold, gold);
    if (self.gold_chunks > 0) CHECK(self.f1 == 1.0);
  }
}

TEST_CASE("per-type mean gold length") {
  const auto r = f1_score({{"B-LOC", "I-LOC", "O", "B-LOC", "B-PER"}}, {{"O", "O", "O", "O", "O"}});
  CHECK(r.per_type.at("LOC").mean_gold_length == doctest::Approx(1.5));
  CHECK(r.per_type.at("PER").mean_gold_length == doctest::Approx(1.0));
  CHECK(r.per_type.at("LOC").gold == 2);
}

TEST_CASE("conlleval text layout") {
  const auto r = f1_score({{"B-PER", "I-PER", "O"}}, {{"B-PER", "I-PER", "O"}});
  const std::string text = format_conlleval(r);
  CHECK(text.rfind("processed 3 tokens with 1 phrases; found: 1 phrases; correct: 1.\n", 0) == 0);
  CHECK(text.find("accuracy: 100.00%; precision: 100.00%; recall: 100.00%; FB1: 100.00") != std::string::npos);
  CHECK(text.find("PER: precision: 100.00%; recall: 100.00%; FB1: 100.00  1") != std::string::npos);
  const auto j = to_json(r);
  CHECK(j["f1"] == 1.0);
}

TEST_CASE("scored-file parsing") {
  std::istringstream in("-DOCSTART- -X- O O\n\nJohn B-PER B-PER\nran O O\n\nx O B-LOC\n");
  const auto s = parse_scored(in);
  REQUIRE(s.gold.size() == 2);
  CHECK(s.gold[0] == LabelSequence{"B-PER", "O"});
  CHECK(s.predicted[1] == LabelSequence{"B-LOC"});
  std::istringstream bad("John B-PER B-PER\nran O\n");
  CHECK_THROWS_WITH_AS(parse_scored(bad), doctest::Contains("line 2"), Error);
}

TEST_CASE("fixtures match the conlleval reference") {
  const auto results = scorer_fixtures(SEQMTL_FIXTURE_DIR);
  CHECK(results.size() >= 5);
  for (const auto& f : results) {
    CAPTURE(f.name);
    CHECK(f.actual == f.expected);
  }
  const bool has_orphan = std::any_of(results.begin(), results.end(), [](const auto& f) {
    return f.name.find("orphan") != std::string::npos;
  });
  const bool has_all_o = std::any_of(results.begin(), results.end(), [](const auto& f) {
    return f.name.find("all_outside") != std::string::npos;
  });
  CHECK(has_orphan);
  CHECK(has_all_o);
}
