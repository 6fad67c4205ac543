#include "seqmtl/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seqmtl/crf.hpp"
#include "seqmtl/eval.hpp"
#include "seqmtl/hash.hpp"

namespace seqmtl {
namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Sentence make_sentence(std::vector<std::string> tokens, LabelSequence main, LabelSequence aux) {
  Sentence s;
  s.tokens = std::move(tokens);
  s.labels["main"] = std::move(main);
  s.labels["aux"] = std::move(aux);
  return s;
}

// No token repeats a character window, which keeps the char max-pool away
// from ties (a tie is a kink that central differences straddle).
TaggedCorpus grad_corpus() {
  TaggedCorpus c;
  c.task_name = "main";
  c.sentences.push_back(make_sentence({"Alpha", "bcd", "Efg", "hij"},
                                      {"B-PER-a", "I-PER-a", "O", "B-LOC-c"},
                                      {"B-PER", "I-PER", "O", "B-LOC"}));
  c.sentences.push_back(make_sentence({"klm", "Nop", "qrs", "Tuv"},
                                      {"O", "B-ORG-x", "O", "B-PER-b"},
                                      {"O", "B-ORG", "O", "B-PER"}));
  c.label_set = {"B-PER-a", "I-PER-a", "O", "B-LOC-c", "B-ORG-x", "B-PER-b"};
  return c;
}

}  // namespace

CrfExactnessReport crf_exactness(std::size_t instances, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(Rng::derive_seed(seed, "crf-exactness"));
  CrfExactnessReport r;
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t T = 1 + rng.below(6);
    const std::size_t L = 2 + rng.below(4);
    Tensor e = Tensor::matrix(T, L);
    Tensor tr = Tensor::matrix(L + 2, L + 2);
    for (double& v : e.values()) v = rng.uniform(-3.0, 3.0);
    for (double& v : tr.values()) v = rng.uniform(-2.0, 2.0);
    const CrfPotentials pot{e, tr};
    const double log_z = log_partition(pot);
    const PathScore best = viterbi(pot);
    const BruteForceResult bf = brute_force(pot);
    r.max_log_partition_error = std::max(r.max_log_partition_error, std::abs(log_z - bf.log_partition));
    r.max_best_score_error = std::max(r.max_best_score_error, std::abs(best.score - bf.best.score));
    std::size_t near_max = 0;
    for (double s : bf.scores) {
      if (bf.best.score - s < 1e-9) ++near_max;
    }
    if (near_max == 1 && best.labels != bf.best.labels) ++r.path_mismatches;
    ++r.instances;
  }
  r.seconds = seconds_since(start);
  return r;
}

std::vector<GradCaseSpec> grad_case_menu(bool extras) {
  std::vector<GradCaseSpec> out;
  for (const auto& [t, m] : buildable_combinations()) {
    GradCaseSpec s;
    s.name = std::string(to_string(t)) + "/" + std::string(to_string(m));
    s.topology = t;
    s.lm_mode = m;
    out.push_back(s);
  }
  if (extras) {
    GradCaseSpec soft;
    soft.name = "single/none/softmax";
    soft.output_layer = OutputLayerKind::softmax;
    out.push_back(soft);
    GradCaseSpec ctx;
    ctx.name = "hierarchical/shared/contextual";
    ctx.topology = Topology::hierarchical;
    ctx.lm_mode = LmMode::shared;
    ctx.contextual = true;
    out.push_back(ctx);
  }
  return out;
}

GradCase run_grad_case(const GradCaseSpec& spec, std::uint64_t seed, double eps) {
  const auto start = std::chrono::steady_clock::now();
  TaggedCorpus corpus = grad_corpus();
  const bool multi = spec.topology != Topology::single;
  if (!multi) {
    for (Sentence& s : corpus.sentences) s.labels.erase("aux");
  }
  TaggedCorpus aux_view = corpus;
  aux_view.task_name = "aux";
  aux_view.label_set.clear();
  std::vector<const TaggedCorpus*> sources{&corpus};
  if (multi) sources.push_back(&aux_view);
  const Vocabulary vocab = build_vocab(sources);

  ModelSpec ms;
  ms.topology = spec.topology;
  ms.lm_mode = spec.lm_mode;
  ms.output_layer = spec.output_layer;
  ms.main_task = "main";
  if (multi) ms.aux_task = "aux";
  ms.hidden = 3;
  ms.repr.word_dim = 3;
  ms.repr.char_dim = 2;
  ms.repr.char_window = 3;
  ms.repr.char_filters = 3;
  ms.lm_vocab_size = 4;  // leaves some words to UNK
  ContextualVectorStore store;
  if (spec.contextual) {
    ms.repr.context_layers = 2;
    ms.repr.context_dim = 3;
    ms.repr.context_raw_weights = {0.3, -0.2};
    ms.repr.gamma = 0.8;
    Rng crng(Rng::derive_seed(seed, "grad-context"));
    for (const Sentence& s : corpus.sentences) {
      ContextualRecord rec;
      rec.tokens = s.size();
      rec.layers = 2;
      rec.dim = 3;
      rec.values.resize(rec.tokens * rec.layers * rec.dim);
      for (double& v : rec.values) v = crng.uniform(-1.0, 1.0);
      store.insert(sentence_key(s.tokens), std::move(rec));
    }
  }
  Model model = Model::build(ms, vocab, seed);
  if (spec.contextual) model.set_context_store(&store);

  const std::vector<std::size_t> rows{0, 1};
  const Batch batch = encode_batch(corpus, rows, vocab);
  const std::uint64_t mask_seed = Rng::derive_seed(seed, "grad-dropout");
  const LossFn loss = [&](bool accumulate) {
    Rng masks(mask_seed);
    ForwardOptions options;
    options.mode = Mode::train;
    options.compute_loss = true;
    options.accumulate_grad = accumulate;
    options.lambda = ForwardOptions{}.lambda;
    double total = model.forward_task(batch, TaskRole::main, options, masks).loss;
    if (multi) total += model.forward_task(batch, TaskRole::auxiliary, options, masks).loss;
    return total;
  };
  GradCase out;
  out.name = spec.name;
  out.report = grad_check(loss, model.parameters(), eps);
  out.seconds = seconds_since(start);
  return out;
}

std::vector<FixtureResult> scorer_fixtures(const std::string& dir) {
  std::vector<std::filesystem::path> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".txt") inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) throw Error("no scorer fixtures in " + dir);
  std::vector<FixtureResult> out;
  for (const auto& path : inputs) {
    FixtureResult r;
    r.name = path.stem().string();
    std::ifstream expected(std::filesystem::path(path).replace_extension(".expected"));
    if (!expected) throw Error("fixture " + r.name + " has no .expected file");
    std::ostringstream ss;
    ss << expected.rdbuf();
    r.expected = ss.str();
    const ScoredSequences scored = parse_scored_file(path.string());
    r.actual = format_conlleval(f1_score(scored.gold, scored.predicted));
    r.match = r.actual == r.expected;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace seqmtl
