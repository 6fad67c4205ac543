// seqmtl: command-line front end (stats, train, evaluate, predict,
// gradcheck, selftest).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqmtl/checkpoint.hpp"
#include "seqmtl/config.hpp"
#include "seqmtl/corpus.hpp"
#include "seqmtl/diagnostics.hpp"
#include "seqmtl/embeddings.hpp"
#include "seqmtl/eval.hpp"
#include "seqmtl/kernels.hpp"
#include "seqmtl/model.hpp"
#include "seqmtl/trainer.hpp"

#ifndef SEQMTL_FIXTURE_DIR
#define SEQMTL_FIXTURE_DIR "tests/fixtures/conlleval"
#endif

namespace {

using seqmtl::Error;
namespace fs = std::filesystem;

constexpr const char* kCheckpointDirEnv = "SEQMTL_CHECKPOINT_DIR";
constexpr double kGradTolerance = 1e-4;

// Failure exit: one JSON object on a single stderr line.
int fail(const std::string& command, const std::string& message, int status = 1) {
  const nlohmann::json j{{"status", "error"}, {"command", command}, {"error", message}};
  std::cerr << j.dump() << std::endl;
  return status;
}

seqmtl::ConllOptions conll_options(seqmtl::LabelScheme scheme, seqmtl::Split split) {
  seqmtl::ConllOptions o;
  o.scheme = scheme;
  o.split = split;
  return o;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------------ stats

struct StatsArgs {
  std::string train, dev, test, task = "ner", scheme = "bio2";
  bool json = false;
};

int run_stats(const StatsArgs& a) {
  const seqmtl::LabelScheme scheme = a.scheme == "iob1" ? seqmtl::LabelScheme::iob1 : seqmtl::LabelScheme::bio2;
  std::vector<seqmtl::CorpusStats> stats;
  const std::pair<const std::string*, seqmtl::Split> files[] = {
      {&a.train, seqmtl::Split::train}, {&a.dev, seqmtl::Split::dev}, {&a.test, seqmtl::Split::test}};
  for (const auto& [path, split] : files) {
    if (path->empty()) continue;
    stats.push_back(seqmtl::corpus_stats(seqmtl::read_conll_file(*path, a.task, conll_options(scheme, split))));
  }
  if (stats.empty()) throw Error("stats needs at least one of --train, --dev, --test");
  if (a.json) {
    std::cout << seqmtl::stats_to_json(stats).dump(2) << '\n';
  } else {
    std::cout << seqmtl::format_stats(stats);
  }
  return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string config_file, train, dev, aux, topology, lm_mode, main_task, aux_task;
  std::string embeddings, contextual, out;
  std::vector<std::string> sets;
  bool quiet = false;
};

std::string resolve_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kCheckpointDirEnv); env != nullptr && *env != '\0') return env;
  return "runs/latest";
}

int run_train(const TrainArgs& a) {
  seqmtl::RunConfig cfg;
  if (!a.config_file.empty()) cfg.merge_file(a.config_file);
  for (const auto& s : a.sets) cfg.merge_assignment(s);
  if (!a.topology.empty()) cfg.set("topology", a.topology);
  if (!a.lm_mode.empty()) cfg.set("lm_mode", a.lm_mode);
  if (!a.main_task.empty()) cfg.set("main_task", a.main_task);
  if (!a.aux_task.empty()) cfg.set("aux_task", a.aux_task);

  const std::string out_dir = resolve_out_dir(a.out);
  fs::create_directories(out_dir);
  const std::string resolved = cfg.to_text();
  {
    std::ofstream f(fs::path(out_dir) / "config.cfg");
    f << resolved;
  }
  std::ofstream log(fs::path(out_dir) / "run.log", std::ios::trunc);
  log << "# resolved config\n" << resolved;
  log << "kernels = " << seqmtl::kernels::active().name << "\n";
  if (!a.quiet) std::cerr << "# resolved config\n" << resolved;

  const seqmtl::Topology topology = seqmtl::parse_topology(cfg.get("topology"));
  const bool multi = topology != seqmtl::Topology::single;
  if (multi && a.aux.empty()) throw Error("topology " + cfg.get("topology") + " needs --aux");
  if (!multi && !a.aux.empty()) throw Error("--aux given for the single topology");

  const auto scheme = cfg.label_scheme();
  const std::string main_task = cfg.get("main_task");
  const auto train = seqmtl::read_conll_file(a.train, main_task, conll_options(scheme, seqmtl::Split::train));
  const auto dev = seqmtl::read_conll_file(a.dev, main_task, conll_options(scheme, seqmtl::Split::dev));
  std::optional<seqmtl::TaggedCorpus> aux;
  if (multi) aux = seqmtl::read_conll_file(a.aux, cfg.get("aux_task"), conll_options(scheme, seqmtl::Split::train));

  std::vector<const seqmtl::TaggedCorpus*> sources{&train};
  if (aux) sources.push_back(&*aux);
  std::vector<std::string> pretrained_words;
  if (!a.embeddings.empty()) pretrained_words = seqmtl::read_pretrained_words(a.embeddings);
  const seqmtl::Vocabulary vocab =
      seqmtl::build_vocab(sources, a.embeddings.empty() ? nullptr : &pretrained_words, cfg.vocab_options());

  std::optional<seqmtl::ContextualVectorStore> store;
  if (!a.contextual.empty()) store = seqmtl::load_contextual_store(a.contextual);
  const seqmtl::ModelSpec spec = cfg.model_spec(store ? store->layers() : 0, store ? store->dim() : 0);

  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  std::optional<seqmtl::EmbeddingMatrix> emb;
  if (!a.embeddings.empty()) {
    seqmtl::Rng emb_rng(seqmtl::Rng::derive_seed(seed, "pretrained-fill"));
    emb = seqmtl::load_pretrained(a.embeddings, vocab, emb_rng);
    if (emb->dim != spec.repr.word_dim) {
      throw Error("embedding file has dimension " + std::to_string(emb->dim) + ", glove_dim is " +
                  std::to_string(spec.repr.word_dim));
    }
  }
  seqmtl::Model model = seqmtl::Model::build(spec, vocab, seed, emb ? &*emb : nullptr);
  if (store) model.set_context_store(&*store);

  seqmtl::TrainConfig tc = cfg.train_config();
  tc.checkpoint_dir = out_dir;
  log << "parameters = " << model.parameter_count() << "\n";
  log.flush();

  seqmtl::TrainData data{&train, aux ? &*aux : nullptr, &dev};
  const auto state = seqmtl::train(model, data, tc, [&](const seqmtl::EpochRecord& r) {
    const std::string line = r.to_json().dump();
    log << line << '\n';
    log.flush();
    if (!a.quiet) std::cerr << line << '\n';
    return true;
  });

  nlohmann::json summary{{"status", "ok"},
                         {"epochs", state.epochs_completed},
                         {"best_epoch", state.best_epoch},
                         {"best_dev_f1", state.best_dev_f1},
                         {"stopped_early", state.stopped_early},
                         {"checkpoint", state.best_checkpoint},
                         {"history", (fs::path(out_dir) / "history.jsonl").string()}};
  std::cout << summary.dump() << '\n';
  return 0;
}

// --------------------------------------------------------------- evaluate

struct EvalArgs {
  std::string model, test, scored, contextual;
  bool json = false;
};

seqmtl::LabelScheme checkpoint_scheme(const nlohmann::json& config) {
  if (config.contains("label_scheme") && config["label_scheme"] == "iob1") return seqmtl::LabelScheme::iob1;
  return seqmtl::LabelScheme::bio2;
}

int run_evaluate(const EvalArgs& a) {
  seqmtl::EvalReport report;
  if (!a.scored.empty()) {
    if (!a.model.empty() || !a.test.empty()) throw Error("--scored excludes --model and --test");
    const auto scored = seqmtl::parse_scored_file(a.scored);
    report = seqmtl::f1_score(scored.gold, scored.predicted);
  } else {
    if (a.model.empty() || a.test.empty()) throw Error("evaluate needs --model and --test, or --scored");
    auto loaded = seqmtl::load_checkpoint(a.model);
    std::optional<seqmtl::ContextualVectorStore> store;
    if (!a.contextual.empty()) {
      store = seqmtl::load_contextual_store(a.contextual);
      loaded.model.set_context_store(&*store);
    }
    const std::string task = loaded.model.task_name(seqmtl::TaskRole::main);
    const auto test = seqmtl::read_conll_file(
        a.test, task, conll_options(checkpoint_scheme(loaded.config), seqmtl::Split::test));
    std::vector<seqmtl::LabelSequence> gold;
    for (const auto& s : test.sentences) gold.push_back(s.labels.at(task));
    report = seqmtl::f1_score(gold, loaded.model.predict_corpus(test, seqmtl::TaskRole::main));
  }
  if (a.json) {
    std::cout << seqmtl::to_json(report).dump(2) << '\n';
  } else {
    std::cout << seqmtl::format_conlleval(report);
  }
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string model, input, output, contextual;
};

int run_predict(const PredictArgs& a) {
  auto loaded = seqmtl::load_checkpoint(a.model);
  std::optional<seqmtl::ContextualVectorStore> store;
  if (!a.contextual.empty()) {
    store = seqmtl::load_contextual_store(a.contextual);
    loaded.model.set_context_store(&*store);
  }
  const std::string text = slurp(a.input);
  seqmtl::ConllOptions options;
  options.label_column = std::nullopt;
  const auto corpus = seqmtl::parse_conll_text(text, loaded.model.task_name(seqmtl::TaskRole::main), options);
  const auto predicted = loaded.model.predict_corpus(corpus, seqmtl::TaskRole::main);

  std::ostringstream out;
  std::istringstream in(text);
  std::string line;
  std::size_t sentence = 0, token = 0;
  bool in_sentence = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first) || first == "-DOCSTART-") {
      if (in_sentence) {
        ++sentence;
        token = 0;
        in_sentence = false;
      }
      out << line << '\n';
      continue;
    }
    in_sentence = true;
    out << line << ' ' << predicted.at(sentence).at(token++) << '\n';
  }
  if (a.output.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream f(a.output);
    if (!f) throw Error("cannot write " + a.output);
    f << out.str();
  }
  return 0;
}

// -------------------------------------------------------------- gradcheck

struct GradArgs {
  std::uint64_t seed = 7;
  std::string only;
  double eps = 1e-5;
  bool json = false;
};

int run_gradcheck(const GradArgs& a) {
  double worst = 0.0;
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& spec : seqmtl::grad_case_menu(true)) {
    if (!a.only.empty() && spec.name != a.only) continue;
    const auto c = seqmtl::run_grad_case(spec, a.seed, a.eps);
    worst = std::max(worst, c.report.max_relative_error);
    cases.push_back({{"case", c.name},
                     {"max_relative_error", c.report.max_relative_error},
                     {"worst_parameter", c.report.worst_parameter},
                     {"worst_index", c.report.worst_index},
                     {"worst_analytic", c.report.worst_analytic},
                     {"worst_numeric", c.report.worst_numeric},
                     {"entries", c.report.entries_checked},
                     {"seconds", c.seconds}});
    if (!a.json) {
      std::printf("%-34s max rel. error %.3e  (%s[%zu]: analytic %.6e, numeric %.6e; %zu entries, %.2fs)\n",
                  c.name.c_str(), c.report.max_relative_error, c.report.worst_parameter.c_str(),
                  c.report.worst_index, c.report.worst_analytic, c.report.worst_numeric,
                  c.report.entries_checked, c.seconds);
    }
  }
  if (cases.empty()) throw Error("no gradient case named '" + a.only + "'");
  const bool ok = worst < kGradTolerance;
  if (a.json) {
    std::cout << nlohmann::json{{"seed", a.seed}, {"max_relative_error", worst}, {"tolerance", kGradTolerance},
                                {"passed", ok}, {"cases", cases}}
                     .dump(2)
              << '\n';
  } else {
    std::printf("max relative error: %.3e (tolerance %.0e) %s\n", worst, kGradTolerance, ok ? "PASS" : "FAIL");
  }
  return ok ? 0 : 1;
}

// --------------------------------------------------------------- selftest

struct SelftestArgs {
  std::string fixtures = SEQMTL_FIXTURE_DIR;
  std::size_t instances = 200;
  std::uint64_t seed = 1;
};

int run_selftest(const SelftestArgs& a) {
  bool ok = true;
  const auto crf = seqmtl::crf_exactness(a.instances, a.seed);
  const bool crf_ok =
      crf.max_log_partition_error < 1e-9 && crf.max_best_score_error < 1e-9 && crf.path_mismatches == 0;
  ok = ok && crf_ok;
  std::printf("[%s] crf brute force: %zu instances, max |logZ diff| %.2e, max |best score diff| %.2e, "
              "%zu path mismatches, %.2fs\n",
              crf_ok ? "PASS" : "FAIL", crf.instances, crf.max_log_partition_error, crf.max_best_score_error,
              crf.path_mismatches, crf.seconds);
  for (const auto& f : seqmtl::scorer_fixtures(a.fixtures)) {
    ok = ok && f.match;
    std::printf("[%s] scorer fixture %s\n", f.match ? "PASS" : "FAIL", f.name.c_str());
    if (!f.match) std::printf("expected:\n%sactual:\n%s", f.expected.c_str(), f.actual.c_str());
  }
  std::printf("selftest %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task CNN-BLSTM-CRF sequence labeler"};
  app.require_subcommand(1);
  std::string kernels = "auto";
  app.add_option("--kernels", kernels, "numeric kernels: auto, scalar, avx2 or neon")
      ->envname("SEQMTL_KERNELS");

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "corpus statistics per split");
  c_stats->add_option("--train", stats.train, "training file (CoNLL columns)");
  c_stats->add_option("--dev", stats.dev, "development file");
  c_stats->add_option("--test", stats.test, "test file");
  c_stats->add_option("--task", stats.task, "task name");
  c_stats->add_option("--scheme", stats.scheme, "bio2 or iob1")->check(CLI::IsMember({"bio2", "iob1"}));
  c_stats->add_flag("--json", stats.json, "JSON output");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train a model; writes best.ckpt and history.jsonl");
  c_train->add_option("--config", train.config_file, "key = value config file")->check(CLI::ExistingFile);
  c_train->add_option("--set", train.sets, "override one config key (key=value); repeatable");
  c_train->add_option("--train", train.train, "main-task training file")->required()->check(CLI::ExistingFile);
  c_train->add_option("--dev", train.dev, "main-task development file")->required()->check(CLI::ExistingFile);
  c_train->add_option("--aux", train.aux, "auxiliary-task training file")->check(CLI::ExistingFile);
  c_train->add_option("--topology", train.topology, "single, embedding_shared, rnn_shared or hierarchical");
  c_train->add_option("--lm-mode", train.lm_mode, "none, shared or unshared");
  c_train->add_option("--main-task", train.main_task, "main task name");
  c_train->add_option("--aux-task", train.aux_task, "auxiliary task name");
  c_train->add_option("--embeddings", train.embeddings, "pretrained word vectors (text)")->check(CLI::ExistingFile);
  c_train->add_option("--contextual", train.contextual, "precomputed contextual layer vectors")
      ->check(CLI::ExistingFile);
  c_train->add_option("--out", train.out, std::string("output directory (default: $") + kCheckpointDirEnv +
                                               " or runs/latest)");
  c_train->add_flag("--quiet", train.quiet, "no progress on stderr");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "conlleval-style report");
  c_eval->add_option("--model", eval.model, "checkpoint")->check(CLI::ExistingFile);
  c_eval->add_option("--test", eval.test, "labelled test file")->check(CLI::ExistingFile);
  c_eval->add_option("--scored", eval.scored, "file with gold and predicted label columns")
      ->check(CLI::ExistingFile);
  c_eval->add_option("--contextual", eval.contextual, "precomputed contextual layer vectors")
      ->check(CLI::ExistingFile);
  c_eval->add_flag("--json", eval.json, "JSON output");

  PredictArgs predict;
  auto* c_predict = app.add_subcommand("predict", "append a predicted label column");
  c_predict->add_option("--model", predict.model, "checkpoint")->required()->check(CLI::ExistingFile);
  c_predict->add_option("--input", predict.input, "column file; tokens in column 1")
      ->required()
      ->check(CLI::ExistingFile);
  c_predict->add_option("--output", predict.output, "output file (default: stdout)");
  c_predict->add_option("--contextual", predict.contextual, "precomputed contextual layer vectors")
      ->check(CLI::ExistingFile);

  GradArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check over tiny model layouts");
  c_grad->add_option("--seed", grad.seed, "initialization seed");
  c_grad->add_option("--case", grad.only, "run one layout, e.g. hierarchical/unshared");
  c_grad->add_option("--eps", grad.eps, "central-difference step");
  c_grad->add_flag("--json", grad.json, "JSON output");

  SelftestArgs self;
  auto* c_self = app.add_subcommand("selftest", "CRF brute-force and scorer fixture suites");
  c_self->add_option("--fixtures", self.fixtures, "scorer fixture directory");
  c_self->add_option("--instances", self.instances, "random CRF instances");
  c_self->add_option("--seed", self.seed, "seed for the CRF instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("parse", e.what(), 2);
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    seqmtl::kernels::select(kernels);
    if (cmd == c_stats) return run_stats(stats);
    if (cmd == c_train) return run_train(train);
    if (cmd == c_eval) return run_evaluate(eval);
    if (cmd == c_predict) return run_predict(predict);
    if (cmd == c_grad) return run_gradcheck(grad);
    if (cmd == c_self) return run_selftest(self);
  } catch (const std::exception& e) {
    return fail(name, e.what());
  }
  return fail(name, "unhandled command");
}
