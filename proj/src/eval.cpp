#include "seqmtl/eval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <set>

#include "seqmtl/tensor.hpp"

namespace seqmtl {

ParsedLabel parse_label(std::string_view label) {
  if (label == "O") return {'O', ""};
  if (label.size() >= 3 && (label[0] == 'B' || label[0] == 'I') && label[1] == '-') {
    return {label[0], std::string(label.substr(2))};
  }
  throw Error("unparseable label '" + std::string(label) + "' (expected O, B-<type> or I-<type>)");
}

std::vector<Chunk> extract_chunks(const LabelSequence& labels) {
  std::vector<Chunk> chunks;
  bool open = false;
  Chunk current;
  ParsedLabel prev{'O', ""};
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const ParsedLabel cur = parse_label(labels[t]);
    const bool type_change = cur.type != prev.type;
    const bool ends = prev.prefix != 'O' && (cur.prefix != 'I' || type_change);
    const bool starts = cur.prefix == 'B' || (cur.prefix == 'I' && (prev.prefix == 'O' || type_change));
    if (ends && open) {
      current.end = t;
      chunks.push_back(current);
      open = false;
    }
    if (starts) {
      current = Chunk{cur.type, t, t};
      open = true;
    }
    prev = cur;
  }
  if (open) {
    current.end = labels.size();
    chunks.push_back(current);
  }
  return chunks;
}

LabelSequence iob1_to_bio2(const LabelSequence& labels) {
  LabelSequence out(labels.size());
  ParsedLabel prev{'O', ""};
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const ParsedLabel cur = parse_label(labels[t]);
    if (cur.prefix == 'O') {
      out[t] = "O";
    } else if (cur.prefix == 'B' || prev.prefix == 'O' || prev.type != cur.type) {
      out[t] = "B-" + cur.type;
    } else {
      out[t] = "I-" + cur.type;
    }
    prev = cur;
  }
  return out;
}

double f1_from(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

namespace {

void finish(std::size_t correct, std::size_t predicted, std::size_t gold, double& p, double& r,
            double& f) {
  p = predicted > 0 ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
  r = gold > 0 ? static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
  f = f1_from(p, r);
}

}  // namespace

EvalReport f1_score(const std::vector<LabelSequence>& gold, const std::vector<LabelSequence>& pred) {
  if (gold.size() != pred.size()) {
    throw Error("gold has " + std::to_string(gold.size()) + " sentences but prediction has " +
                std::to_string(pred.size()));
  }
  EvalReport report;
  std::map<std::string, std::size_t> gold_token_total;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw Error("length mismatch at sentence " + std::to_string(s) + ": gold " +
                  std::to_string(gold[s].size()) + " vs predicted " + std::to_string(pred[s].size()));
    }
    report.tokens += gold[s].size();
    for (std::size_t t = 0; t < gold[s].size(); ++t) {
      if (gold[s][t] == pred[s][t]) ++report.correct_tags;
    }
    const auto g = extract_chunks(gold[s]);
    const auto p = extract_chunks(pred[s]);
    const std::set<Chunk> gold_set(g.begin(), g.end());
    for (const Chunk& c : g) {
      auto& ts = report.per_type[c.type];
      ++ts.gold;
      gold_token_total[c.type] += c.length();
    }
    for (const Chunk& c : p) {
      auto& ts = report.per_type[c.type];
      ++ts.predicted;
      if (gold_set.count(c) != 0) ++ts.correct;
    }
  }
  for (auto& [type, ts] : report.per_type) {
    report.gold_chunks += ts.gold;
    report.predicted_chunks += ts.predicted;
    report.correct_chunks += ts.correct;
    finish(ts.correct, ts.predicted, ts.gold, ts.precision, ts.recall, ts.f1);
    if (ts.gold > 0) {
      ts.mean_gold_length =
          static_cast<double>(gold_token_total[type]) / static_cast<double>(ts.gold);
    }
  }
  finish(report.correct_chunks, report.predicted_chunks, report.gold_chunks, report.precision,
         report.recall, report.f1);
  report.accuracy = report.tokens > 0
                        ? static_cast<double>(report.correct_tags) / static_cast<double>(report.tokens)
                        : 0.0;
  return report;
}

namespace {

// Percentages computed in the same order as conlleval so the two-decimal
// rounding agrees digit for digit.
struct Percentages {
  double precision = 0.0, recall = 0.0, fb1 = 0.0;
};

Percentages percentages(std::size_t correct, std::size_t found, std::size_t gold) {
  Percentages p;
  if (found > 0) p.precision = 100.0 * static_cast<double>(correct) / static_cast<double>(found);
  if (gold > 0) p.recall = 100.0 * static_cast<double>(correct) / static_cast<double>(gold);
  if (p.precision + p.recall > 0) p.fb1 = 2 * p.precision * p.recall / (p.precision + p.recall);
  return p;
}

}  // namespace

std::string format_conlleval(const EvalReport& r) {
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "processed %zu tokens with %zu phrases; found: %zu phrases; correct: %zu.\n",
                r.tokens, r.gold_chunks, r.predicted_chunks, r.correct_chunks);
  out += buf;
  if (r.tokens > 0) {
    const Percentages p = percentages(r.correct_chunks, r.predicted_chunks, r.gold_chunks);
    std::snprintf(buf, sizeof buf, "accuracy: %6.2f%%; precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f\n",
                  100.0 * static_cast<double>(r.correct_tags) / static_cast<double>(r.tokens), p.precision,
                  p.recall, p.fb1);
    out += buf;
  }
  for (const auto& [type, ts] : r.per_type) {
    const Percentages p = percentages(ts.correct, ts.predicted, ts.gold);
    std::snprintf(buf, sizeof buf, "%17s: precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f  %zu\n",
                  type.c_str(), p.precision, p.recall, p.fb1, ts.predicted);
    out += buf;
  }
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["tokens"] = r.tokens;
  j["correct_tags"] = r.correct_tags;
  j["gold_chunks"] = r.gold_chunks;
  j["predicted_chunks"] = r.predicted_chunks;
  j["correct_chunks"] = r.correct_chunks;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  auto& types = j["per_type"] = nlohmann::json::array();
  for (const auto& [type, ts] : r.per_type) {
    types.push_back({{"type", type},
                     {"gold", ts.gold},
                     {"predicted", ts.predicted},
                     {"correct", ts.correct},
                     {"precision", ts.precision},
                     {"recall", ts.recall},
                     {"f1", ts.f1},
                     {"mean_gold_length", ts.mean_gold_length}});
  }
  return j;
}

ScoredSequences parse_scored(std::istream& in) {
  ScoredSequences out;
  bool open = false;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(f);
    if (cols.empty() || cols[0] == "-DOCSTART-") {
      open = false;
      continue;
    }
    if (cols.size() < 3) {
      throw Error("line " + std::to_string(number) + ": expected token, gold and predicted columns");
    }
    if (!open) {
      out.gold.emplace_back();
      out.predicted.emplace_back();
      open = true;
    }
    out.gold.back().push_back(cols[cols.size() - 2]);
    out.predicted.back().push_back(cols.back());
  }
  return out;
}

ScoredSequences parse_scored_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  return parse_scored(f);
}

}  // namespace seqmtl
