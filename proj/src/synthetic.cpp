#include "seqmtl/synthetic.hpp"

#include <algorithm>
#include <array>

#include "seqmtl/rng.hpp"
#include "seqmtl/tensor.hpp"

namespace seqmtl {
namespace {

struct EntityClass {
  const char* name;
  std::array<const char*, 3> suffixes;
  std::array<const char*, 2> subtypes;
  std::array<const char*, 2> cues;
};

constexpr std::array<EntityClass, 3> kClasses = {{
    {"PER", {"son", "ova", "ski"}, {"actor", "politician"}, {"actor", "senator"}},
    {"LOC", {"ville", "land", "burg"}, {"city", "country"}, {"town", "nation"}},
    {"ORG", {"corp", "tech", "inc"}, {"company", "school"}, {"firm", "college"}},
}};

constexpr std::array<const char*, 14> kFillers = {"the", "a", "met", "visited", "in", "with", "said",
                                                 "today", "and", "of", "from", "near", "saw", "."};

constexpr std::array<const char*, 10> kOnsets = {"b", "d", "k", "m", "n", "p", "r", "t", "v", "z"};
constexpr std::array<const char*, 5> kVowels = {"a", "e", "i", "o", "u"};

std::string make_name(Rng& rng, const EntityClass& c) {
  std::string s;
  const std::size_t syllables = 1 + rng.below(2);
  for (std::size_t i = 0; i < syllables; ++i) {
    s += kOnsets[rng.below(kOnsets.size())];
    s += kVowels[rng.below(kVowels.size())];
  }
  s += c.suffixes[rng.below(c.suffixes.size())];
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

}  // namespace

std::string coarse_label(const std::string& label) {
  if (label.size() < 3 || label[1] != '-') return label;
  const auto dash = label.find('-', 2);
  return dash == std::string::npos ? label : label.substr(0, dash);
}

TaggedCorpus synthetic_corpus(const std::string& task, const SyntheticOptions& options, Split split) {
  if (options.min_length == 0 || options.max_length < options.min_length) {
    throw Error("synthetic corpus: bad length range");
  }
  Rng rng(Rng::derive_seed(options.seed, "synthetic"));
  // Pools are drawn from a stream that ignores the seed, so corpora with
  // different seeds share names when a pool is requested.
  std::array<std::vector<std::string>, 3> pools;
  if (options.name_pool > 0) {
    Rng pool_rng(Rng::derive_seed(0, "synthetic-pool"));
    for (std::size_t c = 0; c < kClasses.size(); ++c) {
      for (std::size_t i = 0; i < options.name_pool; ++i) pools[c].push_back(make_name(pool_rng, kClasses[c]));
    }
  }
  TaggedCorpus corpus;
  corpus.task_name = task;
  corpus.split = split;
  auto note_label = [&](const std::string& l) {
    for (const auto& s : corpus.label_set) {
      if (s == l) return;
    }
    corpus.label_set.push_back(l);
  };
  for (std::size_t n = 0; n < options.sentences; ++n) {
    const std::size_t target =
        options.min_length + static_cast<std::size_t>(rng.below(options.max_length - options.min_length + 1));
    Sentence s;
    LabelSequence labels;
    while (s.tokens.size() < target) {
      const std::size_t room = target - s.tokens.size();
      if (room >= 3 && rng.bernoulli(options.entity_rate)) {
        const std::size_t c = rng.below(kClasses.size());
        const EntityClass& cls = kClasses[c];
        const std::size_t sub = rng.below(2);
        std::string type = cls.name;
        if (options.fine_types) {
          type += "-";
          type += cls.subtypes[sub];
        }
        // The cue is always present so coarse and fine corpora share surface form.
        s.tokens.push_back(cls.cues[sub]);
        labels.push_back("O");
        const std::size_t len = 1 + rng.below(std::min<std::size_t>(2, room - 1));
        for (std::size_t i = 0; i < len; ++i) {
          s.tokens.push_back(options.name_pool > 0 ? pools[c][rng.below(pools[c].size())] : make_name(rng, cls));
          labels.push_back((i == 0 ? "B-" : "I-") + type);
        }
      } else {
        s.tokens.push_back(kFillers[rng.below(kFillers.size())]);
        labels.push_back("O");
      }
    }
    for (const auto& l : labels) note_label(l);
    s.labels[task] = std::move(labels);
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace seqmtl
