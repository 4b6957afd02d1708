#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "itr/corpus.hpp"

namespace itr {

// Deterministic toy corpus of short "book descriptions". Each class owns a
// disjoint keyword set; all classes share filler words and stopwords. With
// label_noise = 0 the classes are linearly separable.
struct SyntheticConfig {
  std::size_t n_docs = 300;
  std::size_t words_per_doc = 24;
  std::size_t keywords_per_doc = 5;
  double label_noise = 0.0;  // fraction of docs whose label is replaced at random
  std::uint64_t seed = 0;
  std::string id_prefix = "doc";
};

namespace detail {

struct SyntheticClass {
  std::string_view name;
  std::array<std::string_view, 12> keywords;
};

inline constexpr std::array<SyntheticClass, 3> kSyntheticClasses = {{
    {"mystery",
     {"detective", "murder", "clue", "suspect", "alibi", "inspector", "crime", "victim", "motive", "witness",
      "poison", "sleuth"}},
    {"romance",
     {"love", "heart", "kiss", "passion", "wedding", "romantic", "desire", "lovers", "bride", "courtship", "flirt",
      "sweetheart"}},
    {"science",
     {"quantum", "galaxy", "physics", "experiment", "theory", "molecule", "telescope", "evolution", "laboratory",
      "particle", "genome", "equation"}},
}};

inline constexpr std::array<std::string_view, 24> kFillerWords = {
    "book",    "story",   "chapter", "author", "reader", "page",    "novel",  "life",
    "journey", "world",   "people",  "years",  "time",   "secrets", "family", "city",
    "night",   "morning", "house",   "friend", "letter", "summer",  "winter", "truth"};

inline constexpr std::array<std::string_view, 10> kSyntheticStopwords = {"the", "a",    "of",   "and",  "in",
                                                                        "with", "this", "that", "from", "into"};

}  // namespace detail

inline LabeledCorpus make_synthetic_corpus(const SyntheticConfig& cfg) {
  using namespace detail;
  LabeledCorpus corpus;
  for (const auto& c : kSyntheticClasses) corpus.label_names.emplace_back(c.name);
  std::mt19937_64 rng(cfg.seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t k = kSyntheticClasses.size();

  for (std::size_t i = 0; i < cfg.n_docs; ++i) {
    const std::size_t cls = i % k;
    std::vector<std::string_view> words;
    for (std::size_t w = 0; w < cfg.words_per_doc; ++w) {
      if (w % 3 == 1) {
        words.push_back(kSyntheticStopwords[pick(kSyntheticStopwords.size())]);
      } else {
        words.push_back(kFillerWords[pick(kFillerWords.size())]);
      }
    }
    for (std::size_t j = 0; j < cfg.keywords_per_doc; ++j) {
      words[pick(words.size())] = kSyntheticClasses[cls].keywords[pick(12)];
    }
    std::string text;
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w) text += (w % 7 == 0) ? ". " : " ";
      text += words[w];
    }
    if (!text.empty()) text[0] = static_cast<char>(text[0] - 'a' + 'A');
    text += '.';
    std::size_t label = cls;
    if (cfg.label_noise > 0 && u(rng) < cfg.label_noise) label = pick(k);
    char id[32];
    std::snprintf(id, sizeof id, "%s%05zu", cfg.id_prefix.c_str(), i + 1);
    corpus.docs.push_back({id, std::move(text), label});
  }
  return corpus;
}

}  // namespace itr
