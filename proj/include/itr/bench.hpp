#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "itr/classifier.hpp"
#include "itr/corpus.hpp"
#include "itr/explain.hpp"

namespace itr {

struct TimingStats {
  std::string name;
  std::size_t repetitions = 0;
  double mean_s = 0;
  double stddev_s = 0;  // sample standard deviation
  double min_s = 0;
  double max_s = 0;
};

inline TimingStats summarize_timings(std::string name, const std::vector<double>& secs) {
  TimingStats t;
  t.name = std::move(name);
  t.repetitions = secs.size();
  if (secs.empty()) return t;
  double sum = 0;
  t.min_s = t.max_s = secs.front();
  for (double s : secs) {
    sum += s;
    t.min_s = std::min(t.min_s, s);
    t.max_s = std::max(t.max_s, s);
  }
  t.mean_s = sum / static_cast<double>(secs.size());
  if (secs.size() > 1) {
    double ss = 0;
    for (double s : secs) ss += (s - t.mean_s) * (s - t.mean_s);
    t.stddev_s = std::sqrt(ss / static_cast<double>(secs.size() - 1));
  }
  return t;
}

// Wall-clock seconds for each of `repetitions` calls of fn(rep).
template <typename Fn>
std::vector<double> time_repetitions(std::size_t repetitions, Fn&& fn) {
  std::vector<double> out;
  out.reserve(repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn(r);
    const auto t1 = std::chrono::steady_clock::now();
    out.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return out;
}

struct BenchConfig {
  std::size_t repetitions = 64;
  std::size_t lime_samples = 2500;
  std::uint64_t seed = 0;
};

struct BenchReport {
  TimingStats covar_setup;  // one-off X^T yhat over the held-out set
  TimingStats covar;
  TimingStats lime;
  TimingStats random;
  std::size_t lime_samples = 0;

  double lime_over_covar() const { return covar.mean_s > 0 ? lime.mean_s / covar.mean_s : 0.0; }
};

// Per-instance explanation cost. Documents are cycled; documents with fewer
// than three candidate tokens are skipped. Single-threaded.
inline BenchReport bench_explainers(const std::vector<Document>& docs, const TextClassifier& clf,
                                    const BenchConfig& cfg = {}) {
  std::vector<Document> usable;
  for (const auto& d : docs) {
    if (clf.featurizer.vocabulary_tokens(d.text).size() >= kHighlightCount) usable.push_back(d);
  }
  if (usable.empty()) fail(Errc::TooFewTokens, "no document has enough tokens to explain");

  BenchReport rep;
  rep.lime_samples = cfg.lime_samples;
  const auto heldout = clf.featurizer.featurize_all(usable);
  std::vector<ImportanceVector> importances;
  rep.covar_setup = summarize_timings("covar_setup", time_repetitions(1, [&](std::size_t) {
    importances = covar_importances_all(heldout, clf.weights);
  }));

  // Warm-up pass so first-touch allocation is not billed to one method.
  (void)covar_explain(usable.front(), clf, importances);
  LimeConfig lc;
  lc.n_samples = cfg.lime_samples;
  lc.seed = cfg.seed;
  (void)lime_explain(usable.front(), clf, lc);

  std::size_t sink = 0;
  rep.covar = summarize_timings("covar", time_repetitions(cfg.repetitions, [&](std::size_t r) {
    sink += covar_explain(usable[r % usable.size()], clf, importances).highlights.size();
  }));
  rep.lime = summarize_timings("lime", time_repetitions(cfg.repetitions, [&](std::size_t r) {
    LimeConfig c = lc;
    c.seed = cfg.seed + r;
    sink += lime_explain(usable[r % usable.size()], clf, c).highlights.size();
  }));
  rep.random = summarize_timings("random", time_repetitions(cfg.repetitions, [&](std::size_t r) {
    sink += random_explain(usable[r % usable.size()], cfg.seed + r).highlights.size();
  }));
  if (sink == 0) fail(Errc::TooFewTokens, "benchmark produced no highlights");
  return rep;
}

}  // namespace itr
