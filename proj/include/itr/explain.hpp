#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "itr/classifier.hpp"
#include "itr/corpus.hpp"
#include "itr/error.hpp"
#include "json.hpp"

namespace itr {

enum class ExplainMethod { Covar, Lime, Random };

inline std::string_view method_name(ExplainMethod m) {
  switch (m) {
    case ExplainMethod::Covar: return "covar";
    case ExplainMethod::Lime: return "lime";
    case ExplainMethod::Random: return "random";
  }
  return "?";
}

inline ExplainMethod parse_method(std::string_view s) {
  if (s == "covar") return ExplainMethod::Covar;
  if (s == "lime") return ExplainMethod::Lime;
  if (s == "random") return ExplainMethod::Random;
  fail(Errc::ParseError, "unknown explanation method '" + std::string(s) + "'");
}

inline constexpr std::size_t kHighlightCount = 3;

struct Highlight {
  std::size_t position = 0;  // index into the document's candidate token list
  Span chars;
  Span bytes;
  std::string token;
  double score = 0;
};

struct Explanation {
  std::string doc_id;
  ExplainMethod method = ExplainMethod::Covar;
  std::size_t explained_class = 0;  // zero-based
  std::vector<Highlight> highlights;
  // The top words occur more than kHighlightCount times in the text, so a
  // word-level highlighter would have marked more than three words.
  bool had_duplicates = false;
  // Every surrogate target was identical; scores are all zero.
  bool degenerate = false;
};

struct ImportanceVector {
  std::size_t cls = 0;
  std::vector<double> scores;
};

// a_k = X^T yhat_k (uncentered).
inline ImportanceVector covar_importances(const FeatureMatrix& x, std::span<const double> yhat_k, std::size_t cls) {
  if (yhat_k.size() != x.num_rows()) {
    fail(Errc::DimensionMismatch, "prediction vector length " + std::to_string(yhat_k.size()) +
                                      " differs from sample count " + std::to_string(x.num_rows()));
  }
  ImportanceVector a{cls, std::vector<double>(x.cols, 0.0)};
  for (std::size_t i = 0; i < x.num_rows(); ++i) {
    for (const auto& e : x.rows[i].entries) {
      if (e.feature >= x.cols) fail(Errc::DimensionMismatch, "feature position outside matrix width");
      a.scores[e.feature] += e.value * yhat_k[i];
    }
  }
  return a;
}

// One importance vector per class, from the model's predicted probabilities
// on the held-out matrix.
inline std::vector<ImportanceVector> covar_importances_all(const FeatureMatrix& heldout, const ModelWeights& m) {
  std::vector<std::vector<double>> yhat(m.classes, std::vector<double>(heldout.num_rows()));
  for (std::size_t i = 0; i < heldout.num_rows(); ++i) {
    auto p = predict_proba(heldout.rows[i], m).probs;
    for (std::size_t k = 0; k < m.classes; ++k) yhat[k][i] = p[k];
  }
  std::vector<ImportanceVector> out;
  for (std::size_t k = 0; k < m.classes; ++k) out.push_back(covar_importances(heldout, yhat[k], k));
  return out;
}

namespace detail {

struct Candidate {
  Token token;
  std::size_t feature;  // vocabulary position, or SIZE_MAX when unused
};

inline std::vector<Candidate> vocabulary_candidates(const Featurizer& fz, std::string_view text) {
  std::vector<Candidate> out;
  for (auto& [tok, f] : fz.vocabulary_tokens(text)) out.push_back({std::move(tok), f});
  return out;
}

inline void require_tokens(const std::vector<Candidate>& c, const std::string& doc_id) {
  if (c.size() < kHighlightCount) {
    fail(Errc::TooFewTokens, "document '" + doc_id + "' has " + std::to_string(c.size()) +
                                 " candidate tokens; need " + std::to_string(kHighlightCount));
  }
}

// Ranks candidate positions by score descending, earliest span first on ties.
inline std::vector<std::size_t> rank_positions(const std::vector<Candidate>& c, const std::vector<double>& score) {
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return c[a].token.chars.begin < c[b].token.chars.begin;
  });
  return order;
}

inline Highlight make_highlight(const std::vector<Candidate>& c, std::size_t pos, double score) {
  return Highlight{pos, c[pos].token.chars, c[pos].token.bytes, c[pos].token.text, score};
}

// Highlights in rank order, already chosen.
inline bool has_duplicate_words(const std::vector<Candidate>& c, const std::vector<Highlight>& hl) {
  std::set<std::string> words;
  for (const auto& h : hl) words.insert(h.token);
  std::size_t occurrences = 0;
  for (const auto& cand : c) occurrences += words.count(cand.token.text);
  return occurrences > kHighlightCount;
}

}  // namespace detail

// Highlights the top-3 token positions by x_i * a_k, k = predicted class.
inline Explanation covar_explain(const Document& doc, const TextClassifier& clf,
                                 const std::vector<ImportanceVector>& importances) {
  if (importances.size() != clf.num_classes()) {
    fail(Errc::DimensionMismatch, "need one importance vector per class");
  }
  auto cands = detail::vocabulary_candidates(clf.featurizer, doc.text);
  detail::require_tokens(cands, doc.id);
  const auto x = clf.featurizer.featurize(doc.text);
  const std::size_t k = clf.predict_proba(x).argmax();
  const auto& a = importances[k].scores;
  if (a.size() != clf.featurizer.dimension()) fail(Errc::DimensionMismatch, "importance vector has wrong dimension");

  std::vector<double> score(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) score[i] = x.get(cands[i].feature) * a[cands[i].feature];
  auto order = detail::rank_positions(cands, score);

  Explanation e{doc.id, ExplainMethod::Covar, k, {}, false, false};
  for (std::size_t r = 0; r < kHighlightCount; ++r) e.highlights.push_back(detail::make_highlight(cands, order[r], score[order[r]]));

  // Word-level view: the three best distinct words and all of their occurrences.
  std::vector<Highlight> top_words;
  std::set<std::string> seen;
  for (auto pos : order) {
    if (seen.insert(cands[pos].token.text).second) top_words.push_back(detail::make_highlight(cands, pos, score[pos]));
    if (top_words.size() == kHighlightCount) break;
  }
  e.had_duplicates = detail::has_duplicate_words(cands, top_words);
  return e;
}

// ---------------------------------------------------------------------------
// Perturbation surrogate.

struct LimeConfig {
  std::size_t n_samples = 2500;
  std::size_t n_features = kHighlightCount;
  double kernel_width = 0.25;
  double ridge = 1e-3;
  std::size_t max_resample = 10;
  std::uint64_t seed = 0;
};

struct PerturbationSet {
  std::vector<std::vector<std::uint8_t>> masks;  // 1 = token position kept
  std::vector<double> target;                    // model probability of the explained class
  std::vector<double> weight;                    // proximity kernel
};

namespace detail {

// Weighted ridge with an unpenalized intercept. Returns the coefficients of
// `cols` and the weighted residual sum of squares.
struct RidgeFit {
  std::vector<double> coef;
  double intercept = 0;
  double rss = 0;
};

inline RidgeFit weighted_ridge(const PerturbationSet& ps, const std::vector<std::size_t>& cols, double ridge) {
  const std::size_t s = ps.target.size();
  const std::size_t m = cols.size();
  double wsum = 0, ymean = 0;
  Eigen::VectorXd xmean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < s; ++i) {
    wsum += ps.weight[i];
    ymean += ps.weight[i] * ps.target[i];
    for (std::size_t a = 0; a < m; ++a) xmean[static_cast<Eigen::Index>(a)] += ps.weight[i] * ps.masks[i][cols[a]];
  }
  ymean /= wsum;
  xmean /= wsum;

  const auto mi = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(mi, mi);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(mi);
  Eigen::VectorXd xc(mi);
  for (std::size_t i = 0; i < s; ++i) {
    for (Eigen::Index a = 0; a < mi; ++a) xc[a] = ps.masks[i][cols[static_cast<std::size_t>(a)]] - xmean[a];
    gram.noalias() += ps.weight[i] * xc * xc.transpose();
    rhs.noalias() += ps.weight[i] * (ps.target[i] - ymean) * xc;
  }
  gram.diagonal().array() += ridge;
  Eigen::VectorXd beta = gram.ldlt().solve(rhs);

  RidgeFit fit;
  fit.coef.assign(beta.data(), beta.data() + mi);
  fit.intercept = ymean - xmean.dot(beta);
  for (std::size_t i = 0; i < s; ++i) {
    double pred = fit.intercept;
    for (std::size_t a = 0; a < m; ++a) pred += beta[static_cast<Eigen::Index>(a)] * ps.masks[i][cols[a]];
    const double r = ps.target[i] - pred;
    fit.rss += ps.weight[i] * r * r;
  }
  return fit;
}

}  // namespace detail

// Draws masks over `n_positions` token positions, each kept with probability
// 1/2. A mask with nothing kept is redrawn up to cfg.max_resample times and
// then dropped. `predict_target(mask)` yields the surrogate target.
template <typename TargetFn>
PerturbationSet sample_perturbations(std::size_t n_positions, const LimeConfig& cfg, TargetFn&& predict_target) {
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution keep(0.5);
  PerturbationSet ps;
  ps.masks.reserve(cfg.n_samples);
  std::vector<std::uint8_t> mask(n_positions);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    std::size_t kept = 0;
    for (std::size_t attempt = 0; attempt <= cfg.max_resample && kept == 0; ++attempt) {
      kept = 0;
      for (auto& b : mask) {
        b = keep(rng) ? 1 : 0;
        kept += b;
      }
    }
    if (kept == 0) continue;
    // Cosine distance to the all-ones original in binary presence space.
    const double dist = 1.0 - std::sqrt(static_cast<double>(kept) / static_cast<double>(n_positions));
    ps.weight.push_back(std::exp(-(dist * dist) / (cfg.kernel_width * cfg.kernel_width)));
    ps.target.push_back(predict_target(mask));
    ps.masks.push_back(mask);
  }
  return ps;
}

struct SurrogateResult {
  std::vector<std::size_t> selected;  // positions, in forward-selection order
  std::vector<double> coef;           // matching `selected`
  bool degenerate = false;
};

// Greedy forward selection of `n_features` positions by weighted residual,
// then a final weighted ridge fit on the chosen set.
inline SurrogateResult fit_surrogate(const PerturbationSet& ps, std::size_t n_positions, std::size_t n_features,
                                     double ridge) {
  SurrogateResult out;
  n_features = std::min(n_features, n_positions);
  const bool constant =
      ps.target.empty() ||
      std::all_of(ps.target.begin(), ps.target.end(), [&](double t) { return t == ps.target.front(); });
  if (constant) {
    out.degenerate = true;
    for (std::size_t j = 0; j < n_features; ++j) out.selected.push_back(j);
    out.coef.assign(n_features, 0.0);
    return out;
  }
  std::vector<bool> used(n_positions, false);
  for (std::size_t step = 0; step < n_features; ++step) {
    std::optional<std::size_t> best;
    double best_rss = 0;
    auto cols = out.selected;
    cols.push_back(0);
    for (std::size_t j = 0; j < n_positions; ++j) {
      if (used[j]) continue;
      cols.back() = j;
      double rss = detail::weighted_ridge(ps, cols, ridge).rss;
      if (!best || rss < best_rss) {
        best = j;
        best_rss = rss;
      }
    }
    used[*best] = true;
    out.selected.push_back(*best);
  }
  out.coef = detail::weighted_ridge(ps, out.selected, ridge).coef;
  return out;
}

// `predict` is any callable FeatureVector -> ClassDistribution; the model is
// treated as a black box.
template <typename PredictFn>
Explanation lime_explain(const Document& doc, const Featurizer& featurizer, PredictFn&& predict,
                         const LimeConfig& cfg = {}) {
  auto cands = detail::vocabulary_candidates(featurizer, doc.text);
  detail::require_tokens(cands, doc.id);
  const std::size_t k = predict(featurizer.featurize(doc.text)).argmax();

  std::map<std::size_t, double> counts;
  auto ps = sample_perturbations(cands.size(), cfg, [&](const std::vector<std::uint8_t>& mask) {
    counts.clear();
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (mask[j]) counts[cands[j].feature] += 1.0;
    }
    return predict(featurizer.from_counts(counts)).probs.at(k);
  });
  auto fit = fit_surrogate(ps, cands.size(), std::max(cfg.n_features, kHighlightCount), cfg.ridge);

  std::vector<double> score(cands.size(), -1.0);
  for (std::size_t a = 0; a < fit.selected.size(); ++a) score[fit.selected[a]] = std::abs(fit.coef[a]);
  auto order = detail::rank_positions(cands, score);

  Explanation e{doc.id, ExplainMethod::Lime, k, {}, false, fit.degenerate};
  for (std::size_t r = 0; r < kHighlightCount; ++r) e.highlights.push_back(detail::make_highlight(cands, order[r], score[order[r]]));
  e.had_duplicates = detail::has_duplicate_words(cands, e.highlights);
  return e;
}

inline Explanation lime_explain(const Document& doc, const TextClassifier& clf, const LimeConfig& cfg = {}) {
  return lime_explain(doc, clf.featurizer, [&](const FeatureVector& x) { return clf.predict_proba(x); }, cfg);
}

// Three distinct content-token positions, uniformly at random.
inline Explanation random_explain(const Document& doc, std::uint64_t seed) {
  std::vector<detail::Candidate> cands;
  for (auto& t : content_tokens(doc.text)) cands.push_back({std::move(t), SIZE_MAX});
  detail::require_tokens(cands, doc.id);
  std::vector<std::size_t> all(cands.size()), picked;
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), kHighlightCount, rng);
  Explanation e{doc.id, ExplainMethod::Random, 0, {}, false, false};
  for (auto pos : picked) e.highlights.push_back(detail::make_highlight(cands, pos, 0.0));
  e.had_duplicates = detail::has_duplicate_words(cands, e.highlights);
  return e;
}

// ---------------------------------------------------------------------------
// Explanation batch records (one JSON object per line). Offsets are code points.

inline nlohmann::ordered_json to_json(const Explanation& e, const std::vector<std::string>& label_names = {}) {
  nlohmann::ordered_json j;
  j["doc_id"] = e.doc_id;
  j["method"] = std::string(method_name(e.method));
  j["explained_class"] = e.explained_class + 1;
  if (e.explained_class < label_names.size()) j["explained_label"] = label_names[e.explained_class];
  auto hl = nlohmann::ordered_json::array();
  for (const auto& h : e.highlights) {
    hl.push_back({{"start", h.chars.begin}, {"end", h.chars.end}, {"token", h.token}, {"score", h.score}});
  }
  j["highlights"] = std::move(hl);
  j["had_duplicates"] = e.had_duplicates;
  if (e.degenerate) j["degenerate"] = true;
  return j;
}

inline Explanation explanation_from_json(const nlohmann::json& j) {
  try {
    Explanation e;
    e.doc_id = j.at("doc_id").get<std::string>();
    e.method = parse_method(j.at("method").get<std::string>());
    const auto cls = j.at("explained_class").get<long>();
    if (cls < 1) fail(Errc::ParseError, "explained_class must be >= 1");
    e.explained_class = static_cast<std::size_t>(cls - 1);
    for (const auto& h : j.at("highlights")) {
      Highlight hl;
      hl.chars = {h.at("start").get<std::size_t>(), h.at("end").get<std::size_t>()};
      hl.token = h.value("token", std::string{});
      hl.score = h.value("score", 0.0);
      e.highlights.push_back(std::move(hl));
    }
    e.had_duplicates = j.value("had_duplicates", false);
    e.degenerate = j.value("degenerate", false);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::ParseError, std::string("malformed explanation record: ") + ex.what());
  }
}

}  // namespace itr
