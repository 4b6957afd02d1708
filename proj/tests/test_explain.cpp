#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "itr/explain.hpp"
#include "itr/synthetic.hpp"
#include "support.hpp"

using namespace itr;
using itr::fixture::manual_classifier;

namespace {

const std::vector<std::string> kReviewTerms{"acting", "camera", "cast",  "ending", "excellent",
                                            "music",  "plot",   "scenes", "score", "story"};
const std::string kReviewDoc = "plot acting excellent music scenes story ending camera score cast";

std::size_t feature_of(const TextClassifier& clf, const std::string& w) { return *clf.featurizer.vocabulary().find(w); }

void expect_well_formed(const Explanation& e, const std::string& text) {
  ASSERT_EQ(e.highlights.size(), 3u);
  std::set<std::size_t> pos;
  for (std::size_t i = 0; i < e.highlights.size(); ++i) {
    const auto& h = e.highlights[i];
    pos.insert(h.position);
    ASSERT_LE(h.bytes.end, text.size());
    EXPECT_LT(h.chars.begin, h.chars.end);
    EXPECT_EQ(tokenize(text.substr(h.bytes.begin, h.bytes.end - h.bytes.begin)).at(0).text, h.token);
    if (i > 0) {
      EXPECT_GE(e.highlights[i - 1].score, h.score);
    }
  }
  EXPECT_EQ(pos.size(), 3u);
}

}  // namespace

TEST(CovarImportances, IdentityReturnsPredictions) {
  auto x = FeatureMatrix::from_dense({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  std::vector<double> y{0.2, 0.5, 0.3};
  EXPECT_EQ(covar_importances(x, y, 0).scores, y);
}

TEST(CovarImportances, SmallProduct) {
  auto x = FeatureMatrix::from_dense({{1, 0}, {1, 1}});
  std::vector<double> y{1, 2};
  EXPECT_EQ(covar_importances(x, y, 0).scores, (std::vector<double>{3, 2}));
}

TEST(CovarImportances, ZeroPredictionsAnnihilate) {
  auto x = FeatureMatrix::from_dense({{0.3, 0.7}, {1, 1}});
  std::vector<double> y{0, 0};
  EXPECT_EQ(covar_importances(x, y, 0).scores, (std::vector<double>{0, 0}));
}

TEST(CovarImportances, LengthMismatch) {
  auto x = FeatureMatrix::from_dense({{1, 0}});
  std::vector<double> y{1, 2};
  EXPECT_THROW(covar_importances(x, y, 0), Error);
}

TEST(CovarImportances, MatchesDoubleLoop) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 15, d = 1 + rng() % 12;
    std::vector<std::vector<double>> dense(n, std::vector<double>(d));
    for (auto& r : dense)
      for (double& v : r) v = u(rng) < 0.5 ? 0.0 : u(rng);
    std::vector<double> y(n);
    for (double& v : y) v = u(rng);
    auto a = covar_importances(FeatureMatrix::from_dense(dense), y, 0).scores;
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += dense[i][j] * y[i];
      EXPECT_NEAR(a[j], s, 1e-12);
    }
  }
}

TEST(CovarImportances, PositiveScalingKeepsRanking) {
  auto corpus = make_synthetic_corpus({.n_docs = 60, .seed = 3});
  auto clf = train_text_classifier(corpus);
  auto x = clf.featurizer.featurize_all(corpus.docs);
  auto imps = covar_importances_all(x, clf.weights);
  auto scaled = imps;
  std::vector<std::vector<double>> yhat(3, std::vector<double>(x.num_rows()));
  for (std::size_t i = 0; i < x.num_rows(); ++i) {
    auto p = clf.predict_proba(x.rows[i]).probs;
    for (std::size_t k = 0; k < 3; ++k) yhat[k][i] = 7.5 * p[k];
  }
  for (std::size_t k = 0; k < 3; ++k) {
    scaled[k] = covar_importances(x, yhat[k], k);
    for (std::size_t j = 0; j < x.cols; ++j) EXPECT_NEAR(scaled[k].scores[j], 7.5 * imps[k].scores[j], 1e-9);
  }
  for (const auto& d : corpus.docs) {
    auto a = covar_explain(d, clf, imps), b = covar_explain(d, clf, scaled);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(a.highlights[r].position, b.highlights[r].position);
  }
}

TEST(CovarExplain, TopThreeDescending) {
  ModelWeights w(5, 2);
  w.at(0, 0) = 1;  // class 0 wins on every document below
  auto clf = manual_classifier({"alpha", "beta", "delta", "gamma", "omega"}, w);
  std::vector<ImportanceVector> imps{{0, {5, 4, 3, 2, 1}}, {1, {0, 0, 0, 0, 0}}};
  Document doc{"d", "omega gamma alpha delta beta", std::nullopt};
  auto e = covar_explain(doc, clf, imps);
  expect_well_formed(e, doc.text);
  EXPECT_EQ(e.explained_class, 0u);
  EXPECT_EQ(e.highlights[0].token, "alpha");
  EXPECT_EQ(e.highlights[1].token, "beta");
  EXPECT_EQ(e.highlights[2].token, "delta");
  EXPECT_FALSE(e.had_duplicates);
}

TEST(CovarExplain, TiesGoToEarliestSpan) {
  ModelWeights w(4, 2);
  w.at(0, 0) = 1;
  auto clf = manual_classifier({"alpha", "beta", "delta", "gamma"}, w);
  std::vector<ImportanceVector> imps{{0, {1, 1, 1, 1}}, {1, {0, 0, 0, 0}}};
  Document doc{"d", "gamma delta beta alpha", std::nullopt};
  auto e = covar_explain(doc, clf, imps);
  EXPECT_EQ(e.highlights[0].token, "gamma");
  EXPECT_EQ(e.highlights[1].token, "delta");
  EXPECT_EQ(e.highlights[2].token, "beta");
}

TEST(CovarExplain, RepeatedWordsFlagDuplicates) {
  ModelWeights w(4, 2);
  w.at(0, 0) = 1;
  auto clf = manual_classifier({"alpha", "beta", "delta", "gamma"}, w);
  std::vector<ImportanceVector> imps{{0, {9, 1, 1, 1}}, {1, {0, 0, 0, 0}}};
  Document doc{"d", "alpha beta alpha gamma delta", std::nullopt};
  auto e = covar_explain(doc, clf, imps);
  EXPECT_EQ(e.highlights[0].token, "alpha");
  EXPECT_EQ(e.highlights[1].token, "alpha");
  EXPECT_NE(e.highlights[0].position, e.highlights[1].position);
  EXPECT_TRUE(e.had_duplicates);
}

TEST(CovarExplain, TooFewTokens) {
  ModelWeights w(3, 2);
  auto clf = manual_classifier({"alpha", "beta", "gamma"}, w);
  std::vector<ImportanceVector> imps{{0, {1, 1, 1}}, {1, {1, 1, 1}}};
  try {
    covar_explain({"d", "alpha the beta unknown", std::nullopt}, clf, imps);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewTokens);
  }
}

TEST(CovarExplain, TrueLabelIsIgnored) {
  auto corpus = make_synthetic_corpus({.n_docs = 45, .seed = 5});
  auto clf = train_text_classifier(corpus);
  auto imps = covar_importances_all(clf.featurizer.featurize_all(corpus.docs), clf.weights);
  for (auto d : corpus.docs) {
    auto a = covar_explain(d, clf, imps);
    d.label = (*d.label + 1) % 3;
    auto b = covar_explain(d, clf, imps);
    EXPECT_EQ(a.explained_class, b.explained_class);
    EXPECT_EQ(a.highlights[0].position, b.highlights[0].position);
    auto la = lime_explain(d, clf, {.n_samples = 200, .seed = 1});
    d.label = std::nullopt;
    auto lb = lime_explain(d, clf, {.n_samples = 200, .seed = 1});
    EXPECT_EQ(la.highlights[0].position, lb.highlights[0].position);
  }
}

TEST(Lime, EnumerationOracleAgreesOnKeyword) {
  auto clf = manual_classifier(kReviewTerms, ModelWeights(kReviewTerms.size(), 2));
  const auto kw = feature_of(clf, "excellent");
  itr::fixture::KeywordModel model{kw};
  auto cands = clf.featurizer.vocabulary_tokens(kReviewDoc);
  ASSERT_EQ(cands.size(), 10u);
  auto coef = itr::fixture::exhaustive_surrogate(10, 0.25, [&](const std::vector<std::uint8_t>& mask) {
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (mask[j] && cands[j].second == kw) return 1.0;
    return 0.0;
  });
  const auto oracle_top = std::max_element(coef.begin(), coef.end()) - coef.begin();
  EXPECT_EQ(cands[static_cast<std::size_t>(oracle_top)].first.text, "excellent");
  for (std::size_t j = 0; j < coef.size(); ++j)
    if (static_cast<long>(j) != oracle_top) {
      EXPECT_LT(coef[j], 0.1 * coef[static_cast<std::size_t>(oracle_top)]);
    }

  auto e = lime_explain({"r", kReviewDoc, std::nullopt}, clf.featurizer, model, {.seed = 4});
  expect_well_formed(e, kReviewDoc);
  EXPECT_EQ(e.highlights[0].token, "excellent");
  EXPECT_FALSE(e.degenerate);
}

TEST(Lime, ConstantModelIsDegenerate) {
  auto clf = manual_classifier(kReviewTerms, ModelWeights(kReviewTerms.size(), 2));
  auto e = lime_explain({"r", kReviewDoc, std::nullopt}, clf, {.n_samples = 300, .seed = 2});
  EXPECT_TRUE(e.degenerate);
  ASSERT_EQ(e.highlights.size(), 3u);
  for (const auto& h : e.highlights) EXPECT_EQ(h.score, 0.0);
}

TEST(Lime, SeededDeterminism) {
  auto corpus = make_synthetic_corpus({.n_docs = 30, .seed = 6});
  auto clf = train_text_classifier(corpus);
  const auto& d = corpus.docs[4];
  auto a = lime_explain(d, clf, {.n_samples = 500, .seed = 77});
  auto b = lime_explain(d, clf, {.n_samples = 500, .seed = 77});
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(a.highlights[r].position, b.highlights[r].position);
    EXPECT_EQ(a.highlights[r].score, b.highlights[r].score);
  }
}

TEST(Lime, AllEmptyMasksAreDropped) {
  // A single position is kept with probability 1/2; with zero resamples
  // roughly half of the draws are empty and must be dropped.
  LimeConfig cfg{.n_samples = 1000, .max_resample = 0, .seed = 3};
  auto ps = sample_perturbations(1, cfg, [](const auto&) { return 1.0; });
  EXPECT_LT(ps.masks.size(), 600u);
  EXPECT_GT(ps.masks.size(), 400u);
  for (const auto& m : ps.masks) EXPECT_EQ(m[0], 1);
  cfg.max_resample = 10;
  EXPECT_GT(sample_perturbations(1, cfg, [](const auto&) { return 1.0; }).masks.size(), 995u);
}

TEST(Lime, KernelWeights) {
  LimeConfig cfg{.n_samples = 200, .seed = 1};
  auto ps = sample_perturbations(4, cfg, [](const auto&) { return 0.0; });
  for (std::size_t i = 0; i < ps.masks.size(); ++i) {
    double kept = 0;
    for (auto b : ps.masks[i]) kept += b;
    const double d = 1 - std::sqrt(kept / 4);
    EXPECT_NEAR(ps.weight[i], std::exp(-d * d / 0.0625), 1e-15);
  }
}

TEST(RandomExplain, ForcedSelection) {
  auto e = random_explain({"d", "red green blue", std::nullopt}, 5);
  std::set<std::string> words;
  for (const auto& h : e.highlights) words.insert(h.token);
  EXPECT_EQ(words, (std::set<std::string>{"red", "green", "blue"}));
  for (const auto& h : e.highlights) EXPECT_EQ(h.score, 0.0);
}

TEST(RandomExplain, SeededDeterminism) {
  Document d{"d", "red green blue black white pink grey teal", std::nullopt};
  auto a = random_explain(d, 9), b = random_explain(d, 9);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(a.highlights[r].position, b.highlights[r].position);
}

TEST(RandomExplain, UniformInclusionFrequency) {
  Document d{"d", "red green blue black", std::nullopt};
  std::map<std::size_t, int> hits;
  const int draws = 100000;
  for (int s = 0; s < draws; ++s)
    for (const auto& h : random_explain(d, static_cast<std::uint64_t>(s)).highlights) ++hits[h.position];
  ASSERT_EQ(hits.size(), 4u);
  for (auto [pos, n] : hits) EXPECT_NEAR(static_cast<double>(n) / draws, 0.75, 0.02) << pos;
}

TEST(RandomExplain, TooFewTokens) { EXPECT_THROW(random_explain({"d", "the red of blue", std::nullopt}, 1), Error); }

TEST(Explanations, WellFormedOnRandomDocuments) {
  auto corpus = make_synthetic_corpus({.n_docs = 60, .seed = 8});
  auto clf = train_text_classifier(corpus);
  auto imps = covar_importances_all(clf.featurizer.featurize_all(corpus.docs), clf.weights);
  const auto& terms = clf.featurizer.vocabulary().terms();
  std::mt19937_64 rng(13);
  for (int i = 0; i < 60; ++i) {
    std::string text;
    const std::size_t len = 3 + rng() % 20;
    for (std::size_t j = 0; j < len; ++j) text += terms[rng() % terms.size()] + (j % 4 ? " " : ", ");
    Document d{"f" + std::to_string(i), text, std::nullopt};
    expect_well_formed(covar_explain(d, clf, imps), text);
    expect_well_formed(lime_explain(d, clf, {.n_samples = 150, .seed = 2}), text);
    auto r = random_explain(d, static_cast<std::uint64_t>(i));
    ASSERT_EQ(r.highlights.size(), 3u);
  }
}

TEST(Explanations, JsonRoundTrip) {
  auto e = random_explain({"d9", "naïve red green blue", std::nullopt}, 3);
  auto j = to_json(e, {"a", "b"});
  EXPECT_EQ(j["explained_class"], 1);
  auto back = explanation_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.doc_id, "d9");
  EXPECT_EQ(back.method, ExplainMethod::Random);
  ASSERT_EQ(back.highlights.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(back.highlights[r].chars, e.highlights[r].chars);
}

TEST(LimeCost, ScalesLinearlyInSamples) {
  auto corpus = make_synthetic_corpus({.n_docs = 30, .seed = 6});
  auto clf = train_text_classifier(corpus);
  const auto& d = corpus.docs[0];
  auto timed = [&](std::size_t n) {
    std::vector<double> t;
    for (int r = 0; r < 9; ++r) t.push_back(itr::fixture::seconds([&] { lime_explain(d, clf, {.n_samples = n, .seed = 1}); }));
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
  };
  timed(250);  // warm-up
  const double ratio = timed(2500) / timed(250);
  EXPECT_GE(ratio, 7.0);
  EXPECT_LE(ratio, 13.0);
}
