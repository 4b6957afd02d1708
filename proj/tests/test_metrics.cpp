#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "itr/metrics.hpp"
#include "support.hpp"

using namespace itr;

namespace {

using Table = std::vector<std::vector<std::uint64_t>>;

Table random_table(std::mt19937_64& rng, std::size_t max_dim = 6, std::uint64_t max_total = 50) {
  std::uniform_int_distribution<std::size_t> dim(1, max_dim);
  Table t(dim(rng), std::vector<std::uint64_t>(dim(rng), 0));
  const auto n = 1 + rng() % max_total;
  for (std::uint64_t i = 0; i < n; ++i) ++t[rng() % t.size()][rng() % t[0].size()];
  return t;
}

double plugin_entropy(const std::vector<std::uint64_t>& c) { return entropy_bits(c); }

AnnotationRecord rec(std::string id, std::string doc, Condition c, std::size_t label, double ms) {
  AnnotationRecord r;
  r.assignment_id = std::move(id);
  r.worker_id = "w-" + r.assignment_id;
  r.doc_id = std::move(doc);
  r.condition = c;
  r.label_given = label;
  r.elapsed_ms = ms;
  return r;
}

}  // namespace

TEST(MutualInformation, Anchors) {
  EXPECT_EQ(mutual_information(JointCounts::from_rows({{5, 0}, {0, 5}})), 1.0);
  EXPECT_NEAR(mutual_information(JointCounts::from_rows({{2, 2}, {3, 3}})), 0.0, 1e-15);
  EXPECT_NEAR(mutual_information(JointCounts::from_rows({{3, 1}, {1, 3}})), 0.18872, 1e-5);
  EXPECT_NEAR(mutual_information(JointCounts::from_rows({{3, 1}, {1, 3}})), itr::fixture::brute_force_mi({{3, 1}, {1, 3}}),
              1e-15);
}

TEST(MutualInformation, EmptyTableIsError) {
  try {
    mutual_information(JointCounts(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyCounts);
  }
}

TEST(MutualInformation, MatchesBruteForce) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    auto t = random_table(rng);
    EXPECT_NEAR(mutual_information(JointCounts::from_rows(t)), itr::fixture::brute_force_mi(t), 1e-12);
  }
}

TEST(MutualInformation, SymmetricBoundedNonNegative) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) {
    auto c = JointCounts::from_rows(random_table(rng));
    const double mi = mutual_information(c);
    EXPECT_GE(mi, 0.0);
    EXPECT_NEAR(mi, mutual_information(c.transposed()), 1e-12);
    const double bound = std::min(plugin_entropy(c.row_sums()), plugin_entropy(c.col_sums()));
    EXPECT_LE(mi, bound + 1e-12);
  }
}

TEST(MutualInformation, PermutationInvariant) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    auto t = random_table(rng);
    const double mi = mutual_information(JointCounts::from_rows(t));
    std::shuffle(t.begin(), t.end(), rng);
    std::vector<std::size_t> perm(t[0].size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Table u = t;
    for (std::size_t r = 0; r < t.size(); ++r)
      for (std::size_t c = 0; c < perm.size(); ++c) u[r][c] = t[r][perm[c]];
    EXPECT_NEAR(mutual_information(JointCounts::from_rows(u)), mi, 1e-12);
  }
}

TEST(Itr, Ratio) {
  EXPECT_DOUBLE_EQ(itr::itr(1.0, 5.0), 0.2);
  EXPECT_EQ(itr::itr(JointCounts::from_rows({{2, 2}, {3, 3}}), 7.0), 0.0);
  auto c = JointCounts::from_rows({{4, 1}, {2, 6}});
  EXPECT_EQ(itr::itr(c, 2 * 3.7), itr::itr(c, 3.7) / 2);
  EXPECT_THROW(itr::itr(1.0, 0.0), Error);
  EXPECT_THROW(itr::itr(1.0, -1.0), Error);
}

TEST(Trust, Ratio) {
  EXPECT_EQ(trust_coefficient(0.3, 0.3), 1.0);
  EXPECT_DOUBLE_EQ(trust_coefficient(0.3, 0.2), 1.5);
  try {
    trust_coefficient(0.3, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UndefinedTrust);
  }
}

TEST(ChiSquare, ClosedForm2x2) {
  auto r = chi_square_independence(JointCounts::from_rows({{10, 20}, {20, 10}}));
  const double a = 10, b = 20, c = 20, d = 10, n = 60;
  const double closed = n * (a * d - b * c) * (a * d - b * c) / ((a + b) * (c + d) * (a + c) * (b + d));
  EXPECT_NEAR(r.statistic, closed, 1e-12);
  EXPECT_NEAR(r.statistic, 6.667, 1e-3);
  EXPECT_EQ(r.dof, 1u);
}

TEST(ChiSquare, IndependentTable) {
  auto r = chi_square_independence(JointCounts::from_rows({{2, 4, 6}, {1, 2, 3}}));
  EXPECT_NEAR(r.statistic, 0.0, 1e-12);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
  EXPECT_EQ(r.dof, 2u);
}

TEST(ChiSquare, ZeroExpectedCell) {
  try {
    chi_square_independence(JointCounts::from_rows({{0, 0}, {3, 4}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroExpectedCell);
  }
}

TEST(ChiSquare, UpperTail) {
  EXPECT_NEAR(chi_square_upper_tail(3.841, 1), 0.05, 5e-4);
  EXPECT_NEAR(chi_square_upper_tail(5.991, 2), 0.05, 5e-4);
  // dof 2 has the closed form exp(-x/2).
  EXPECT_NEAR(chi_square_upper_tail(4.2, 2), std::exp(-2.1), 1e-12);
}

TEST(KruskalWallis, Anchors) {
  EXPECT_NEAR(kruskal_wallis({{1, 2, 3}, {4, 5, 6}}).statistic, 3.857, 1e-3);
  EXPECT_NEAR(kruskal_wallis({{1, 2, 3}, {4, 5, 6}}).statistic, 27.0 / 7.0, 1e-12);
  EXPECT_NEAR(kruskal_wallis({{1}, {2}, {3}}).statistic, 2.0, 1e-12);
  EXPECT_EQ(kruskal_wallis({{1, 2, 3}, {4, 5, 6}}).dof, 1u);
}

TEST(KruskalWallis, TwoRankCase) {
  // H = 12/(N(N+1)) * sum R_g^2/n_g - 3(N+1) with N = 2 gives 1.
  const double n = 2;
  const double direct = 12.0 / (n * (n + 1)) * (1.0 + 4.0) - 3 * (n + 1);
  EXPECT_NEAR(direct, 1.0, 1e-12);
  EXPECT_NEAR(kruskal_wallis({{1}, {2}}).statistic, 1.0, 1e-9);
  EXPECT_NEAR(kruskal_wallis({{2}, {1}}).statistic, 1.0, 1e-9);
}

TEST(KruskalWallis, TieCorrection) {
  // Ranks: 1,2 | 3.5,3.5 | 5,6 ; hand evaluation with the tie factor.
  auto r = kruskal_wallis({{1, 2}, {3, 3}, {4, 5}});
  const double raw = 12.0 / 42.0 * ((9.0 + 49.0 + 121.0) / 2.0) - 21.0;
  const double corr = 1.0 - (8.0 - 2.0) / (216.0 - 6.0);
  EXPECT_NEAR(r.statistic, raw / corr, 1e-12);
}

TEST(KruskalWallis, LabelSymmetry) {
  std::mt19937_64 rng(4);
  std::lognormal_distribution<double> t(1.0, 0.5);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(10), b(12);
    for (double& v : a) v = std::round(t(rng) * 10) / 10;
    for (double& v : b) v = std::round(t(rng) * 10) / 10;
    EXPECT_NEAR(kruskal_wallis({a, b}).statistic, kruskal_wallis({b, a}).statistic, 1e-12);
  }
}

TEST(KruskalWallis, TooFewGroups) {
  try {
    kruskal_wallis({{1, 2, 3}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewGroups);
  }
  try {
    kruskal_wallis({{1, 2, 3}, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewGroups);
  }
}

TEST(Analyze, PerfectAnnotatorsAndModel) {
  std::unordered_map<std::string, std::size_t> truth{{"a", 0}, {"b", 1}, {"c", 1}, {"d", 2}};
  std::vector<AnnotationRecord> log;
  int n = 0;
  for (auto c : {Condition::NoHighlights, Condition::Covar})
    for (const auto& [doc, y] : truth) log.push_back(rec("x" + std::to_string(n++), doc, c, y, 1000));
  auto r = analyze(log, truth, truth, {"p", "q", "r"});
  ASSERT_EQ(r.conditions.size(), 2u);
  const double h = -(0.25 * std::log2(0.25) * 2 + 0.5 * std::log2(0.5));
  for (const auto& s : r.conditions) {
    EXPECT_EQ(s.accuracy, 1.0);
    EXPECT_NEAR(s.itr_vs_model, h, 1e-12);
    EXPECT_EQ(s.itr_vs_model, s.itr_vs_truth);
    ASSERT_TRUE(s.trust);
    EXPECT_EQ(*s.trust, 1.0);
    EXPECT_EQ(s.mean_time_s, 1.0);
  }
  EXPECT_TRUE(r.accuracy_test.result.has_value() || !r.accuracy_test.skipped_reason.empty());
}

TEST(Analyze, SingleConditionSkipsTests) {
  std::unordered_map<std::string, std::size_t> truth{{"a", 0}, {"b", 1}}, pred{{"a", 0}, {"b", 0}};
  std::vector<AnnotationRecord> log{rec("1", "a", Condition::Lime, 0, 900), rec("2", "b", Condition::Lime, 1, 1100)};
  auto r = analyze(log, pred, truth, {"p", "q"});
  ASSERT_EQ(r.conditions.size(), 1u);
  EXPECT_TRUE(r.conditions[0].trust.has_value());
  EXPECT_FALSE(r.accuracy_test.result);
  EXPECT_EQ(r.accuracy_test.skipped_reason, kInsufficientConditions);
  EXPECT_EQ(r.time_test.skipped_reason, kInsufficientConditions);
}

TEST(Analyze, UndefinedTrustIsFlagged) {
  std::unordered_map<std::string, std::size_t> truth{{"a", 0}, {"b", 1}};
  std::vector<AnnotationRecord> log{rec("1", "a", Condition::Lime, 0, 900), rec("2", "b", Condition::Lime, 0, 1100)};
  auto r = analyze(log, truth, truth, {"p", "q"});
  EXPECT_FALSE(r.conditions[0].trust.has_value());
}

TEST(Analyze, MissingLabelsNameTheDocument) {
  std::unordered_map<std::string, std::size_t> truth{{"a", 0}};
  std::vector<AnnotationRecord> log{rec("1", "zz", Condition::Lime, 0, 900)};
  try {
    analyze(log, truth, truth, {"p", "q"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingPrediction);
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
  try {
    analyze(log, {{"zz", 0}}, truth, {"p", "q"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingTruth);
  }
}

TEST(Analyze, LogOrderIrrelevantAndFilters) {
  std::mt19937_64 rng(5);
  std::unordered_map<std::string, std::size_t> truth, pred;
  for (int d = 0; d < 30; ++d) {
    truth["d" + std::to_string(d)] = rng() % 3;
    pred["d" + std::to_string(d)] = rng() % 3;
  }
  std::vector<AnnotationRecord> log;
  for (int i = 0; i < 400; ++i) {
    log.push_back(rec("a" + std::to_string(i), "d" + std::to_string(rng() % 30), kAllConditions[rng() % 4], rng() % 3,
                      100.0 + static_cast<double>(rng() % 9000)));
  }
  auto ref = analyze(log, pred, truth, {"x", "y", "z"});
  EXPECT_EQ(ref.conditions.size(), 4u);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(log.begin(), log.end(), rng);
    auto r = analyze(log, pred, truth, {"x", "y", "z"});
    for (std::size_t c = 0; c < r.conditions.size(); ++c) {
      EXPECT_EQ(r.conditions[c].mean_time_s, ref.conditions[c].mean_time_s);
      EXPECT_EQ(r.conditions[c].itr_vs_model, ref.conditions[c].itr_vs_model);
      EXPECT_EQ(r.conditions[c].vs_truth, ref.conditions[c].vs_truth);
    }
    EXPECT_EQ(r.accuracy_test.result->statistic, ref.accuracy_test.result->statistic);
    EXPECT_EQ(r.time_test.result->statistic, ref.time_test.result->statistic);
  }
  AnalyzeOptions only;
  only.condition_filter = {Condition::Covar};
  EXPECT_EQ(analyze(log, pred, truth, {"x", "y", "z"}, only).conditions.size(), 1u);
  AnalyzeOptions fast;
  fast.max_time_s = 2.0;
  auto f = analyze(log, pred, truth, {"x", "y", "z"}, fast);
  EXPECT_LT(f.n_filtered, f.n_records);
  for (const auto& s : f.conditions) EXPECT_LE(s.mean_time_s, 2.0);
}
