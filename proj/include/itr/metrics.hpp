#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "itr/annotation.hpp"
#include "itr/error.hpp"

namespace itr {

// R x C contingency table of co-occurrence counts.
class JointCounts {
 public:
  JointCounts(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), cells_(rows * cols, 0) {}

  static JointCounts from_rows(const std::vector<std::vector<std::uint64_t>>& t) {
    JointCounts j(t.size(), t.empty() ? 0 : t.front().size());
    for (std::size_t r = 0; r < t.size(); ++r) {
      if (t[r].size() != j.cols_) fail(Errc::DimensionMismatch, "ragged contingency table");
      for (std::size_t c = 0; c < j.cols_; ++c) j.at(r, c) = t[r][c];
    }
    return j;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::uint64_t& at(std::size_t r, std::size_t c) { return cells_[r * cols_ + c]; }
  std::uint64_t at(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c]; }
  void add(std::size_t r, std::size_t c, std::uint64_t n = 1) { at(r, c) += n; }

  std::uint64_t total() const { return std::accumulate(cells_.begin(), cells_.end(), std::uint64_t{0}); }
  std::vector<std::uint64_t> row_sums() const {
    std::vector<std::uint64_t> s(rows_, 0);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) s[r] += at(r, c);
    return s;
  }
  std::vector<std::uint64_t> col_sums() const {
    std::vector<std::uint64_t> s(cols_, 0);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) s[c] += at(r, c);
    return s;
  }
  JointCounts transposed() const {
    JointCounts t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t.at(c, r) = at(r, c);
    return t;
  }
  bool operator==(const JointCounts&) const = default;

 private:
  std::size_t rows_, cols_;
  std::vector<std::uint64_t> cells_;
};

// Plug-in mutual information in bits, 0 log 0 = 0, clamped at 0.
inline double mutual_information(const JointCounts& t) {
  const auto n = t.total();
  if (n == 0) fail(Errc::EmptyCounts, "mutual information of an empty table");
  const auto rs = t.row_sums();
  const auto cs = t.col_sums();
  const double nd = static_cast<double>(n);
  double mi = 0;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const double o = static_cast<double>(t.at(r, c));
      if (o == 0) continue;
      mi += (o / nd) * std::log2((o * nd) / (static_cast<double>(rs[r]) * static_cast<double>(cs[c])));
    }
  }
  return std::max(mi, 0.0);
}

inline double entropy_bits(const std::vector<std::uint64_t>& counts) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
  if (n == 0) fail(Errc::EmptyCounts, "entropy of an empty distribution");
  double h = 0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

// Information transfer rate, bit/s.
inline double itr(double mutual_information_bits, double mean_time_s) {
  if (!(mean_time_s > 0)) fail(Errc::NonpositiveTime, "mean response time must be positive");
  return mutual_information_bits / mean_time_s;
}

inline double itr(const JointCounts& counts, double mean_time_s) {
  if (!(mean_time_s > 0)) fail(Errc::NonpositiveTime, "mean response time must be positive");
  return mutual_information(counts) / mean_time_s;
}

// ITR against model predictions over ITR against true labels. > 1 means the
// annotators lean toward the model.
inline double trust_coefficient(double itr_vs_model, double itr_vs_truth) {
  if (!(itr_vs_truth > 0)) fail(Errc::UndefinedTrust, "trust coefficient undefined: ITR against truth is zero");
  return itr_vs_model / itr_vs_truth;
}

struct TestResult {
  double statistic = 0;
  std::size_t dof = 0;
  double p_value = 1;
};

// P(X >= x) for X ~ chi-square(dof).
inline double chi_square_upper_tail(double x, std::size_t dof) {
  if (dof == 0) fail(Errc::InvalidConfig, "chi-square distribution needs dof >= 1");
  if (x <= 0) return 1.0;
  return boost::math::gamma_q(static_cast<double>(dof) / 2.0, x / 2.0);
}

// Pearson chi-square test of independence.
inline TestResult chi_square_independence(const JointCounts& t) {
  const auto n = t.total();
  if (n == 0) fail(Errc::EmptyCounts, "chi-square on an empty table");
  if (t.rows() < 2 || t.cols() < 2) fail(Errc::ZeroExpectedCell, "chi-square needs at least a 2x2 table");
  const auto rs = t.row_sums();
  const auto cs = t.col_sums();
  const double nd = static_cast<double>(n);
  double stat = 0;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const double e = static_cast<double>(rs[r]) * static_cast<double>(cs[c]) / nd;
      if (!(e > 0)) {
        fail(Errc::ZeroExpectedCell, "expected count is zero at cell (" + std::to_string(r) + "," + std::to_string(c) + ")");
      }
      const double d = static_cast<double>(t.at(r, c)) - e;
      stat += d * d / e;
    }
  }
  TestResult res{stat, (t.rows() - 1) * (t.cols() - 1), 1.0};
  res.p_value = chi_square_upper_tail(stat, res.dof);
  return res;
}

// Kruskal-Wallis H with tie correction (mid-ranks).
inline TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) fail(Errc::TooFewGroups, "Kruskal-Wallis needs at least two groups");
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) fail(Errc::TooFewGroups, "Kruskal-Wallis group " + std::to_string(g) + " is empty");
    for (double v : groups[g]) all.emplace_back(v, g);
  }
  const std::size_t n = all.size();
  std::sort(all.begin(), all.end());

  std::vector<double> rank_sum(groups.size(), 0.0);
  double tie_term = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && all[j].first == all[i].first) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) rank_sum[all[k].second] += mid;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double nd = static_cast<double>(n);
  double h = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) h += rank_sum[g] * rank_sum[g] / static_cast<double>(groups[g].size());
  h = 12.0 / (nd * (nd + 1.0)) * h - 3.0 * (nd + 1.0);
  const double correction = 1.0 - tie_term / (nd * nd * nd - nd);
  TestResult res{0.0, groups.size() - 1, 1.0};
  if (correction > 0) {
    res.statistic = std::max(h / correction, 0.0);
    res.p_value = chi_square_upper_tail(res.statistic, res.dof);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Study analysis.

struct ClassCell {
  std::size_t n = 0;
  double accuracy = 0;
  double mean_time_s = 0;
};

struct ConditionStats {
  Condition condition = Condition::NoHighlights;
  std::size_t n = 0;
  double mean_time_s = 0;
  double accuracy = 0;
  double mi_vs_model = 0;
  double mi_vs_truth = 0;
  double itr_vs_model = 0;
  double itr_vs_truth = 0;
  std::optional<double> trust;  // empty when ITR against truth is zero
  std::vector<ClassCell> per_class;  // indexed by true class
  JointCounts vs_model{0, 0};  // rows: label given, cols: model prediction
  JointCounts vs_truth{0, 0};  // rows: label given, cols: true label
};

struct SignificanceTest {
  std::optional<TestResult> result;
  std::string skipped_reason;  // non-empty when result is absent
};

struct MetricsReport {
  std::vector<std::string> label_names;
  std::vector<ConditionStats> conditions;  // canonical condition order
  SignificanceTest accuracy_test;          // chi-square, conditions x {correct, incorrect}
  SignificanceTest time_test;              // Kruskal-Wallis on times across conditions
  std::size_t n_records = 0;
  std::size_t n_filtered = 0;

  const ConditionStats* find(Condition c) const {
    for (const auto& s : conditions)
      if (s.condition == c) return &s;
    return nullptr;
  }
};

struct AnalyzeOptions {
  std::optional<double> max_time_s;       // drop slower annotations
  std::set<Condition> condition_filter;  // empty = all
};

inline constexpr const char* kInsufficientConditions = "insufficient conditions";

inline MetricsReport analyze(std::vector<AnnotationRecord> log,
                             const std::unordered_map<std::string, std::size_t>& predictions,
                             const std::unordered_map<std::string, std::size_t>& truths,
                             const std::vector<std::string>& label_names, const AnalyzeOptions& opts = {}) {
  const std::size_t k = label_names.size();
  if (k < 2) fail(Errc::InvalidConfig, "analysis needs at least two classes");
  // Canonical record order makes the result independent of log order.
  std::sort(log.begin(), log.end(), [](const auto& a, const auto& b) {
    return std::tie(a.assignment_id, a.worker_id, a.doc_id) < std::tie(b.assignment_id, b.worker_id, b.doc_id);
  });

  MetricsReport rep;
  rep.label_names = label_names;
  rep.n_records = log.size();

  struct Acc {
    JointCounts vs_model, vs_truth;
    std::vector<double> times;
    std::vector<std::size_t> class_n, class_correct;
    std::vector<double> class_time;
    std::size_t correct = 0;
  };
  std::map<Condition, Acc> acc;

  for (const auto& r : log) {
    auto p = predictions.find(r.doc_id);
    if (p == predictions.end()) fail(Errc::MissingPrediction, "no model prediction for document '" + r.doc_id + "'");
    auto t = truths.find(r.doc_id);
    if (t == truths.end()) fail(Errc::MissingTruth, "no true label for document '" + r.doc_id + "'");
    if (r.label_given >= k || p->second >= k || t->second >= k) {
      fail(Errc::InvalidLabel, "label out of range in record '" + r.assignment_id + "'");
    }
    if (!opts.condition_filter.empty() && !opts.condition_filter.count(r.condition)) continue;
    const double secs = r.elapsed_ms / 1000.0;
    if (opts.max_time_s && secs > *opts.max_time_s) continue;
    if (!(secs > 0)) fail(Errc::NonpositiveTime, "non-positive elapsed time in record '" + r.assignment_id + "'");

    auto [it, inserted] = acc.try_emplace(r.condition, Acc{JointCounts(k, k), JointCounts(k, k), {}, {}, {}, {}, 0});
    auto& a = it->second;
    if (inserted) {
      a.class_n.assign(k, 0);
      a.class_correct.assign(k, 0);
      a.class_time.assign(k, 0.0);
    }
    a.vs_model.add(r.label_given, p->second);
    a.vs_truth.add(r.label_given, t->second);
    a.times.push_back(secs);
    const bool ok = r.label_given == t->second;
    a.correct += ok;
    a.class_n[t->second] += 1;
    a.class_correct[t->second] += ok;
    a.class_time[t->second] += secs;
    ++rep.n_filtered;
  }

  JointCounts correctness(acc.size(), 2);
  std::vector<std::vector<double>> time_groups;
  std::size_t row = 0;
  for (auto& [cond, a] : acc) {
    ConditionStats s;
    s.condition = cond;
    s.n = a.times.size();
    s.mean_time_s = std::accumulate(a.times.begin(), a.times.end(), 0.0) / static_cast<double>(s.n);
    s.accuracy = static_cast<double>(a.correct) / static_cast<double>(s.n);
    s.mi_vs_model = mutual_information(a.vs_model);
    s.mi_vs_truth = mutual_information(a.vs_truth);
    s.itr_vs_model = itr(s.mi_vs_model, s.mean_time_s);
    s.itr_vs_truth = itr(s.mi_vs_truth, s.mean_time_s);
    if (s.itr_vs_truth > 0) s.trust = trust_coefficient(s.itr_vs_model, s.itr_vs_truth);
    for (std::size_t c = 0; c < k; ++c) {
      ClassCell cell{a.class_n[c], 0, 0};
      if (cell.n) {
        cell.accuracy = static_cast<double>(a.class_correct[c]) / static_cast<double>(cell.n);
        cell.mean_time_s = a.class_time[c] / static_cast<double>(cell.n);
      }
      s.per_class.push_back(cell);
    }
    s.vs_model = a.vs_model;
    s.vs_truth = a.vs_truth;
    correctness.at(row, 0) = a.correct;
    correctness.at(row, 1) = s.n - a.correct;
    time_groups.push_back(a.times);
    rep.conditions.push_back(std::move(s));
    ++row;
  }

  if (rep.conditions.size() < 2) {
    rep.accuracy_test.skipped_reason = kInsufficientConditions;
    rep.time_test.skipped_reason = kInsufficientConditions;
    return rep;
  }
  try {
    rep.accuracy_test.result = chi_square_independence(correctness);
  } catch (const Error& e) {
    rep.accuracy_test.skipped_reason = e.what();
  }
  try {
    rep.time_test.result = kruskal_wallis(time_groups);
  } catch (const Error& e) {
    rep.time_test.skipped_reason = e.what();
  }
  return rep;
}

}  // namespace itr
