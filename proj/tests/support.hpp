#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <Eigen/Dense>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "itr/classifier.hpp"
#include "itr/explain.hpp"
#include "itr/metrics.hpp"
#include "itr/simarm.hpp"
#include "itr/study.hpp"

namespace itr::fixture {

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("itr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Classifier with a hand-written vocabulary (sorted), unit idf and weights.
inline TextClassifier manual_classifier(std::vector<std::string> terms, ModelWeights w) {
  TextClassifier clf;
  const auto d = terms.size();
  clf.featurizer = Featurizer(VocabularyIndex(std::move(terms)), std::vector<double>(d, 1.0));
  clf.weights = std::move(w);
  return clf;
}

// Brute-force plug-in MI, sum over cells of p log2(p / (p_row p_col)), written
// without the library's helpers.
inline double brute_force_mi(const std::vector<std::vector<std::uint64_t>>& t) {
  double n = 0;
  for (const auto& row : t)
    for (auto v : row) n += static_cast<double>(v);
  double mi = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < t[i].size(); ++j) {
      if (t[i][j] == 0) continue;
      double pi = 0, pj = 0;
      for (auto v : t[i]) pi += static_cast<double>(v);
      for (const auto& row : t) pj += static_cast<double>(row[j]);
      const double pij = static_cast<double>(t[i][j]) / n;
      mi += pij * std::log(pij / ((pi / n) * (pj / n))) / std::log(2.0);
    }
  }
  return mi;
}

// Keyword oracle: the doc belongs to class 0 iff `keyword` occurs.
struct KeywordModel {
  std::size_t keyword_feature;
  ClassDistribution operator()(const FeatureVector& x) const {
    const bool present = x.get(keyword_feature) > 0;
    return ClassDistribution{present ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0}};
  }
};

// Exhaustive surrogate over every non-empty mask of n positions, using the
// same kernel law but a full (not forward-selected) weighted least-squares
// fit. Returns |coef| per position.
template <typename TargetFn>
std::vector<double> exhaustive_surrogate(std::size_t n, double kernel_width, TargetFn&& target) {
  const std::size_t rows = (std::size_t{1} << n) - 1;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n + 1));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows)), w(static_cast<Eigen::Index>(rows));
  std::vector<std::uint8_t> mask(n);
  for (std::size_t m = 1; m <= rows; ++m) {
    const auto r = static_cast<Eigen::Index>(m - 1);
    std::size_t kept = 0;
    for (std::size_t j = 0; j < n; ++j) {
      mask[j] = (m >> j) & 1u;
      kept += mask[j];
      a(r, static_cast<Eigen::Index>(j)) = mask[j];
    }
    a(r, static_cast<Eigen::Index>(n)) = 1.0;
    const double dist = 1.0 - std::sqrt(static_cast<double>(kept) / static_cast<double>(n));
    w[r] = std::exp(-dist * dist / (kernel_width * kernel_width));
    y[r] = target(mask);
  }
  Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd aw = sw.asDiagonal() * a;
  Eigen::VectorXd yw = sw.asDiagonal() * y;
  Eigen::VectorXd beta = aw.colPivHouseholderQr().solve(yw);
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = std::abs(beta[static_cast<Eigen::Index>(j)]);
  return out;
}

template <typename F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Labels for n items: truth cycles through the classes and the model is right
// on `accuracy_pct` out of every 100 consecutive items (off by one class otherwise).
inline LabelMaps cyclic_labels(std::size_t n, std::size_t classes, std::size_t accuracy_pct) {
  LabelMaps m;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "doc" + std::to_string(i);
    const std::size_t y = i % classes;
    m.truths[id] = y;
    m.predictions[id] = (i / classes) % 100 < accuracy_pct ? y : (y + 1) % classes;
  }
  return m;
}

inline std::vector<StudyItem> text_free_items(std::size_t n) {
  std::vector<StudyItem> items;
  for (std::size_t i = 0; i < n; ++i) items.push_back({"doc" + std::to_string(i), "item " + std::to_string(i), {}, {}});
  return items;
}

inline std::vector<std::string> class_names(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= k; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

// Runs a full simulated study in memory and returns its annotation records.
inline std::vector<AnnotationRecord> run_simulation(std::size_t n_items, std::size_t per_item,
                                                    std::vector<Condition> conditions, const Scenario& scenario,
                                                    const LabelMaps& labels, std::size_t classes, std::uint64_t seed) {
  StudyConfig cfg;
  cfg.annotations_per_item = per_item;
  cfg.conditions = std::move(conditions);
  cfg.seed = seed;
  ManualClock clock;
  StudyEngine engine("sim", cfg, class_names(classes), text_free_items(n_items), clock.as_clock());
  return simulate_study(engine, clock, scenario, labels);
}

}  // namespace itr::fixture
