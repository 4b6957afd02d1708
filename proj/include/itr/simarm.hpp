#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include "itr/annotation.hpp"
#include "itr/error.hpp"
#include "itr/study.hpp"
#include "json.hpp"

namespace itr {

// Parametric annotator: copies the model prediction with p_follow_model,
// otherwise judges on its own (correct with p_correct_own, else uniform over
// the wrong classes). Response times are log-normal in seconds.
struct AnnotatorModel {
  double p_follow_model = 0;
  double p_correct_own = 1;
  double time_mu = 1.5;  // mean of log-seconds
  double time_sigma = 0.4;

  void validate() const {
    auto prob = [](double p) { return p >= 0 && p <= 1; };
    if (!prob(p_follow_model) || !prob(p_correct_own)) fail(Errc::InvalidConfig, "annotator probabilities must be in [0,1]");
    if (!(time_sigma >= 0) || !std::isfinite(time_mu)) fail(Errc::InvalidConfig, "invalid annotator time law");
  }

  double expected_time_s() const { return std::exp(time_mu + 0.5 * time_sigma * time_sigma); }
};

// Annotator behaviour per condition, the synthetic worker pool and a seed.
struct Scenario {
  std::map<Condition, AnnotatorModel> by_condition;
  AnnotatorModel fallback;
  std::size_t workers = 0;  // 0: twice annotations_per_item
  std::uint64_t seed = 0;

  const AnnotatorModel& annotator(Condition c) const {
    auto it = by_condition.find(c);
    return it == by_condition.end() ? fallback : it->second;
  }
};

inline AnnotatorModel annotator_from_json(const nlohmann::json& j, const AnnotatorModel& base = {}) {
  AnnotatorModel a = base;
  a.p_follow_model = j.value("p_follow_model", a.p_follow_model);
  a.p_correct_own = j.value("p_correct_own", a.p_correct_own);
  a.time_mu = j.value("time_mu", a.time_mu);
  a.time_sigma = j.value("time_sigma", a.time_sigma);
  a.validate();
  return a;
}

// {"seed": 1, "workers": 27, "default": {...}, "conditions": {"covar": {...}}}
inline Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    Scenario s;
    s.seed = j.value("seed", std::uint64_t{0});
    s.workers = j.value("workers", std::size_t{0});
    if (j.contains("default")) s.fallback = annotator_from_json(j.at("default"));
    if (j.contains("conditions")) {
      for (const auto& [name, body] : j.at("conditions").items()) {
        s.by_condition[parse_condition(name)] = annotator_from_json(body, s.fallback);
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::InvalidConfig, std::string("malformed annotator scenario: ") + e.what());
  }
}

namespace detail {

struct AnnotatorDraw {
  std::size_t label;
  double elapsed_ms;
};

inline AnnotatorDraw draw_annotation(const AnnotatorModel& a, std::size_t prediction, std::size_t truth,
                                     std::size_t classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t label;
  if (u(rng) < a.p_follow_model) {
    label = prediction;
  } else if (u(rng) < a.p_correct_own || classes < 2) {
    label = truth;
  } else {
    std::uniform_int_distribution<std::size_t> wrong(0, classes - 2);
    label = wrong(rng);
    if (label >= truth) ++label;
  }
  double secs = std::exp(a.time_mu);
  if (a.time_sigma > 0) secs = std::lognormal_distribution<double>(a.time_mu, a.time_sigma)(rng);
  // Millisecond resolution, never zero.
  double ms = std::max(1.0, std::round(secs * 1000.0));
  return {label, ms};
}

}  // namespace detail

struct LabelMaps {
  std::unordered_map<std::string, std::size_t> predictions;
  std::unordered_map<std::string, std::size_t> truths;
};

// Drives `engine` with synthetic workers until the study completes or no
// worker can receive more work. Workers are served round-robin; each answer
// advances `clock` by the sampled response time. Deterministic given seeds.
inline std::vector<AnnotationRecord> simulate_study(StudyEngine& engine, ManualClock& clock, const Scenario& scenario,
                                                    const LabelMaps& labels) {
  for (const auto& [c, a] : scenario.by_condition) a.validate();
  scenario.fallback.validate();
  const std::size_t k = engine.label_names().size();
  const std::size_t n_workers =
      scenario.workers ? scenario.workers : 2 * engine.config().annotations_per_item;
  std::vector<std::string> workers;
  for (std::size_t w = 0; w < n_workers; ++w) workers.push_back("sim-" + std::to_string(w + 1));
  std::vector<bool> done(n_workers, false);
  std::mt19937_64 rng(scenario.seed);

  std::size_t active = n_workers;
  while (active > 0) {
    for (std::size_t w = 0; w < n_workers; ++w) {
      if (done[w]) continue;
      auto next = engine.next_assignment(workers[w]);
      if (auto* ex = std::get_if<Exhausted>(&next)) {
        if (*ex == Exhausted::StudyComplete) return engine.records();
        done[w] = true;
        --active;
        continue;
      }
      const auto& a = std::get<Assignment>(next);
      auto p = labels.predictions.find(a.doc_id);
      auto t = labels.truths.find(a.doc_id);
      if (p == labels.predictions.end()) fail(Errc::MissingPrediction, "no prediction for '" + a.doc_id + "'");
      if (t == labels.truths.end()) fail(Errc::MissingTruth, "no true label for '" + a.doc_id + "'");
      auto d = detail::draw_annotation(scenario.annotator(a.condition), p->second, t->second, k, rng);
      clock.advance(static_cast<std::int64_t>(d.elapsed_ms));
      auto out = engine.submit_annotation({a.assignment_id, a.worker_id, d.label, d.elapsed_ms});
      if (!out.accepted) fail(out.reason, "simulated submission rejected: " + out.message);
    }
  }
  return engine.records();
}

// Stress mode: one thread per worker hammering the engine concurrently. No
// determinism promise; used to exercise the engine's serialization.
inline void simulate_study_concurrent(StudyEngine& engine, const Scenario& scenario, const LabelMaps& labels,
                                      std::size_t threads) {
  const std::size_t k = engine.label_names().size();
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        std::mt19937_64 rng(scenario.seed + w);
        const std::string worker = "sim-" + std::to_string(w + 1);
        while (true) {
          auto next = engine.next_assignment(worker);
          if (std::holds_alternative<Exhausted>(next)) return;
          const auto& a = std::get<Assignment>(next);
          auto d = detail::draw_annotation(scenario.annotator(a.condition), labels.predictions.at(a.doc_id),
                                           labels.truths.at(a.doc_id), k, rng);
          engine.submit_annotation({a.assignment_id, a.worker_id, d.label, d.elapsed_ms});
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Closed-form oracle.

using ProbTable = std::vector<std::vector<double>>;

struct ExpectedJoint {
  ProbTable human_vs_model;  // rows: human label, cols: model prediction
  ProbTable human_vs_truth;  // rows: human label, cols: true label
};

// `model_joint[y][m]` = P(Y = y, Yhat_ML = m). Enumerates (Y, Yhat_ML, Yhat_H).
inline ExpectedJoint expected_joint(const AnnotatorModel& a, const ProbTable& model_joint) {
  a.validate();
  const std::size_t k = model_joint.size();
  if (k < 2) fail(Errc::InvalidConfig, "expected_joint needs at least two classes");
  double total = 0;
  for (const auto& row : model_joint) {
    if (row.size() != k) fail(Errc::DimensionMismatch, "model joint must be K x K");
    for (double p : row) {
      if (p < 0) fail(Errc::InvalidConfig, "negative probability in model joint");
      total += p;
    }
  }
  if (std::abs(total - 1.0) > 1e-9) fail(Errc::InvalidConfig, "model joint must sum to 1");

  ExpectedJoint out{ProbTable(k, std::vector<double>(k, 0.0)), ProbTable(k, std::vector<double>(k, 0.0))};
  const double wrong = k > 1 ? (1.0 - a.p_correct_own) / static_cast<double>(k - 1) : 0.0;
  for (std::size_t y = 0; y < k; ++y) {
    for (std::size_t m = 0; m < k; ++m) {
      const double pym = model_joint[y][m];
      if (pym == 0) continue;
      for (std::size_t h = 0; h < k; ++h) {
        double ph = (1.0 - a.p_follow_model) * (h == y ? a.p_correct_own : wrong);
        if (h == m) ph += a.p_follow_model;
        out.human_vs_model[h][m] += pym * ph;
        out.human_vs_truth[h][y] += pym * ph;
      }
    }
  }
  return out;
}

// Conditional confusion P(Yhat_ML = m | Y = y) and class prior.
inline ExpectedJoint expected_joint(const AnnotatorModel& a, const ProbTable& confusion, const std::vector<double>& prior) {
  if (confusion.size() != prior.size()) fail(Errc::DimensionMismatch, "prior and confusion sizes differ");
  ProbTable joint = confusion;
  for (std::size_t y = 0; y < prior.size(); ++y)
    for (double& p : joint[y]) p *= prior[y];
  return expected_joint(a, joint);
}

inline double mutual_information(const ProbTable& p) {
  const std::size_t r = p.size(), c = r ? p.front().size() : 0;
  std::vector<double> pr(r, 0.0), pc(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      pr[i] += p[i][j];
      pc[j] += p[i][j];
    }
  double mi = 0;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      if (p[i][j] > 0) mi += p[i][j] * std::log2(p[i][j] / (pr[i] * pc[j]));
  return std::max(mi, 0.0);
}

struct ExpectedItr {
  double mi_vs_model = 0;
  double mi_vs_truth = 0;
  double mean_time_s = 0;
  double itr_vs_model = 0;
  double itr_vs_truth = 0;
};

inline ExpectedItr expected_itr(const AnnotatorModel& a, const ProbTable& model_joint) {
  auto j = expected_joint(a, model_joint);
  ExpectedItr e;
  e.mi_vs_model = mutual_information(j.human_vs_model);
  e.mi_vs_truth = mutual_information(j.human_vs_truth);
  e.mean_time_s = a.expected_time_s();
  e.itr_vs_model = e.mi_vs_model / e.mean_time_s;
  e.itr_vs_truth = e.mi_vs_truth / e.mean_time_s;
  return e;
}

// Empirical P(Y, Yhat_ML) over a set of documents.
inline ProbTable empirical_model_joint(const LabelMaps& labels, std::size_t classes) {
  ProbTable j(classes, std::vector<double>(classes, 0.0));
  std::size_t n = 0;
  for (const auto& [doc, y] : labels.truths) {
    auto p = labels.predictions.find(doc);
    if (p == labels.predictions.end()) continue;
    j[y][p->second] += 1.0;
    ++n;
  }
  if (n == 0) fail(Errc::EmptyCounts, "no documents with both prediction and truth");
  for (auto& row : j)
    for (double& v : row) v /= static_cast<double>(n);
  return j;
}

}  // namespace itr
