#pragma once

#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "itr/bench.hpp"
#include "itr/classifier.hpp"
#include "itr/metrics.hpp"
#include "json.hpp"

namespace itr {

namespace detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

// Left-aligned first column, right-aligned others.
inline void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return;
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], codepoint_length(r[c]));
  }
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      const auto pad = std::string(width[c] - codepoint_length(r[c]), ' ');
      if (c == 0) {
        out << r[c] << pad;
      } else {
        out << "  " << pad << r[c];
      }
    }
    out << '\n';
  }
}

inline nlohmann::ordered_json table_json(const JointCounts& t) {
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::ordered_json test_json(const SignificanceTest& t) {
  nlohmann::ordered_json j;
  if (t.result) {
    j["statistic"] = t.result->statistic;
    j["dof"] = t.result->dof;
    j["p_value"] = t.result->p_value;
  } else {
    j["skipped"] = t.skipped_reason;
  }
  return j;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["label_names"] = r.label_names;
  j["records"] = r.n_records;
  j["records_analyzed"] = r.n_filtered;

  auto conds = nlohmann::ordered_json::array();
  for (const auto& s : r.conditions) {
    nlohmann::ordered_json c;
    c["condition"] = std::string(condition_name(s.condition));
    c["n"] = s.n;
    c["mean_time_s"] = s.mean_time_s;
    c["accuracy"] = s.accuracy;
    c["mi_vs_model_bit"] = s.mi_vs_model;
    c["mi_vs_truth_bit"] = s.mi_vs_truth;
    c["itr_vs_model_bit_per_s"] = s.itr_vs_model;
    c["itr_vs_truth_bit_per_s"] = s.itr_vs_truth;
    if (s.trust) {
      c["trust"] = *s.trust;
    } else {
      c["trust"] = nullptr;
      c["trust_undefined"] = true;
    }
    auto pc = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < s.per_class.size(); ++k) {
      pc.push_back({{"class", r.label_names[k]},
                    {"n", s.per_class[k].n},
                    {"accuracy", s.per_class[k].accuracy},
                    {"mean_time_s", s.per_class[k].mean_time_s}});
    }
    c["per_class"] = std::move(pc);
    c["counts_vs_model"] = detail::table_json(s.vs_model);
    c["counts_vs_truth"] = detail::table_json(s.vs_truth);
    conds.push_back(std::move(c));
  }
  j["conditions"] = std::move(conds);
  j["accuracy_chi_square"] = detail::test_json(r.accuracy_test);
  j["time_kruskal_wallis"] = detail::test_json(r.time_test);
  return j;
}

// Human-readable tables: accuracy/time by class and condition, ITR against
// the model and the truth, and trust coefficients.
inline void print_report(std::ostream& out, const MetricsReport& r) {
  auto header = [&](std::vector<std::string> first) {
    for (const auto& s : r.conditions) first.push_back(std::string(condition_name(s.condition)));
    return first;
  };

  out << "Accuracy (%) and mean time (s) by true class\n";
  std::vector<std::vector<std::string>> t1;
  {
    std::vector<std::string> h{"class"};
    for (const auto& s : r.conditions) {
      h.push_back(std::string(condition_name(s.condition)) + " acc");
      h.push_back("time");
    }
    t1.push_back(std::move(h));
  }
  for (std::size_t k = 0; k < r.label_names.size(); ++k) {
    std::vector<std::string> row{r.label_names[k]};
    for (const auto& s : r.conditions) {
      const auto& c = s.per_class[k];
      row.push_back(c.n ? detail::fixed(100 * c.accuracy, 2) : "-");
      row.push_back(c.n ? detail::fixed(c.mean_time_s, 2) : "-");
    }
    t1.push_back(std::move(row));
  }
  {
    std::vector<std::string> row{"weighted avg"};
    for (const auto& s : r.conditions) {
      row.push_back(detail::fixed(100 * s.accuracy, 2));
      row.push_back(detail::fixed(s.mean_time_s, 2));
    }
    t1.push_back(std::move(row));
  }
  detail::print_table(out, t1);

  out << "\nInformation transfer rate (bit/s)\n";
  std::vector<std::vector<std::string>> t2{header({""})};
  std::vector<std::string> rm{"ITR vs model"}, rt{"ITR vs truth"}, mm{"MI vs model (bit)"}, mt{"MI vs truth (bit)"},
      n{"annotations"};
  for (const auto& s : r.conditions) {
    rm.push_back(detail::fixed(s.itr_vs_model, 3));
    rt.push_back(detail::fixed(s.itr_vs_truth, 3));
    mm.push_back(detail::fixed(s.mi_vs_model, 3));
    mt.push_back(detail::fixed(s.mi_vs_truth, 3));
    n.push_back(std::to_string(s.n));
  }
  for (auto* row : {&rm, &rt, &mm, &mt, &n}) t2.push_back(*row);
  detail::print_table(out, t2);

  out << "\nTrust coefficient\n";
  std::vector<std::vector<std::string>> t3{header({""})};
  std::vector<std::string> tr{"T"};
  for (const auto& s : r.conditions) tr.push_back(s.trust ? detail::fixed(*s.trust, 3) : "undefined");
  t3.push_back(std::move(tr));
  detail::print_table(out, t3);

  auto test_line = [&](const char* name, const SignificanceTest& t) {
    out << name << ": ";
    if (t.result) {
      out << "statistic=" << detail::fixed(t.result->statistic, 3) << " dof=" << t.result->dof
          << " p=" << std::setprecision(4) << t.result->p_value << '\n';
    } else {
      out << "skipped (" << t.skipped_reason << ")\n";
    }
  };
  out << '\n';
  test_line("Accuracy chi-square (conditions x correct)", r.accuracy_test);
  test_line("Time Kruskal-Wallis (across conditions)", r.time_test);
}

inline nlohmann::ordered_json to_json(const EvalReport& r, const std::vector<std::string>& label_names) {
  nlohmann::ordered_json j;
  auto pc = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& c = r.per_class[k];
    pc.push_back({{"class", label_names.at(k)},
                  {"precision", c.precision},
                  {"recall", c.recall},
                  {"f1", c.f1},
                  {"support", c.support}});
  }
  j["per_class"] = std::move(pc);
  j["weighted"] = {{"precision", r.weighted.precision},
                   {"recall", r.weighted.recall},
                   {"f1", r.weighted.f1},
                   {"support", r.weighted.support}};
  j["accuracy"] = r.accuracy;
  return j;
}

inline void print_eval(std::ostream& out, const EvalReport& r, const std::vector<std::string>& label_names) {
  std::vector<std::vector<std::string>> t{{"", "precision", "recall", "f1-score", "support"}};
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& c = r.per_class[k];
    t.push_back({label_names.at(k), detail::fixed(c.precision, 2), detail::fixed(c.recall, 2), detail::fixed(c.f1, 2),
                 std::to_string(c.support)});
  }
  t.push_back({"avg / total", detail::fixed(r.weighted.precision, 2), detail::fixed(r.weighted.recall, 2),
               detail::fixed(r.weighted.f1, 2), std::to_string(r.weighted.support)});
  detail::print_table(out, t);
}

inline nlohmann::ordered_json to_json(const TimingStats& t) {
  return {{"repetitions", t.repetitions}, {"mean_s", t.mean_s}, {"stddev_s", t.stddev_s}, {"min_s", t.min_s},
          {"max_s", t.max_s}};
}

inline nlohmann::ordered_json to_json(const BenchReport& r) {
  nlohmann::ordered_json j;
  j["lime_samples"] = r.lime_samples;
  j["covar_setup"] = to_json(r.covar_setup);
  j["covar"] = to_json(r.covar);
  j["lime"] = to_json(r.lime);
  j["random"] = to_json(r.random);
  j["lime_over_covar"] = r.lime_over_covar();
  return j;
}

inline void print_bench(std::ostream& out, const BenchReport& r) {
  auto fmt = [](const TimingStats& t) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.6f +- %.6f s", t.mean_s, t.stddev_s);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> t{{"method", "per instance (mean +- sd)", "repetitions"}};
  t.push_back({"covar", fmt(r.covar), std::to_string(r.covar.repetitions)});
  t.push_back({"lime (" + std::to_string(r.lime_samples) + " samples)", fmt(r.lime), std::to_string(r.lime.repetitions)});
  t.push_back({"random", fmt(r.random), std::to_string(r.random.repetitions)});
  detail::print_table(out, t);
  out << "covar importance setup (once): " << fmt(r.covar_setup) << '\n';
  out << "lime / covar: " << detail::fixed(r.lime_over_covar(), 1) << "x\n";
}

}  // namespace itr
