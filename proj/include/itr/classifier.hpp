#pragma once

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "itr/corpus.hpp"
#include "itr/error.hpp"
#include "itr/hash.hpp"
#include "itr/stopwords.hpp"

namespace itr {

// Dense d x K weight matrix, row-major: weight(feature, k).
struct ModelWeights {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> w;
  std::vector<std::string> label_names;
  std::uint64_t vocab_hash = 0;

  ModelWeights() = default;
  ModelWeights(std::size_t d, std::size_t k) : dim(d), classes(k), w(d * k, 0.0) {}

  double& at(std::size_t f, std::size_t k) { return w[f * classes + k]; }
  double at(std::size_t f, std::size_t k) const { return w[f * classes + k]; }

  double squared_norm() const {
    double s = 0;
    for (double v : w) s += v * v;
    return s;
  }
};

struct ClassDistribution {
  std::vector<double> probs;

  // Ties go to the lowest class index.
  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }
};

// Softmax with max-logit subtraction.
inline ClassDistribution softmax(const std::vector<double>& logits) {
  ClassDistribution out;
  out.probs.resize(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.probs[k] = std::exp(logits[k] - m);
    sum += out.probs[k];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

inline std::vector<double> logits(const FeatureVector& x, const ModelWeights& m) {
  std::vector<double> z(m.classes, 0.0);
  for (const auto& e : x.entries) {
    if (e.feature >= m.dim) {
      fail(Errc::DimensionMismatch,
           "feature " + std::to_string(e.feature) + " outside model dimension " + std::to_string(m.dim));
    }
    const double* row = &m.w[e.feature * m.classes];
    for (std::size_t k = 0; k < m.classes; ++k) z[k] += row[k] * e.value;
  }
  return z;
}

inline ClassDistribution predict_proba(const FeatureVector& x, const ModelWeights& m) { return softmax(logits(x, m)); }

// ---------------------------------------------------------------------------
// Objective: mean cross-entropy + (lambda / 2) * ||W||^2.

namespace detail {

inline double log_sum_exp(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

inline void check_training_inputs(const FeatureMatrix& x, const std::vector<std::size_t>& labels,
                                  std::size_t classes) {
  if (x.num_rows() != labels.size()) fail(Errc::DimensionMismatch, "row count differs from label count");
  if (x.num_rows() == 0) fail(Errc::SingleClassCorpus, "training set is empty");
  for (auto y : labels) {
    if (y >= classes) fail(Errc::DimensionMismatch, "label index outside class range");
  }
  for (const auto& r : x.rows) {
    for (const auto& e : r.entries) {
      if (e.feature >= x.cols) fail(Errc::DimensionMismatch, "feature position outside matrix width");
    }
  }
}

}  // namespace detail

inline double objective(const ModelWeights& m, const FeatureMatrix& x, const std::vector<std::size_t>& labels,
                        double lambda) {
  double loss = 0;
  for (std::size_t i = 0; i < x.num_rows(); ++i) {
    auto z = logits(x.rows[i], m);
    loss += detail::log_sum_exp(z) - z[labels[i]];
  }
  return loss / static_cast<double>(x.num_rows()) + 0.5 * lambda * m.squared_norm();
}

// Analytic gradient of objective() with respect to W, same layout as W.
inline std::vector<double> objective_gradient(const ModelWeights& m, const FeatureMatrix& x,
                                              const std::vector<std::size_t>& labels, double lambda) {
  std::vector<double> g(m.w.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(x.num_rows());
  for (std::size_t i = 0; i < x.num_rows(); ++i) {
    auto p = predict_proba(x.rows[i], m).probs;
    p[labels[i]] -= 1.0;
    for (const auto& e : x.rows[i].entries) {
      for (std::size_t k = 0; k < m.classes; ++k) g[e.feature * m.classes + k] += inv_n * e.value * p[k];
    }
  }
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += lambda * m.w[j];
  return g;
}

// ---------------------------------------------------------------------------
// SGD training.

struct SgdConfig {
  double lambda = 1e-4;
  double learning_rate = 0.1;  // eta_t = learning_rate / (1 + t * lambda * learning_rate)
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ModelWeights weights;
  // objective() before training (index 0) and after each epoch.
  std::vector<double> epoch_objective;
};

namespace detail {

// Visiting order depends only on the seed: samples are first put in a
// canonical content order, then shuffled.
inline std::vector<std::size_t> canonical_order(const FeatureMatrix& x, const std::vector<std::size_t>& labels) {
  std::vector<std::size_t> idx(x.num_rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (labels[a] != labels[b]) return labels[a] < labels[b];
    const auto& ea = x.rows[a].entries;
    const auto& eb = x.rows[b].entries;
    return std::lexicographical_compare(ea.begin(), ea.end(), eb.begin(), eb.end(), [](const auto& l, const auto& r) {
      return l.feature != r.feature ? l.feature < r.feature : l.value < r.value;
    });
  });
  return idx;
}

}  // namespace detail

inline TrainResult train_sgd(const FeatureMatrix& x, const std::vector<std::size_t>& labels, std::size_t classes,
                             const SgdConfig& cfg = {}) {
  detail::check_training_inputs(x, labels, classes);
  if (cfg.lambda < 0) fail(Errc::InvalidConfig, "regularization must be non-negative");
  if (classes < 2 || std::all_of(labels.begin(), labels.end(), [&](auto y) { return y == labels.front(); })) {
    fail(Errc::SingleClassCorpus, "training data must contain at least two classes");
  }

  TrainResult result;
  ModelWeights& m = result.weights;
  m = ModelWeights(x.cols, classes);

  // W = scale * v, so the L2 shrinkage step is O(1) per sample.
  std::vector<double> v(m.w.size(), 0.0);
  double scale = 1.0;
  auto materialize = [&] {
    for (std::size_t j = 0; j < v.size(); ++j) m.w[j] = scale * v[j];
  };

  result.epoch_objective.push_back(objective(m, x, labels, cfg.lambda));
  auto order = detail::canonical_order(x, labels);
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> z(classes);
  std::uint64_t t = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const double eta = cfg.learning_rate / (1.0 + static_cast<double>(t) * cfg.lambda * cfg.learning_rate);
      ++t;
      const auto& row = x.rows[i];

      std::fill(z.begin(), z.end(), 0.0);
      for (const auto& e : row.entries) {
        const double* vr = &v[e.feature * classes];
        for (std::size_t k = 0; k < classes; ++k) z[k] += vr[k] * e.value;
      }
      for (double& zk : z) zk *= scale;
      auto p = softmax(z).probs;
      p[labels[i]] -= 1.0;

      const double shrink = 1.0 - eta * cfg.lambda;
      if (shrink <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        scale = 1.0;
      } else {
        scale *= shrink;
      }
      const double step = eta / scale;
      for (const auto& e : row.entries) {
        double* vr = &v[e.feature * classes];
        for (std::size_t k = 0; k < classes; ++k) vr[k] -= step * e.value * p[k];
      }
      if (scale < 1e-9) {
        for (double& vj : v) vj *= scale;
        scale = 1.0;
      }
    }
    materialize();
    result.epoch_objective.push_back(objective(m, x, labels, cfg.lambda));
  }
  materialize();
  return result;
}

// ---------------------------------------------------------------------------
// Held-out evaluation.

struct ClassScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

struct EvalReport {
  std::vector<ClassScores> per_class;
  ClassScores weighted;  // support-weighted means; support = total
  double accuracy = 0;
};

// One-vs-rest scores. Undefined ratios (no predictions / no support) are 0.
inline EvalReport evaluate_predictions(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth,
                                       std::size_t classes) {
  if (predicted.size() != truth.size()) fail(Errc::DimensionMismatch, "prediction and label counts differ");
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] >= classes || truth[i] >= classes) fail(Errc::DimensionMismatch, "class index out of range");
    if (predicted[i] == truth[i]) {
      ++tp[truth[i]];
      ++correct;
    } else {
      ++fp[predicted[i]];
      ++fn[truth[i]];
    }
  }
  EvalReport r;
  r.per_class.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    auto& c = r.per_class[k];
    c.support = tp[k] + fn[k];
    c.precision = tp[k] + fp[k] ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k]) : 0.0;
    c.recall = c.support ? static_cast<double>(tp[k]) / static_cast<double>(c.support) : 0.0;
    c.f1 = c.precision + c.recall > 0 ? 2 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    r.weighted.support += c.support;
  }
  if (r.weighted.support > 0) {
    for (const auto& c : r.per_class) {
      const double w = static_cast<double>(c.support) / static_cast<double>(r.weighted.support);
      r.weighted.precision += w * c.precision;
      r.weighted.recall += w * c.recall;
      r.weighted.f1 += w * c.f1;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  }
  return r;
}

// ---------------------------------------------------------------------------
// A trained text classifier: frozen featurization + weights.

struct TrainingSettings {
  std::size_t min_df = 1;
  SgdConfig sgd;
};

struct TextClassifier {
  Featurizer featurizer;
  ModelWeights weights;
  TrainingSettings settings;

  std::size_t num_classes() const { return weights.classes; }
  const std::vector<std::string>& label_names() const { return weights.label_names; }

  ClassDistribution predict_proba(const FeatureVector& x) const { return itr::predict_proba(x, weights); }
  ClassDistribution predict_proba(std::string_view text) const { return predict_proba(featurizer.featurize(text)); }
  std::size_t predict(std::string_view text) const { return predict_proba(text).argmax(); }
};

inline TextClassifier train_text_classifier(const LabeledCorpus& corpus, const TrainingSettings& settings = {}) {
  std::vector<Document> labeled;
  std::vector<std::size_t> labels;
  for (const auto& d : corpus.docs) {
    if (d.label) {
      labeled.push_back(d);
      labels.push_back(*d.label);
    }
  }
  if (labeled.empty()) fail(Errc::SingleClassCorpus, "dataset has no labeled documents");
  TextClassifier clf;
  clf.settings = settings;
  clf.featurizer = Featurizer::fit(labeled, settings.min_df);
  auto x = clf.featurizer.featurize_all(labeled);
  clf.weights = train_sgd(x, labels, corpus.num_classes(), settings.sgd).weights;
  clf.weights.label_names = corpus.label_names;
  clf.weights.vocab_hash = clf.featurizer.vocabulary().checksum();
  return clf;
}

inline EvalReport evaluate(const TextClassifier& clf, const LabeledCorpus& test) {
  std::vector<std::size_t> pred, truth;
  for (const auto& d : test.docs) {
    if (!d.label) continue;
    pred.push_back(clf.predict(d.text));
    truth.push_back(*d.label);
  }
  return evaluate_predictions(pred, truth, clf.num_classes());
}

// ---------------------------------------------------------------------------
// Model artifact: line-oriented text, floats as C99 hex literals (exact).
//
//   itrlab-model 1
//   tokenizer unicode-alnum-lowercase
//   stopwords <count> <fnv1a-hex>
//   tfidf raw-tf smooth-idf l2
//   min_df <n>
//   sgd <lambda> <learning_rate> <epochs> <seed>
//   labels <K>
//   label <escaped name>            (K lines)
//   vocab <d> <fnv1a-hex>
//   term <escaped term> <idf>       (d lines)
//   weights <d> <K>
//   <K values>                      (d lines, row-major)
//   end

namespace detail {

inline std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) fail(Errc::ParseError, "bad number '" + s + "' in model");
  return v;
}

inline std::string hex_u64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

}  // namespace detail

inline void save_model(std::ostream& out, const TextClassifier& clf) {
  const auto& vocab = clf.featurizer.vocabulary();
  const auto& m = clf.weights;
  out << "itrlab-model 1\n";
  out << "tokenizer unicode-alnum-lowercase\n";
  out << "stopwords " << kEnglishStopwords.size() << ' ' << detail::hex_u64(stopword_checksum()) << '\n';
  out << "tfidf raw-tf smooth-idf l2\n";
  out << "min_df " << clf.settings.min_df << '\n';
  out << "sgd " << detail::hex_double(clf.settings.sgd.lambda) << ' '
      << detail::hex_double(clf.settings.sgd.learning_rate) << ' ' << clf.settings.sgd.epochs << ' '
      << clf.settings.sgd.seed << '\n';
  out << "labels " << m.classes << '\n';
  for (const auto& name : m.label_names) out << "label " << escape_tsv_field(name) << '\n';
  out << "vocab " << vocab.size() << ' ' << detail::hex_u64(vocab.checksum()) << '\n';
  for (std::size_t f = 0; f < vocab.size(); ++f) {
    out << "term " << escape_tsv_field(vocab.term(f)) << ' ' << detail::hex_double(clf.featurizer.idf()[f]) << '\n';
  }
  out << "weights " << m.dim << ' ' << m.classes << '\n';
  for (std::size_t f = 0; f < m.dim; ++f) {
    for (std::size_t k = 0; k < m.classes; ++k) out << (k ? " " : "") << detail::hex_double(m.at(f, k));
    out << '\n';
  }
  out << "end\n";
}

inline TextClassifier load_model(std::istream& in, std::string_view source = "<model>") {
  auto bad = [&](const std::string& what) -> void { fail(Errc::ParseError, std::string(source) + ": " + what); };
  std::string line;
  auto next = [&](std::string_view key) {
    if (!std::getline(in, line)) bad("truncated model (expected '" + std::string(key) + "')");
    if (line.rfind(std::string(key) + " ", 0) != 0 && line != key) bad("expected '" + std::string(key) + "' line");
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string{};
  };
  auto words = [](const std::string& s) {
    std::istringstream ss(s);
    std::vector<std::string> w;
    for (std::string t; ss >> t;) w.push_back(t);
    return w;
  };
  auto to_size = [&](const std::string& s) -> std::size_t {
    auto v = detail::parse_positive_int(s);
    if (!v && s != "0") bad("bad count '" + s + "'");
    return v ? static_cast<std::size_t>(*v) : 0;
  };

  if (next("itrlab-model") != "1") bad("unsupported model format version");
  if (next("tokenizer") != "unicode-alnum-lowercase") bad("unsupported tokenizer");
  auto sw = words(next("stopwords"));
  if (sw.size() != 2 || sw[1] != detail::hex_u64(stopword_checksum())) bad("stopword list checksum mismatch");
  if (next("tfidf") != "raw-tf smooth-idf l2") bad("unsupported tf-idf variant");

  TextClassifier clf;
  clf.settings.min_df = to_size(next("min_df"));
  auto sgd = words(next("sgd"));
  if (sgd.size() != 4) bad("malformed sgd line");
  clf.settings.sgd.lambda = detail::parse_double(sgd[0]);
  clf.settings.sgd.learning_rate = detail::parse_double(sgd[1]);
  clf.settings.sgd.epochs = to_size(sgd[2]);
  clf.settings.sgd.seed = std::strtoull(sgd[3].c_str(), nullptr, 10);

  const std::size_t k = to_size(next("labels"));
  if (k < 2) bad("model needs at least two classes");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back(unescape_tsv_field(next("label")));

  auto vh = words(next("vocab"));
  if (vh.size() != 2) bad("malformed vocab line");
  const std::size_t d = to_size(vh[0]);
  std::vector<std::string> terms;
  std::vector<double> idf;
  for (std::size_t f = 0; f < d; ++f) {
    auto rest = next("term");
    auto sp = rest.rfind(' ');
    if (sp == std::string::npos) bad("malformed term line");
    terms.push_back(unescape_tsv_field(rest.substr(0, sp)));
    idf.push_back(detail::parse_double(rest.substr(sp + 1)));
  }
  VocabularyIndex vocab(std::move(terms));
  if (detail::hex_u64(vocab.checksum()) != vh[1]) bad("vocabulary checksum mismatch");

  auto wh = words(next("weights"));
  if (wh.size() != 2 || to_size(wh[0]) != d || to_size(wh[1]) != k) bad("weight shape does not match header");
  ModelWeights m(d, k);
  for (std::size_t f = 0; f < d; ++f) {
    if (!std::getline(in, line)) bad("truncated weights");
    auto vals = words(line);
    if (vals.size() != k) bad("weight row " + std::to_string(f) + " has wrong width");
    for (std::size_t j = 0; j < k; ++j) m.at(f, j) = detail::parse_double(vals[j]);
  }
  next("end");
  m.label_names = std::move(names);
  m.vocab_hash = vocab.checksum();
  clf.featurizer = Featurizer(std::move(vocab), std::move(idf));
  clf.weights = std::move(m);
  return clf;
}

inline void save_model_file(const std::string& path, const TextClassifier& clf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot write model '" + path + "'");
  save_model(out, clf);
  if (!out) fail(Errc::IoError, "failed writing model '" + path + "'");
}

inline TextClassifier load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open model '" + path + "'");
  return load_model(in, path);
}

}  // namespace itr
