// itrlab: train -> explain -> serve/simulate -> analyze -> bench.
//
// Exit codes: 0 ok, 2 usage error, 3 data error, 4 internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "itr/bench.hpp"
#include "itr/classifier.hpp"
#include "itr/corpus.hpp"
#include "itr/explain.hpp"
#include "itr/hash.hpp"
#include "itr/metrics.hpp"
#include "itr/report.hpp"
#include "itr/service.hpp"
#include "itr/simarm.hpp"
#include "itr/stopwords.hpp"
#include "itr/study.hpp"
#include "json.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

constexpr const char* kDataDirEnv = "ITRLAB_DATA_DIR";

std::string data_dir() {
  const char* d = std::getenv(kDataDirEnv);
  return d && *d ? d : ".";
}

// Relative paths in config files resolve against $ITRLAB_DATA_DIR when set,
// otherwise against the directory of the config file.
std::string resolve_data_path(const std::string& p, const std::string& config_file) {
  std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  if (std::getenv(kDataDirEnv)) return (std::filesystem::path(data_dir()) / path).string();
  return (std::filesystem::path(config_file).parent_path() / path).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) itr::fail(itr::Errc::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    itr::fail(itr::Errc::ParseError, "'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) itr::fail(itr::Errc::IoError, "cannot write '" + path + "'");
  out << content;
  if (!out) itr::fail(itr::Errc::IoError, "failed writing '" + path + "'");
}

std::string checksum_hex(const std::string& bytes) { return itr::detail::hex_u64(itr::fnv1a(bytes)); }

itr::LabelMaps label_maps(const itr::TextClassifier& clf, const itr::LabeledCorpus& corpus) {
  itr::LabelMaps maps;
  for (const auto& d : corpus.docs) {
    maps.predictions[d.id] = clf.predict(d.text);
    if (d.label) maps.truths[d.id] = *d.label;
  }
  return maps;
}

struct Options {
  std::string format = "text";
  std::string dataset, model, out, log, method = "covar", study_config, annotators;
  std::uint64_t seed = 0;
  double lambda = 1e-4, learning_rate = 0.1;
  std::size_t epochs = 20, min_df = 1, lime_samples = 2500, repetitions = 64;
  std::vector<std::string> condition_filter;
  double max_time_s = 0;
  std::string host = "127.0.0.1", serve_dir;
  int port = 8080;
  bool checksum_only = false;
};

int cmd_train(const Options& o) {
  auto corpus = itr::read_tsv_file(o.dataset);
  itr::TrainingSettings s;
  s.min_df = o.min_df;
  s.sgd = {o.lambda, o.learning_rate, o.epochs, o.seed};
  auto clf = itr::train_text_classifier(corpus, s);
  std::ostringstream buf;
  itr::save_model(buf, clf);
  write_file(o.out, buf.str());
  auto report = itr::evaluate(clf, corpus);
  const auto sum = checksum_hex(buf.str());
  if (o.format == "json") {
    nlohmann::ordered_json j{{"model", o.out},
                             {"checksum", sum},
                             {"features", clf.featurizer.dimension()},
                             {"classes", clf.num_classes()},
                             {"training_accuracy", report.accuracy}};
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "trained on " << corpus.docs.size() << " documents: d=" << clf.featurizer.dimension()
              << " features, K=" << clf.num_classes() << " classes\n"
              << "training accuracy " << report.accuracy << '\n'
              << "wrote " << o.out << " (checksum " << sum << ")\n";
  }
  return 0;
}

int cmd_evaluate(const Options& o) {
  auto clf = itr::load_model_file(o.model);
  auto corpus = itr::read_tsv_file(o.dataset, &clf.label_names());
  auto report = itr::evaluate(clf, corpus);
  if (o.format == "json") {
    std::cout << itr::to_json(report, clf.label_names()).dump(2) << '\n';
  } else {
    itr::print_eval(std::cout, report, clf.label_names());
  }
  return 0;
}

int cmd_explain(const Options& o) {
  const auto method = itr::parse_method(o.method);
  auto clf = itr::load_model_file(o.model);
  auto corpus = itr::read_tsv_file(o.dataset, &clf.label_names());
  std::vector<itr::ImportanceVector> importances;
  if (method == itr::ExplainMethod::Covar) {
    importances = itr::covar_importances_all(clf.featurizer.featurize_all(corpus.docs), clf.weights);
  }
  std::ostringstream out;
  std::size_t written = 0, skipped = 0;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    const auto& d = corpus.docs[i];
    try {
      itr::Explanation e;
      switch (method) {
        case itr::ExplainMethod::Covar: e = itr::covar_explain(d, clf, importances); break;
        case itr::ExplainMethod::Lime: {
          itr::LimeConfig lc;
          lc.n_samples = o.lime_samples;
          lc.seed = o.seed * 1000003ULL + i;
          e = itr::lime_explain(d, clf, lc);
          if (e.degenerate) std::cerr << "warning: degenerate surrogate for '" << d.id << "'\n";
          break;
        }
        case itr::ExplainMethod::Random: e = itr::random_explain(d, o.seed * 2000003ULL + i); break;
      }
      out << itr::to_json(e, clf.label_names()).dump() << '\n';
      ++written;
    } catch (const itr::Error& e) {
      if (e.code() != itr::Errc::TooFewTokens) throw;
      std::cerr << "skipping: " << e.what() << '\n';
      ++skipped;
    }
  }
  write_file(o.out, out.str());
  if (o.format == "json") {
    std::cout << nlohmann::ordered_json{{"out", o.out}, {"explanations", written}, {"skipped", skipped}}.dump(2)
              << '\n';
  } else {
    std::cout << "wrote " << written << " " << o.method << " explanations to " << o.out << " (" << skipped
              << " skipped)\n";
  }
  return 0;
}

int cmd_simulate(const Options& o) {
  auto cfg_json = read_json_file(o.study_config);
  auto cfg = itr::study_config_from_json(cfg_json);
  auto scenario = itr::scenario_from_json(read_json_file(o.annotators));
  auto clf = itr::load_model_file(resolve_data_path(cfg.model, o.study_config));
  auto corpus = itr::read_tsv_file(resolve_data_path(cfg.dataset, o.study_config), &clf.label_names());
  itr::ItemBuildReport build;
  auto items = itr::build_study_items(cfg, corpus, clf, &build);
  if (items.empty()) itr::fail(itr::Errc::InvalidConfig, "no dataset item can be explained");
  auto labels = label_maps(clf, corpus);

  itr::ManualClock clock;
  itr::StudyEngine engine("sim-" + std::to_string(cfg.seed), cfg, clf.label_names(), std::move(items),
                          clock.as_clock());
  auto records = itr::simulate_study(engine, clock, scenario, labels);
  const auto log = engine.export_log();
  write_file(o.out, log);
  if (o.format == "json") {
    std::cout << nlohmann::ordered_json{{"log", o.out},
                                        {"annotations", records.size()},
                                        {"complete", engine.complete()},
                                        {"dropped_items", build.dropped_too_few_tokens},
                                        {"checksum", checksum_hex(log)}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "simulated " << records.size() << " annotations over " << engine.items().size() << " items ("
              << build.dropped_too_few_tokens << " items dropped: too few tokens)\n"
              << "wrote " << o.out << " (checksum " << checksum_hex(log) << ")\n";
  }
  return 0;
}

int cmd_analyze(const Options& o) {
  std::ifstream in(o.log, std::ios::binary);
  if (!in) itr::fail(itr::Errc::IoError, "cannot open annotation log '" + o.log + "'");
  std::vector<itr::AnnotationRecord> records;
  try {
    records = itr::read_annotation_records(in);
  } catch (const itr::Error& e) {
    itr::fail(e.code(), "annotation log '" + o.log + "': " + e.what());
  }
  if (records.empty()) itr::fail(itr::Errc::EmptyCounts, "annotation log '" + o.log + "' contains no annotation records");

  auto clf = itr::load_model_file(o.model);
  auto corpus = itr::read_tsv_file(o.dataset, &clf.label_names());
  auto labels = label_maps(clf, corpus);
  itr::AnalyzeOptions opts;
  for (const auto& c : o.condition_filter) opts.condition_filter.insert(itr::parse_condition(c));
  if (o.max_time_s > 0) opts.max_time_s = o.max_time_s;
  auto report = itr::analyze(records, labels.predictions, labels.truths, clf.label_names(), opts);
  if (o.format == "json") {
    std::cout << itr::to_json(report).dump(2) << '\n';
  } else {
    itr::print_report(std::cout, report);
  }
  return 0;
}

int cmd_bench(const Options& o) {
  auto clf = itr::load_model_file(o.model);
  auto corpus = itr::read_tsv_file(o.dataset, &clf.label_names());
  itr::BenchConfig bc;
  bc.repetitions = o.repetitions;
  bc.lime_samples = o.lime_samples;
  bc.seed = o.seed;
  auto report = itr::bench_explainers(corpus.docs, clf, bc);
  if (o.format == "json") {
    std::cout << itr::to_json(report).dump(2) << '\n';
  } else {
    itr::print_bench(std::cout, report);
  }
  return 0;
}

int cmd_serve(const Options& o) {
  itr::StudyService service(o.serve_dir.empty() ? data_dir() : o.serve_dir);
  const auto restored = service.restore();
  httplib::Server srv;
  service.install(srv);
  std::cout << "restored " << restored << " studies; listening on http://" << o.host << ":" << o.port << std::endl;
  if (!srv.listen(o.host, o.port)) itr::fail(itr::Errc::IoError, "cannot listen on " + o.host + ":" + std::to_string(o.port));
  return 0;
}

int cmd_stopwords(const Options& o) {
  if (!o.checksum_only) {
    for (auto w : itr::kEnglishStopwords) std::cout << w << '\n';
  }
  std::cerr << itr::kEnglishStopwords.size() << " stopwords, checksum " << itr::detail::hex_u64(itr::stopword_checksum())
            << '\n';
  if (o.checksum_only) std::cout << itr::detail::hex_u64(itr::stopword_checksum()) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"itrlab: information transfer rate evaluation of interpretability methods"};
  app.require_subcommand(1);
  Options o;

  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"text", "json"}));
  };

  auto* train = app.add_subcommand("train", "Train the tf-idf softmax classifier");
  train->add_option("--dataset", o.dataset, "Training TSV (id, label, text)")->required();
  train->add_option("--out", o.out, "Model file to write")->required();
  train->add_option("--seed", o.seed, "Shuffling seed");
  train->add_option("--lambda", o.lambda, "L2 regularization")->check(CLI::NonNegativeNumber);
  train->add_option("--learning-rate", o.learning_rate, "Initial SGD learning rate")->check(CLI::PositiveNumber);
  train->add_option("--epochs", o.epochs, "SGD epochs");
  train->add_option("--min-df", o.min_df, "Minimum document frequency for a vocabulary term");
  add_format(train);

  auto* eval = app.add_subcommand("evaluate", "Held-out precision/recall/F1");
  eval->add_option("--model", o.model, "Model file")->required();
  eval->add_option("--dataset", o.dataset, "Labeled TSV")->required();
  add_format(eval);

  auto* explain = app.add_subcommand("explain", "Write top-3 word highlights per document");
  explain->add_option("--method", o.method, "covar | lime | random")->check(CLI::IsMember({"covar", "lime", "random"}));
  explain->add_option("--dataset", o.dataset, "Documents to explain (also the COVAR held-out set)")->required();
  explain->add_option("--model", o.model, "Model file")->required();
  explain->add_option("--seed", o.seed, "Seed for lime/random");
  explain->add_option("--out", o.out, "Explanation records (NDJSON)")->required();
  explain->add_option("--lime-samples", o.lime_samples, "Perturbations per LIME explanation");
  add_format(explain);

  auto* serve = app.add_subcommand("serve", "Run the annotation study HTTP service");
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port");
  serve->add_option("--data-dir", o.serve_dir, std::string("Study storage (default $") + kDataDirEnv + " or .)");

  auto* simulate = app.add_subcommand("simulate", "Run a study with simulated annotators");
  simulate->add_option("--study-config", o.study_config, "StudyConfig JSON")->required();
  simulate->add_option("--annotators", o.annotators, "Annotator scenario JSON")->required();
  simulate->add_option("--out", o.out, "Event log to write")->required();
  add_format(simulate);

  auto* analyze = app.add_subcommand("analyze", "Accuracy, ITR, trust and significance tests for a study log");
  analyze->add_option("--log", o.log, "Study event log")->required();
  analyze->add_option("--model", o.model, "Model file")->required();
  analyze->add_option("--dataset", o.dataset, "Labeled TSV with the study documents")->required();
  analyze->add_option("--condition-filter", o.condition_filter, "Only these conditions")
      ->delimiter(',')
      ->check(CLI::IsMember({"no_highlights", "lime", "covar", "random"}));
  analyze->add_option("--max-time-s", o.max_time_s, "Drop annotations slower than this");
  add_format(analyze);

  auto* bench = app.add_subcommand("bench", "Per-instance wall-clock cost of each explainer");
  bench->add_option("--model", o.model, "Model file")->required();
  bench->add_option("--dataset", o.dataset, "Documents to explain")->required();
  bench->add_option("--repetitions", o.repetitions, "Repetitions per method");
  bench->add_option("--lime-samples", o.lime_samples, "Perturbations per LIME explanation");
  bench->add_option("--seed", o.seed, "Seed");
  add_format(bench);

  auto* stop = app.add_subcommand("stopwords", "Print the embedded English stopword list");
  stop->add_flag("--checksum", o.checksum_only, "Print only the list checksum");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_evaluate(o);
    if (*explain) return cmd_explain(o);
    if (*serve) return cmd_serve(o);
    if (*simulate) return cmd_simulate(o);
    if (*analyze) return cmd_analyze(o);
    if (*bench) return cmd_bench(o);
    if (*stop) return cmd_stopwords(o);
  } catch (const itr::Error& e) {
    std::cerr << "error (" << itr::errc_name(e.code()) << "): " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
