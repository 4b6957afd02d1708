#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "itr/annotation.hpp"
#include "itr/classifier.hpp"
#include "itr/corpus.hpp"
#include "itr/error.hpp"
#include "itr/explain.hpp"
#include "json.hpp"

namespace itr {

inline constexpr int kLogSchemaVersion = 1;

struct StudyConfig {
  std::string dataset;  // path, informational once items are built
  std::string model;
  std::vector<Condition> conditions = {Condition::NoHighlights, Condition::Lime, Condition::Covar};
  std::size_t annotations_per_item = 9;
  std::uint64_t seed = 0;
  bool discard_duplicate_highlight_items = false;
  std::int64_t assignment_ttl_ms = 15 * 60 * 1000;
  std::size_t lime_samples = 2500;

  void validate() const {
    if (annotations_per_item < 1) fail(Errc::InvalidConfig, "annotations_per_item must be >= 1");
    if (conditions.empty()) fail(Errc::InvalidConfig, "at least one condition is required");
    std::set<Condition> uniq(conditions.begin(), conditions.end());
    if (uniq.size() != conditions.size()) fail(Errc::InvalidConfig, "conditions must be distinct");
    if (assignment_ttl_ms <= 0) fail(Errc::InvalidConfig, "assignment TTL must be positive");
  }
};

inline nlohmann::ordered_json to_json(const StudyConfig& c) {
  nlohmann::ordered_json j;
  j["dataset"] = c.dataset;
  j["model"] = c.model;
  auto conds = nlohmann::ordered_json::array();
  for (auto cond : c.conditions) conds.push_back(std::string(condition_name(cond)));
  j["conditions"] = std::move(conds);
  j["annotations_per_item"] = c.annotations_per_item;
  j["seed"] = c.seed;
  j["discard_duplicate_highlight_items"] = c.discard_duplicate_highlight_items;
  j["assignment_ttl_ms"] = c.assignment_ttl_ms;
  j["lime_samples"] = c.lime_samples;
  return j;
}

inline StudyConfig study_config_from_json(const nlohmann::json& j) {
  try {
    StudyConfig c;
    c.dataset = j.value("dataset", std::string{});
    c.model = j.value("model", std::string{});
    if (j.contains("conditions")) {
      c.conditions.clear();
      for (const auto& s : j.at("conditions")) c.conditions.push_back(parse_condition(s.get<std::string>()));
    }
    c.annotations_per_item = j.value("annotations_per_item", c.annotations_per_item);
    c.seed = j.value("seed", c.seed);
    c.discard_duplicate_highlight_items = j.value("discard_duplicate_highlight_items", false);
    c.assignment_ttl_ms = j.value("assignment_ttl_ms", c.assignment_ttl_ms);
    c.lime_samples = j.value("lime_samples", c.lime_samples);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::InvalidConfig, std::string("malformed study config: ") + e.what());
  }
}

// A document prepared for annotation: highlight spans (code points) per
// highlight condition, and conditions it must not be served under.
struct StudyItem {
  std::string doc_id;
  std::string text;
  std::map<Condition, std::vector<Span>> highlights;
  std::set<Condition> excluded;
};

struct Assignment {
  std::string assignment_id;
  std::string worker_id;
  std::string doc_id;
  Condition condition = Condition::NoHighlights;
  std::vector<Span> highlights;
  std::int64_t issued_at_ms = 0;
};

enum class Exhausted { StudyComplete, NoEligibleItems };
using NextAssignment = std::variant<Assignment, Exhausted>;

struct Submission {
  std::string assignment_id;
  std::string worker_id;
  std::size_t label_given = 0;  // zero-based
  double elapsed_ms = 0;
};

struct SubmitOutcome {
  bool accepted = false;
  Errc reason = Errc::UnknownAssignment;
  std::string message;
};

using Clock = std::function<std::int64_t()>;

inline Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

// A clock advanced by hand, shared by copies.
class ManualClock {
 public:
  explicit ManualClock(std::int64_t start_ms = 1'600'000'000'000) : now_(std::make_shared<std::atomic<std::int64_t>>(start_ms)) {}
  std::int64_t now() const { return now_->load(); }
  void advance(std::int64_t ms) { now_->fetch_add(ms); }
  Clock as_clock() const {
    return [p = now_] { return p->load(); };
  }

 private:
  std::shared_ptr<std::atomic<std::int64_t>> now_;
};

// Event-sourced study state. Every mutation is appended to the log (and the
// optional backing file) before state changes; state is a fold over the log.
// Allocation and append are serialized by one writer lock.
class StudyEngine {
 public:
  StudyEngine(std::string study_id, StudyConfig config, std::vector<std::string> label_names,
              std::vector<StudyItem> items, Clock clock = system_clock_ms(), std::string log_path = {})
      : id_(std::move(study_id)),
        config_(std::move(config)),
        label_names_(std::move(label_names)),
        items_(std::move(items)),
        clock_(std::move(clock)),
        log_path_(std::move(log_path)) {
    config_.validate();
    if (label_names_.size() < 2) fail(Errc::InvalidConfig, "a study needs at least two labels");
    index_items();
    open_log(/*truncate=*/true);
    append(header_json().dump());
  }

  // Rebuilds a study from its event log. A torn final line (no newline and
  // unparsable) is discarded, as left by a crash during append.
  static std::unique_ptr<StudyEngine> replay(std::istream& in, Clock clock = system_clock_ms(),
                                             std::string log_path = {}) {
    std::vector<std::string> lines;
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t start = 0;
    while (start < all.size()) {
      auto nl = all.find('\n', start);
      if (nl == std::string::npos) {
        auto tail = all.substr(start);
        if (nlohmann::json::accept(tail)) lines.push_back(tail);
        break;
      }
      if (nl > start) lines.push_back(all.substr(start, nl - start));
      start = nl + 1;
    }
    if (lines.empty()) fail(Errc::ParseError, "study log is empty (missing header)");
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(lines.front());
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::ParseError, std::string("bad study log header: ") + e.what());
    }
    if (header.value("type", "") != "study") fail(Errc::ParseError, "first log record is not a study header");
    if (header.value("schema", 0) != kLogSchemaVersion) fail(Errc::ParseError, "unsupported log schema version");

    std::unique_ptr<StudyEngine> eng(new StudyEngine());
    eng->clock_ = std::move(clock);
    eng->log_path_ = std::move(log_path);
    try {
      eng->id_ = header.at("study_id").get<std::string>();
      eng->config_ = study_config_from_json(header.at("config"));
      eng->label_names_ = header.at("label_names").get<std::vector<std::string>>();
      for (const auto& ji : header.at("items")) {
        StudyItem it;
        it.doc_id = ji.at("doc_id").get<std::string>();
        it.text = ji.at("text").get<std::string>();
        for (const auto& [cname, spans] : ji.at("highlights").items()) {
          auto& v = it.highlights[parse_condition(cname)];
          for (const auto& s : spans) v.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
        }
        for (const auto& c : ji.at("excluded")) it.excluded.insert(parse_condition(c.get<std::string>()));
        eng->items_.push_back(std::move(it));
      }
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::ParseError, std::string("bad study log header: ") + e.what());
    }
    eng->index_items();
    eng->lines_.push_back(eng->header_json().dump());

    for (std::size_t i = 1; i < lines.size(); ++i) {
      nlohmann::json ev;
      try {
        ev = nlohmann::json::parse(lines[i]);
        if (ev.value("schema", 0) != kLogSchemaVersion) fail(Errc::ParseError, "unsupported record schema");
        const auto type = ev.at("type").get<std::string>();
        if (type == "assignment") {
          Assignment a;
          a.assignment_id = ev.at("assignment_id").get<std::string>();
          a.worker_id = ev.at("worker_id").get<std::string>();
          a.doc_id = ev.at("doc_id").get<std::string>();
          a.condition = parse_condition(ev.at("condition").get<std::string>());
          a.issued_at_ms = ev.at("issued_at_ms").get<std::int64_t>();
          eng->apply_assignment(a, /*from_log=*/true);
        } else if (type == "annotation") {
          AnnotationRecord r;
          r.assignment_id = ev.at("assignment_id").get<std::string>();
          r.worker_id = ev.at("worker_id").get<std::string>();
          r.doc_id = ev.at("doc_id").get<std::string>();
          r.condition = parse_condition(ev.at("condition").get<std::string>());
          const auto lbl = ev.at("label_given").get<long>();
          if (lbl < 1) fail(Errc::ParseError, "label_given must be >= 1");
          r.label_given = static_cast<std::size_t>(lbl - 1);
          r.elapsed_ms = ev.at("elapsed_ms").get<double>();
          r.server_received_at_ms = ev.at("server_received_at_ms").get<std::int64_t>();
          eng->apply_annotation(r, /*from_log=*/true);
        } else {
          fail(Errc::ParseError, "unknown record type '" + type + "'");
        }
      } catch (const nlohmann::json::exception& e) {
        fail(Errc::ParseError, "bad study log record " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    if (!eng->log_path_.empty()) {
      eng->open_log(/*truncate=*/true);
      for (const auto& l : eng->lines_) eng->log_ << l << '\n';
      eng->log_.flush();
    }
    return eng;
  }

  static std::unique_ptr<StudyEngine> replay_file(const std::string& path, Clock clock = system_clock_ms(),
                                                  bool keep_appending = true) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::IoError, "cannot open study log '" + path + "'");
    return replay(in, std::move(clock), keep_appending ? path : std::string{});
  }

  const std::string& id() const { return id_; }
  const StudyConfig& config() const { return config_; }
  const std::vector<std::string>& label_names() const { return label_names_; }
  const std::vector<StudyItem>& items() const { return items_; }

  const StudyItem* find_item(const std::string& doc_id) const {
    auto it = item_index_.find(doc_id);
    return it == item_index_.end() ? nullptr : &items_[it->second];
  }

  NextAssignment next_assignment(const std::string& worker_id) {
    if (worker_id.empty()) fail(Errc::InvalidConfig, "worker_id must be non-empty");
    std::unique_lock lock(mu_);
    const auto now = clock_();
    if (complete_locked()) return Exhausted::StudyComplete;

    auto& seen = seen_[worker_id];
    seen.resize(items_.size(), 0);
    // Least-loaded eligible item, lowest index on ties.
    auto pick_item = [&](Condition c) -> std::optional<std::size_t> {
      std::optional<std::size_t> best;
      std::size_t best_load = 0;
      for (std::size_t i = 0; i < items_.size(); ++i) {
        if (completed_[i] >= config_.annotations_per_item || seen[i] ||
            (!items_[i].excluded.empty() && items_[i].excluded.count(c)))
          continue;
        const auto load = active_count(i, now);
        if (load >= config_.annotations_per_item) continue;
        if (!best || load < best_load) {
          best = i;
          best_load = load;
          if (load == 0) break;  // nothing can be less loaded
        }
      }
      return best;
    };

    // Condition stream: draw n depends only on (seed, n).
    std::seed_seq sseq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                       static_cast<std::uint32_t>(issued_), static_cast<std::uint32_t>(issued_ >> 32)};
    std::mt19937_64 rng(sseq);
    std::vector<Condition> pool = config_.conditions;
    std::optional<std::size_t> item;
    Condition cond = pool.front();
    while (!pool.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const auto ci = pick(rng);
      cond = pool[ci];
      if ((item = pick_item(cond))) break;
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(ci));
    }
    if (!item) return Exhausted::NoEligibleItems;

    Assignment a;
    a.assignment_id = make_assignment_id(issued_);
    a.worker_id = worker_id;
    a.doc_id = items_[*item].doc_id;
    a.condition = cond;
    a.issued_at_ms = now;
    apply_assignment(a, /*from_log=*/false);
    return assignments_.at(a.assignment_id).assignment;
  }

  SubmitOutcome submit_annotation(const Submission& s) {
    std::unique_lock lock(mu_);
    const auto now = clock_();
    auto reject = [](Errc e, std::string msg) { return SubmitOutcome{false, e, std::move(msg)}; };
    auto it = assignments_.find(s.assignment_id);
    if (it == assignments_.end() || it->second.assignment.worker_id != s.worker_id) {
      return reject(Errc::UnknownAssignment, "unknown assignment '" + s.assignment_id + "' for this worker");
    }
    auto& st = it->second;
    if (st.completed) return reject(Errc::DuplicateSubmission, "assignment already answered");
    if (now > st.assignment.issued_at_ms + config_.assignment_ttl_ms) {
      return reject(Errc::ExpiredAssignment, "assignment expired");
    }
    if (s.label_given >= label_names_.size()) return reject(Errc::InvalidLabel, "label outside 1..K");
    if (!(s.elapsed_ms > 0) || !std::isfinite(s.elapsed_ms)) {
      return reject(Errc::NonpositiveTime, "elapsed_ms must be positive");
    }
    AnnotationRecord r;
    r.assignment_id = s.assignment_id;
    r.worker_id = s.worker_id;
    r.doc_id = st.assignment.doc_id;
    r.condition = st.assignment.condition;
    r.label_given = s.label_given;
    r.elapsed_ms = s.elapsed_ms;
    r.server_received_at_ms = now;
    apply_annotation(r, /*from_log=*/false);
    return {true, Errc::UnknownAssignment, "accepted"};
  }

  // Complete event log, one JSON record per line.
  std::string export_log() const {
    std::shared_lock lock(mu_);
    std::string out;
    for (const auto& l : lines_) {
      out += l;
      out += '\n';
    }
    return out;
  }

  std::vector<AnnotationRecord> records() const {
    std::shared_lock lock(mu_);
    return records_;
  }

  // Snapshot of derived state, for comparing a live engine with a replay.
  struct Snapshot {
    std::map<std::string, std::size_t> completed_per_doc;
    std::set<std::string> pending;  // unexpired, unanswered assignment ids
    std::set<std::string> completed;
    std::set<std::pair<std::string, std::string>> worker_doc;  // issued (worker, doc)
    std::size_t issued = 0;
    bool operator==(const Snapshot&) const = default;
  };

  Snapshot snapshot() const {
    std::shared_lock lock(mu_);
    const auto now = clock_();
    Snapshot s;
    s.issued = issued_;
    for (std::size_t i = 0; i < items_.size(); ++i) s.completed_per_doc[items_[i].doc_id] = completed_[i];
    for (const auto& [id, st] : assignments_) {
      if (st.completed) {
        s.completed.insert(id);
      } else if (now <= st.assignment.issued_at_ms + config_.assignment_ttl_ms) {
        s.pending.insert(id);
      }
      s.worker_doc.emplace(st.assignment.worker_id, st.assignment.doc_id);
    }
    return s;
  }

  bool complete() const {
    std::shared_lock lock(mu_);
    return complete_locked();
  }

 private:
  struct AssignmentState {
    Assignment assignment;
    std::size_t item = 0;
    bool completed = false;
  };

  StudyEngine() = default;

  static std::string make_assignment_id(std::size_t n) {
    std::string digits = std::to_string(n + 1);
    return "a" + std::string(digits.size() < 8 ? 8 - digits.size() : 0, '0') + digits;
  }

  void index_items() {
    item_index_.clear();
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (!item_index_.emplace(items_[i].doc_id, i).second) {
        fail(Errc::InvalidConfig, "duplicate study item '" + items_[i].doc_id + "'");
      }
    }
    completed_.assign(items_.size(), 0);
    pending_.assign(items_.size(), {});
  }

  nlohmann::ordered_json header_json() const {
    nlohmann::ordered_json h;
    h["type"] = "study";
    h["schema"] = kLogSchemaVersion;
    h["study_id"] = id_;
    h["config"] = to_json(config_);
    h["label_names"] = label_names_;
    auto items = nlohmann::ordered_json::array();
    for (const auto& it : items_) {
      nlohmann::ordered_json ji;
      ji["doc_id"] = it.doc_id;
      ji["text"] = it.text;
      nlohmann::ordered_json hl = nlohmann::ordered_json::object();
      for (const auto& [c, spans] : it.highlights) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& s : spans) arr.push_back({s.begin, s.end});
        hl[std::string(condition_name(c))] = std::move(arr);
      }
      ji["highlights"] = std::move(hl);
      auto ex = nlohmann::ordered_json::array();
      for (auto c : it.excluded) ex.push_back(std::string(condition_name(c)));
      ji["excluded"] = std::move(ex);
      items.push_back(std::move(ji));
    }
    h["items"] = std::move(items);
    return h;
  }

  void open_log(bool truncate) {
    if (log_path_.empty()) return;
    log_.open(log_path_, std::ios::binary | (truncate ? std::ios::trunc : std::ios::app));
    if (!log_) fail(Errc::IoError, "cannot open study log '" + log_path_ + "' for writing");
  }

  void append(std::string line) {
    if (log_.is_open()) {
      log_ << line << '\n';
      log_.flush();
      if (!log_) fail(Errc::IoError, "failed appending to study log '" + log_path_ + "'");
    }
    lines_.push_back(std::move(line));
  }

  bool complete_locked() const {
    bool any = false;
    for (std::size_t i = 0; i < items_.size(); ++i) {
      bool servable = false;
      for (auto c : config_.conditions) servable |= !items_[i].excluded.count(c);
      if (!servable) continue;
      any = true;
      if (completed_[i] < config_.annotations_per_item) return false;
    }
    return any || items_.empty();
  }

  // Completed plus pending-and-unexpired assignments for an item.
  std::size_t active_count(std::size_t item, std::int64_t now) const {
    std::size_t n = completed_[item];
    for (const auto& id : pending_[item]) {
      if (now <= assignments_.at(id).assignment.issued_at_ms + config_.assignment_ttl_ms) ++n;
    }
    return n;
  }

  void apply_assignment(Assignment a, bool from_log) {
    auto ii = item_index_.find(a.doc_id);
    if (ii == item_index_.end()) fail(Errc::ParseError, "assignment for unknown document '" + a.doc_id + "'");
    if (assignments_.count(a.assignment_id)) fail(Errc::ParseError, "duplicate assignment '" + a.assignment_id + "'");
    auto& seen = seen_[a.worker_id];
    seen.resize(items_.size(), 0);
    if (seen[ii->second]) {
      fail(Errc::ParseError, "worker '" + a.worker_id + "' already received '" + a.doc_id + "'");
    }
    if (auto h = items_[ii->second].highlights.find(a.condition); h != items_[ii->second].highlights.end()) {
      a.highlights = h->second;
    }
    if (from_log) {
      lines_.push_back(assignment_line(a));
    } else {
      append(assignment_line(a));
    }
    seen[ii->second] = 1;
    auto id = a.assignment_id;
    pending_[ii->second].insert(id);
    assignments_.emplace(std::move(id), AssignmentState{std::move(a), ii->second, false});
    ++issued_;
  }

  static std::string assignment_line(const Assignment& a) {
    nlohmann::ordered_json ev;
    ev["type"] = "assignment";
    ev["schema"] = kLogSchemaVersion;
    ev["assignment_id"] = a.assignment_id;
    ev["worker_id"] = a.worker_id;
    ev["doc_id"] = a.doc_id;
    ev["condition"] = std::string(condition_name(a.condition));
    ev["issued_at_ms"] = a.issued_at_ms;
    return ev.dump();
  }

  static std::string annotation_line(const AnnotationRecord& r) {
    nlohmann::ordered_json ev;
    ev["type"] = "annotation";
    ev["schema"] = kLogSchemaVersion;
    ev["assignment_id"] = r.assignment_id;
    ev["worker_id"] = r.worker_id;
    ev["doc_id"] = r.doc_id;
    ev["condition"] = std::string(condition_name(r.condition));
    ev["label_given"] = r.label_given + 1;
    ev["elapsed_ms"] = r.elapsed_ms;
    ev["server_received_at_ms"] = r.server_received_at_ms;
    return ev.dump();
  }

  void apply_annotation(const AnnotationRecord& r, bool from_log) {
    auto it = assignments_.find(r.assignment_id);
    if (it == assignments_.end()) fail(Errc::ParseError, "annotation for unknown assignment '" + r.assignment_id + "'");
    auto& st = it->second;
    if (st.completed) fail(Errc::ParseError, "second annotation for '" + r.assignment_id + "'");
    if (st.assignment.worker_id != r.worker_id || st.assignment.doc_id != r.doc_id ||
        st.assignment.condition != r.condition) {
      fail(Errc::ParseError, "annotation '" + r.assignment_id + "' disagrees with its assignment");
    }
    if (r.label_given >= label_names_.size()) fail(Errc::ParseError, "label out of range in '" + r.assignment_id + "'");
    if (completed_[st.item] >= config_.annotations_per_item) {
      fail(Errc::ParseError, "document '" + r.doc_id + "' exceeds annotations_per_item");
    }
    if (from_log) {
      lines_.push_back(annotation_line(r));
    } else {
      append(annotation_line(r));
    }
    st.completed = true;
    pending_[st.item].erase(r.assignment_id);
    ++completed_[st.item];
    records_.push_back(r);
  }

  std::string id_;
  StudyConfig config_;
  std::vector<std::string> label_names_;
  std::vector<StudyItem> items_;
  Clock clock_;
  std::string log_path_;
  std::ofstream log_;

  mutable std::shared_mutex mu_;
  std::vector<std::string> lines_;
  std::unordered_map<std::string, std::size_t> item_index_;
  std::unordered_map<std::string, AssignmentState> assignments_;
  std::unordered_map<std::string, std::vector<char>> seen_;  // per worker, indexed by item
  std::vector<std::size_t> completed_;
  std::vector<std::set<std::string>> pending_;
  std::vector<AnnotationRecord> records_;
  std::size_t issued_ = 0;
};

// Annotation records from an exported log, skipping the header and
// assignment events.
inline std::vector<AnnotationRecord> read_annotation_records(std::istream& in) {
  return StudyEngine::replay(in, [] { return std::int64_t{0}; })->records();
}

// ---------------------------------------------------------------------------
// Building study items from a dataset and model.

struct ItemBuildReport {
  std::size_t dropped_too_few_tokens = 0;
  std::size_t excluded_for_duplicates = 0;
};

inline std::vector<StudyItem> build_study_items(const StudyConfig& cfg, const LabeledCorpus& corpus,
                                                const TextClassifier& clf, ItemBuildReport* report = nullptr) {
  ItemBuildReport rep;
  std::vector<StudyItem> items;
  std::set<Condition> wanted(cfg.conditions.begin(), cfg.conditions.end());
  std::vector<ImportanceVector> importances;
  if (wanted.count(Condition::Covar)) {
    importances = covar_importances_all(clf.featurizer.featurize_all(corpus.docs), clf.weights);
  }
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    const auto& d = corpus.docs[i];
    StudyItem it{d.id, d.text, {}, {}};
    bool ok = true;
    for (auto c : cfg.conditions) {
      if (c == Condition::NoHighlights) continue;
      try {
        Explanation e;
        if (c == Condition::Covar) {
          e = covar_explain(d, clf, importances);
        } else if (c == Condition::Lime) {
          LimeConfig lc;
          lc.n_samples = cfg.lime_samples;
          lc.seed = cfg.seed * 1000003ULL + i;
          e = lime_explain(d, clf, lc);
        } else {
          e = random_explain(d, cfg.seed * 2000003ULL + i);
        }
        auto& spans = it.highlights[c];
        for (const auto& h : e.highlights) spans.push_back(h.chars);
        std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
        if (cfg.discard_duplicate_highlight_items && e.had_duplicates) {
          it.excluded.insert(c);
          ++rep.excluded_for_duplicates;
        }
      } catch (const Error& e) {
        if (e.code() != Errc::TooFewTokens) throw;
        ok = false;
        break;
      }
    }
    if (!ok) {
      ++rep.dropped_too_few_tokens;
      continue;
    }
    items.push_back(std::move(it));
  }
  if (report) *report = rep;
  return items;
}

}  // namespace itr
