#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "itr/classifier.hpp"
#include "itr/corpus.hpp"
#include "itr/study.hpp"
#include "json.hpp"

// After Eigen (via study.hpp): <resolv.h> defines a `_res` macro.
#include "httplib.h"

namespace itr {

// HTTP front end for a set of studies. Each study's event log lives at
// <data_dir>/studies/<id>.ndjson and is replayed on startup.
//
//   POST /studies                    StudyConfig JSON -> {"study_id"}
//   GET  /studies/{id}/task?worker_id=W
//        200 {assignment_id, text, label_names, highlights:[{start,end}]}
//        410 {"status":"study_complete"}   409 {"status":"no_eligible_items"}
//   POST /studies/{id}/annotations   {assignment_id, worker_id, label_given, elapsed_ms}
//        200 {"status":"accepted"} or 4xx {"status":"rejected","reason":...}
//   GET  /studies/{id}/export        event log, application/x-ndjson
//   GET  /healthz
//
// Highlight offsets are Unicode code points; label_given is 1-based. The
// condition and the model prediction are never sent to clients.
class StudyService {
 public:
  explicit StudyService(std::string data_dir, Clock clock = system_clock_ms())
      : data_dir_(std::move(data_dir)), clock_(std::move(clock)) {
    std::filesystem::create_directories(studies_dir());
  }

  std::filesystem::path studies_dir() const { return std::filesystem::path(data_dir_) / "studies"; }

  // Replays every stored study log. Returns the number of studies loaded.
  std::size_t restore() {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& entry : std::filesystem::directory_iterator(studies_dir())) {
      if (entry.path().extension() != ".ndjson") continue;
      auto eng = StudyEngine::replay_file(entry.path().string(), clock_);
      bump_next_id(eng->id());
      studies_[eng->id()] = std::move(eng);
      ++n;
    }
    return n;
  }

  std::string create_study(const nlohmann::json& body) {
    auto cfg = study_config_from_json(body);
    if (cfg.dataset.empty() || cfg.model.empty()) fail(Errc::InvalidConfig, "study config needs dataset and model");
    auto clf = load_model_file(resolve(cfg.model));
    auto corpus = read_tsv_file(resolve(cfg.dataset), &clf.label_names());
    auto items = build_study_items(cfg, corpus, clf);
    if (items.empty()) fail(Errc::InvalidConfig, "no dataset item can be explained under the configured conditions");
    std::lock_guard lock(mu_);
    const std::string id = "study-" + std::to_string(next_id_++);
    const auto path = (studies_dir() / (id + ".ndjson")).string();
    studies_[id] = std::make_unique<StudyEngine>(id, cfg, clf.label_names(), std::move(items), clock_, path);
    return id;
  }

  StudyEngine* find(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = studies_.find(id);
    return it == studies_.end() ? nullptr : it->second.get();
  }

  // Workers per server. Each keep-alive client pins one for up to five
  // seconds, so the library default (a handful) starves concurrent annotators.
  static constexpr std::size_t kServerThreads = 64;

  void install(httplib::Server& srv) {
    srv.new_task_queue = [] { return new httplib::ThreadPool(kServerThreads); };
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send(res, 200, {{"status", "ok"}});
    });

    srv.Post("/studies", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        return send(res, 400, {{"status", "error"}, {"reason", "invalid_json"}, {"message", e.what()}});
      }
      try {
        auto id = create_study(body);
        send(res, 201, {{"study_id", id}});
      } catch (const Error& e) {
        send(res, 400, {{"status", "error"}, {"reason", std::string(errc_name(e.code()))}, {"message", e.what()}});
      }
    });

    srv.Get(R"(/studies/([^/]+)/task)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* eng = find(req.matches[1]);
      if (!eng) return send(res, 404, {{"status", "error"}, {"reason", "unknown_study"}});
      const auto worker = req.get_param_value("worker_id");
      if (worker.empty()) return send(res, 400, {{"status", "error"}, {"reason", "missing_worker_id"}});
      auto next = eng->next_assignment(worker);
      if (auto* ex = std::get_if<Exhausted>(&next)) {
        if (*ex == Exhausted::StudyComplete) return send(res, 410, {{"status", "study_complete"}});
        return send(res, 409, {{"status", "no_eligible_items"}});
      }
      const auto& a = std::get<Assignment>(next);
      const StudyItem* item = eng->find_item(a.doc_id);
      nlohmann::ordered_json j;
      j["assignment_id"] = a.assignment_id;
      j["text"] = item ? item->text : std::string{};
      j["label_names"] = eng->label_names();
      auto hl = nlohmann::ordered_json::array();
      for (const auto& s : a.highlights) hl.push_back({{"start", s.begin}, {"end", s.end}});
      j["highlights"] = std::move(hl);
      res.status = 200;
      res.set_content(j.dump(), "application/json");
    });

    srv.Post(R"(/studies/([^/]+)/annotations)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* eng = find(req.matches[1]);
      if (!eng) return send(res, 404, {{"status", "error"}, {"reason", "unknown_study"}});
      Submission s;
      try {
        auto j = nlohmann::json::parse(req.body);
        s.assignment_id = j.at("assignment_id").get<std::string>();
        s.worker_id = j.at("worker_id").get<std::string>();
        const auto label = j.at("label_given").get<long>();
        s.elapsed_ms = j.at("elapsed_ms").get<double>();
        if (label < 1) return reject(res, Errc::InvalidLabel, "label_given must be in 1..K");
        s.label_given = static_cast<std::size_t>(label - 1);
      } catch (const nlohmann::json::exception& e) {
        return send(res, 400, {{"status", "rejected"}, {"reason", "invalid_request"}, {"message", e.what()}});
      }
      auto out = eng->submit_annotation(s);
      if (out.accepted) return send(res, 200, {{"status", "accepted"}});
      reject(res, out.reason, out.message);
    });

    srv.Get(R"(/studies/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* eng = find(req.matches[1]);
      if (!eng) return send(res, 404, {{"status", "error"}, {"reason", "unknown_study"}});
      res.status = 200;
      res.set_content(eng->export_log(), "application/x-ndjson");
    });
  }

 private:
  static void send(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reject(httplib::Response& res, Errc reason, const std::string& message) {
    int status = 422;
    if (reason == Errc::UnknownAssignment) status = 404;
    if (reason == Errc::DuplicateSubmission) status = 409;
    if (reason == Errc::ExpiredAssignment) status = 410;
    send(res, status, {{"status", "rejected"}, {"reason", std::string(errc_name(reason))}, {"message", message}});
  }

  std::string resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? p : (std::filesystem::path(data_dir_) / path).string();
  }

  void bump_next_id(const std::string& id) {
    constexpr std::string_view prefix = "study-";
    if (id.rfind(prefix, 0) != 0) return;
    if (auto n = detail::parse_positive_int(std::string_view(id).substr(prefix.size()))) {
      next_id_ = std::max(next_id_, static_cast<std::size_t>(*n) + 1);
    }
  }

  std::string data_dir_;
  Clock clock_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<StudyEngine>> studies_;
  std::size_t next_id_ = 1;
};

}  // namespace itr
