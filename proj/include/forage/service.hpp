#pragma once

// HTTP+JSON service over the engine. Routing lives in Service::handle so the
// endpoints can be exercised without a socket; serve() binds it to httplib.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "forage/catalog.hpp"
#include "forage/error.hpp"
#include "forage/features.hpp"
#include "forage/index.hpp"
#include "forage/scent.hpp"
#include "forage/session.hpp"

namespace forage {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> boards;
  double alpha = 0.7;
  std::size_t k = 10;
  ScentScope scope = ScentScope::global;
  std::uint64_t seed = 42;
  std::optional<std::string> stopwords;
  std::optional<std::string> log_path;
  int top_colors = 3;
  int top_keywords = 5;
  bool patch_scent = false;

  void validate() const {
    if (k < 1) throw Error("config: k must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("config: alpha must lie in [0,1]");
    if (port < 0 || port > 65535) throw Error("config: port out of range");
  }
};

inline ServiceConfig config_from_json(const nlohmann::json& j) {
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.boards = j.value("boards", c.boards);
    c.alpha = j.value("alpha", c.alpha);
    c.k = j.value("k", c.k);
    c.scope = scent_scope_from(j.value("scope", std::string(to_string(c.scope))));
    c.seed = j.value("seed", c.seed);
    if (j.contains("stopwords") && j["stopwords"].is_string()) c.stopwords = j["stopwords"].get<std::string>();
    if (j.contains("log") && j["log"].is_string()) c.log_path = j["log"].get<std::string>();
    c.top_colors = j.value("top_colors", c.top_colors);
    c.top_keywords = j.value("top_keywords", c.top_keywords);
    c.patch_scent = j.value("patch_scent", c.patch_scent);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ServiceConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed config: ") + e.what(), e.byte);
  }
  return config_from_json(j);
}

// Thrown when the configured boards do not load cleanly.
class StartupError : public Error {
public:
  StartupError(const std::string& what, ValidationReport report) : Error(what), report_(std::move(report)) {}
  const ValidationReport& report() const noexcept { return report_; }

private:
  ValidationReport report_;
};

inline nlohmann::json report_json(const ValidationReport& report) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& v : report) out.push_back({{"item", v.item_id}, {"rule", v.rule}, {"message", v.message}});
  return out;
}

inline nlohmann::json cues_json(const std::vector<Cue>& cues) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : cues) out.push_back({{"label", c.label}, {"source", std::string(to_string(c.source))}, {"weight", c.weight}});
  return out;
}

class Service {
public:
  struct Request {
    std::string method;
    std::string path;
    std::map<std::string, std::string> params;
    std::string body;
  };

  struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
  };

  using Clock = std::function<std::int64_t()>;

  explicit Service(ServiceConfig config, Clock clock = {}) : config_(std::move(config)), clock_(std::move(clock)) {
    config_.validate();
    init_common();
    Board merged{"catalog", {}};
    ValidationReport report;
    for (const auto& path : config_.boards) {
      Board b;
      try {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open board file '" + path + "'");
        BoardLoadOptions opts;
        opts.image_root = std::filesystem::path(path).parent_path();
        b = parse_board(in, opts);
      } catch (const Error& e) {
        throw StartupError(path + ": " + e.what(), {});
      }
      for (auto v : validate_catalog(b)) {
        v.message = path + ": " + v.message;
        report.push_back(std::move(v));
      }
      for (auto& item : b.items) merged.items.push_back(std::move(item));
    }
    for (auto& v : validate_catalog(merged))
      if (v.rule == "id-unique") report.push_back(std::move(v));
    if (!report.empty()) throw StartupError("board validation failed: " + describe(report.front()), report);
    install(std::move(merged));
    load_log();
  }

  // For callers that already hold a validated catalog.
  Service(Board catalog, ServiceConfig config, Clock clock = {})
      : config_(std::move(config)), clock_(std::move(clock)) {
    config_.validate();
    init_common();
    if (auto report = validate_catalog(catalog); !report.empty())
      throw StartupError("board validation failed: " + describe(report.front()), report);
    install(std::move(catalog));
    load_log();
  }

  const ServiceConfig& config() const { return config_; }

  Response handle(const Request& req) const {
    try {
      return route(req);
    } catch (const ParseError& e) {
      return error(400, e.what());
    } catch (const ValidationError& e) {
      return error(400, e.what());
    } catch (const Error& e) {
      return error(400, e.what());
    }
  }

  void mount(httplib::Server& server) const {
    auto adapt = [this](const httplib::Request& hr, httplib::Response& res) {
      Request req{hr.method, hr.path, {}, hr.body};
      for (const auto& [k, v] : hr.params) req.params[k] = v;
      if (hr.is_multipart_form_data()) {
        for (const char* field : {"board", "file"})
          if (hr.has_file(field)) {
            req.body = hr.get_file_value(field).content;
            break;
          }
        if (req.body.empty() && !hr.files.empty()) req.body = hr.files.begin()->second.content;
      }
      const auto out = handle(req);
      res.status = out.status;
      res.set_content(out.body, out.content_type);
    };
    server.Get(R"(/.*)", adapt);
    server.Post(R"(/.*)", adapt);
  }

  // Blocks until the server stops.
  bool serve(httplib::Server& server) const {
    mount(server);
    return server.listen(config_.host, config_.port);
  }

private:
  struct Snapshot {
    Board catalog;
    VectorIndex index;
  };

  struct SessionSlot {
    std::mutex mu;
    ForagingSession session;
  };

  void init_common() {
    if (!clock_)
      clock_ = [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();
      };
    if (config_.stopwords) stopwords_ = load_stopwords_file(*config_.stopwords);
    else stopwords_ = default_stopwords();
    forage_opts_.patch_scent = config_.patch_scent;
    forage_opts_.cue_options = cue_options();
  }

  CueOptions cue_options() const {
    CueOptions o;
    o.stopwords = &stopwords_;
    o.seed = config_.seed;
    return o;
  }

  void install(Board catalog) const {
    for (auto& item : catalog.items) item.cues = assemble_cues(item, config_.top_colors, config_.top_keywords, cue_options());
    auto snap = std::make_shared<Snapshot>();
    snap->index = build_index(catalog);
    snap->catalog = std::move(catalog);
    std::atomic_store(&snapshot_, std::shared_ptr<const Snapshot>(std::move(snap)));
  }

  std::shared_ptr<const Snapshot> snapshot() const { return std::atomic_load(&snapshot_); }

  void load_log() {
    if (!config_.log_path || !std::filesystem::exists(*config_.log_path)) return;
    std::ifstream in(*config_.log_path);
    log_ = read_log_jsonl(in);
  }

  void persist(const PreferenceEvent& e) const {
    if (!config_.log_path) return;
    std::ofstream out(*config_.log_path, std::ios::app);
    out << event_to_json(e).dump() << '\n';
  }

  static Response json(int status, const nlohmann::json& j) { return {status, j.dump(), "application/json"}; }
  static Response error(int status, const std::string& msg) { return json(status, {{"error", msg}}); }

  static std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path) {
      if (c == '/') {
        if (!cur.empty()) parts.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) parts.push_back(std::move(cur));
    return parts;
  }

  static std::optional<std::string> param(const Request& r, const std::string& key) {
    const auto it = r.params.find(key);
    if (it == r.params.end() || it->second.empty()) return std::nullopt;
    return it->second;
  }

  static std::size_t positive_param(const Request& r, const std::string& key, std::size_t fallback) {
    const auto v = param(r, key);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const long n = std::stol(*v, &used);
      if (used != v->size() || n < 1) throw Error("");
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw Error("parameter '" + key + "' must be a positive integer");
    }
  }

  static nlohmann::json parse_body(const Request& r) {
    try {
      auto j = nlohmann::json::parse(r.body.empty() ? std::string("{}") : r.body);
      if (!j.is_object()) throw Error("request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed request body: ") + e.what(), e.byte);
    }
  }

  std::shared_ptr<SessionSlot> find_session(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  Response route(const Request& req) const {
    const auto parts = split_path(req.path);
    const bool get = req.method == "GET", post = req.method == "POST";

    if (get && parts == std::vector<std::string>{"health"}) return health();
    if (post && parts == std::vector<std::string>{"boards"}) return ingest(req);
    if (get && parts == std::vector<std::string>{"search"}) return search(req);
    if (get && parts == std::vector<std::string>{"scent-report"}) return report(req);
    if (get && parts.size() == 2 && parts[0] == "items") return item(parts[1]);
    if (post && parts == std::vector<std::string>{"sessions"}) return create_session(req);
    if (parts.size() >= 2 && parts[0] == "sessions") {
      auto slot = find_session(parts[1]);
      if (!slot) return error(404, "unknown session '" + parts[1] + "'");
      if (get && parts.size() == 2) {
        std::lock_guard lock(slot->mu);
        return json(200, session_to_json(slot->session));
      }
      if (post && parts.size() == 3 && parts[2] == "preferences") return prefer(*slot, req);
      if (get && parts.size() == 3 && parts[2] == "recommendations") return recommendations(*slot, req);
    }
    return error(404, "no route for " + req.method + " " + req.path);
  }

  Response health() const {
    const auto snap = snapshot();
    std::size_t events;
    {
      std::lock_guard lock(log_mu_);
      events = log_.size();
    }
    return json(200, {{"status", "ok"},
                      {"items", snap->catalog.items.size()},
                      {"indexed", snap->index.size()},
                      {"dim", snap->index.dim()},
                      {"events", events}});
  }

  Response ingest(const Request& req) const {
    Board board;
    try {
      std::istringstream in(req.body);
      board = parse_board(in);
    } catch (const ParseError& e) {
      return json(400, {{"ok", false}, {"error", e.what()}, {"offset", e.offset()}, {"violations", nlohmann::json::array()}});
    }
    std::lock_guard lock(ingest_mu_);
    const auto snap = snapshot();
    auto report = validate_catalog(board);
    for (const auto& item : board.items)
      if (snap->catalog.find(item.id))
        report.push_back({item.id, "id-unique", "item id '" + item.id + "' already in the catalog"});
    Board merged = snap->catalog;
    for (const auto& item : board.items) merged.items.push_back(item);
    if (report.empty()) {
      try {
        build_index(merged);
      } catch (const ValidationError& e) {
        report.push_back({e.subject(), "embedding-dim", e.what()});
      }
    }
    const bool ok = report.empty();
    if (ok) install(std::move(merged));
    return json(ok ? 200 : 422, {{"ok", ok},
                                 {"board", board.name},
                                 {"items", board.items.size()},
                                 {"ingested", ok},
                                 {"violations", report_json(report)}});
  }

  Response search(const Request& req) const {
    const auto q = param(req, "q");
    if (!q) return error(400, "missing query parameter 'q'");
    const auto k = positive_param(req, "k", config_.k);
    const auto snap = snapshot();
    nlohmann::json results = nlohmann::json::array();
    for (const auto& e : match_query(snap->catalog, *q, k)) {
      const auto* item = snap->catalog.find(e.id);
      results.push_back({{"id", e.id}, {"score", e.score}, {"title", item ? item->title : ""}});
    }
    return json(200, {{"query", *q}, {"k", k}, {"results", std::move(results)}});
  }

  Response report(const Request& req) const {
    const auto scope = param(req, "scope") ? scent_scope_from(*param(req, "scope")) : config_.scope;
    const auto top = positive_param(req, "top", 5);
    std::vector<std::string> categories;
    if (auto c = param(req, "category")) categories.push_back(*c);
    ScentReport r;
    {
      std::lock_guard lock(log_mu_);
      r = scent_report(log_, categories, top, scope);
    }
    if (param(req, "format") == std::optional<std::string>("text")) return {200, render_report_table(r), "text/plain"};
    return json(200, report_to_json(r));
  }

  Response item(const std::string& id) const {
    const auto snap = snapshot();
    const auto* it = snap->catalog.find(id);
    if (!it) return error(404, "unknown item '" + id + "'");
    ScentScores scores;
    {
      std::lock_guard lock(log_mu_);
      scores = cue_scores(log_);
    }
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& cl : it->content_labels) labels.push_back({{"label", cl.label}, {"confidence", cl.confidence}});
    return json(200, {{"id", it->id},
                      {"board", it->board},
                      {"category", it->category},
                      {"title", it->title},
                      {"description", it->description},
                      {"content_labels", std::move(labels)},
                      {"indexable", it->indexable()},
                      {"cues", cues_json(it->cues)},
                      {"image_scent", scent_of_image(*it, scores)}});
  }

  std::int64_t now_for(const ForagingSession& s) const {
    const auto t = clock_();
    return s.history.empty() ? t : std::max(t, s.history.back().timestamp);
  }

  Response create_session(const Request& req) const {
    const auto body = parse_body(req);
    const auto query = body.value("query", std::string());
    if (query.empty()) return error(400, "session query is empty");
    const auto user = body.value("user", std::string("anonymous"));
    const auto k = body.value("k", config_.k);
    const auto alpha = body.value("alpha", config_.alpha);
    const auto id = "s" + std::to_string(next_session_.fetch_add(1) + 1);
    auto slot = std::make_shared<SessionSlot>();
    slot->session = start_session(id, user, query, snapshot()->catalog, k, alpha, clock_());
    auto body_out = session_to_json(slot->session);
    {
      std::unique_lock lock(sessions_mu_);
      sessions_.emplace(id, std::move(slot));
    }
    return json(201, body_out);
  }

  Response prefer(SessionSlot& slot, const Request& req) const {
    const auto body = parse_body(req);
    const auto cue = body.value("cue_label", std::string());
    if (cue.empty()) return error(400, "cue_label is empty");
    const auto snap = snapshot();
    std::lock_guard lock(slot.mu);
    std::optional<PreferenceEvent> event;
    {
      std::lock_guard log_lock(log_mu_);
      event = forage_step(slot.session, cue, snap->catalog, snap->index, log_, now_for(slot.session), forage_opts_);
    }
    if (event) persist(*event);
    auto out = session_to_json(slot.session);
    if (!event) out["warning"] = "cue '" + cue + "' matches no catalog item";
    return json(200, out);
  }

  Response recommendations(SessionSlot& slot, const Request& req) const {
    const auto snap = snapshot();
    ScentScores scores;
    {
      std::lock_guard lock(log_mu_);
      scores = cue_scores(log_);
    }
    std::lock_guard lock(slot.mu);
    const auto k = positive_param(req, "k", slot.session.k);
    nlohmann::json recs = nlohmann::json::array();
    for (std::size_t i = 0; i < slot.session.current_patch.size() && i < k; ++i) {
      const auto& e = slot.session.current_patch[i];
      const auto* it = snap->catalog.find(e.id);
      recs.push_back({{"id", e.id},
                      {"score", e.score},
                      {"similarity", e.similarity},
                      {"title", it ? it->title : ""},
                      {"cues", it ? cues_json(it->cues) : nlohmann::json::array()},
                      {"image_scent", it ? scent_of_image(*it, scores) : 0.0}});
    }
    return json(200, {{"session", slot.session.id}, {"recommendations", std::move(recs)}});
  }

  ServiceConfig config_;
  Clock clock_;
  StopwordSet stopwords_;
  ForageOptions forage_opts_;
  mutable std::shared_ptr<const Snapshot> snapshot_;
  mutable std::mutex ingest_mu_;
  mutable std::mutex log_mu_;
  mutable PreferenceLog log_;
  mutable std::shared_mutex sessions_mu_;
  mutable std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
  mutable std::atomic<std::uint64_t> next_session_{0};
};

}  // namespace forage
