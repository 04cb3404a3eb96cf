#pragma once

// Foraging sessions: the result page as the current patch, preference-driven
// re-retrieval, scent-aware ranking, diet and access-cost accounting, image
// patch decomposition and replayable transcripts.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "forage/catalog.hpp"
#include "forage/error.hpp"
#include "forage/features.hpp"
#include "forage/index.hpp"
#include "forage/scent.hpp"

namespace forage {

struct PatchEntry {
  std::string id;
  double score = 0.0;
  double similarity = 0.0;
  friend bool operator==(const PatchEntry&, const PatchEntry&) = default;
};

using Patch = std::vector<PatchEntry>;

inline bool ranks_before(const PatchEntry& a, const PatchEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

// Sorted by score, then similarity, descending; then id ascending.
inline bool is_valid_patch(const Patch& patch) {
  for (std::size_t i = 1; i < patch.size(); ++i)
    if (!ranks_before(patch[i - 1], patch[i])) return false;
  return true;
}

struct Diet {
  std::vector<std::string> consumed_cues;  // multiset, in consumption order
  std::set<std::string> viewed_items;
};

struct AccessCost {
  std::int64_t steps = 0;
  std::int64_t retrievals = 0;
  std::int64_t elapsed_ms = 0;
  friend bool operator==(const AccessCost&, const AccessCost&) = default;
};

struct HistoryEntry {
  std::string action;  // "start" or "select"
  std::string value;   // query or cue label
  std::int64_t timestamp = 0;
};

struct ForagingSession {
  std::string id;
  std::string user;
  std::string query;
  std::size_t k = 10;
  double alpha = 0.7;
  std::int64_t started_at = 0;
  Patch current_patch;
  std::vector<HistoryEntry> history;
  Diet diet;
  AccessCost cost;
  bool empty_patch = false;   // start query matched nothing
  bool unknown_cue = false;   // last selection matched no catalog item
};

struct ForageOptions {
  ImageScentRule scent_rule = ImageScentRule::mean;
  // Fold color cues of each image's grid patches into its scent.
  bool patch_scent = false;
  int patch_rows = 3;
  int patch_cols = 3;
  CueOptions cue_options;
};

// ---------------------------------------------------------------------------
// Ranking

inline double combined_score(double similarity, double image_scent, double alpha) {
  return alpha * ((similarity + 1.0) / 2.0) + (1.0 - alpha) * (image_scent / 10.0);
}

inline Patch rank_results(std::span<const Neighbor> candidates,
                          const std::function<double(std::string_view)>& image_scent, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0,1]");
  Patch out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (!(c.similarity >= -1.0 && c.similarity <= 1.0))
      throw Error("similarity of '" + c.id + "' outside [-1,1]");
    out.push_back({c.id, combined_score(c.similarity, image_scent(c.id), alpha), c.similarity});
  }
  std::sort(out.begin(), out.end(), [](const PatchEntry& a, const PatchEntry& b) { return ranks_before(a, b); });
  return out;
}

// ---------------------------------------------------------------------------
// Image patches

struct Region {
  int x = 0, y = 0, w = 0, h = 0;
  long area() const { return static_cast<long>(w) * h; }
  friend bool operator==(const Region&, const Region&) = default;
};

struct ImagePatch {
  std::string parent;
  int index = 1;  // 1..rows*cols, row-major
  Region region;
  std::vector<Cue> patch_cues;
};

// rows x cols grid; the last row and column absorb remainders.
inline std::vector<ImagePatch> decompose_patches(const ImageItem& item, int rows, int cols,
                                                 const CueOptions& opts = {}) {
  if (!item.pixels || item.pixels->empty()) throw Error("item '" + item.id + "' has no pixels to decompose");
  if (rows < 1 || cols < 1) throw Error("patch grid needs rows, cols >= 1");
  const auto& raster = *item.pixels;
  if (rows > raster.height || cols > raster.width)
    throw Error("patch grid " + std::to_string(rows) + "x" + std::to_string(cols) + " is finer than the raster");
  const int bw = raster.width / cols, bh = raster.height / rows;

  std::vector<ImagePatch> out;
  std::vector<Rgb> region_pixels;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Region reg{c * bw, r * bh, c == cols - 1 ? raster.width - c * bw : bw, r == rows - 1 ? raster.height - r * bh : bh};
      region_pixels.clear();
      for (int y = reg.y; y < reg.y + reg.h; ++y)
        for (int x = reg.x; x < reg.x + reg.w; ++x) region_pixels.push_back(raster.at(x, y));
      std::vector<Cue> cues;
      const auto km = kmeans_colors(region_pixels, opts.color_clusters, opts.seed, opts.max_iters);
      for (const auto& a : palette_assignments(km.clusters)) cues.push_back({a.palette_label, CueSource::color, a.proportion});
      out.push_back({item.id, r * cols + c + 1, reg, normalize_cues(std::move(cues))});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Session operations

namespace detail {

inline std::set<std::string> item_tokens(const ImageItem& item) {
  std::set<std::string> toks;
  for (const auto& c : item.cues) {
    toks.insert(c.label);
    for (auto& t : tokenize(c.label)) toks.insert(std::move(t));
  }
  for (auto& t : tokenize(item.title)) toks.insert(std::move(t));
  return toks;
}

inline bool carries_cue(const ImageItem& item, std::string_view cue) {
  return std::any_of(item.cues.begin(), item.cues.end(), [&](const Cue& c) { return c.label == cue; });
}

inline double image_scent_of(const ImageItem& item, const ScentScores& scores, const ForageOptions& opts) {
  if (!opts.patch_scent || !item.pixels || item.pixels->empty() || item.pixels->width < opts.patch_cols ||
      item.pixels->height < opts.patch_rows)
    return scent_of_image(item, scores, opts.scent_rule);
  ImageItem augmented = item;
  for (const auto& p : decompose_patches(item, opts.patch_rows, opts.patch_cols, opts.cue_options))
    augmented.cues.insert(augmented.cues.end(), p.patch_cues.begin(), p.patch_cues.end());
  return scent_of_image(augmented, scores, opts.scent_rule);
}

inline void advance_clock(ForagingSession& s, std::int64_t ts) {
  if (!s.history.empty() && ts < s.history.back().timestamp)
    throw ValidationError("session '" + s.id + "': action timestamp goes backwards", s.id);
  s.cost.elapsed_ms = std::max(s.cost.elapsed_ms, ts - s.started_at);
}

}  // namespace detail

// Items whose cue labels or title tokens match query tokens exactly, ranked by
// the fraction of query tokens matched, then id.
inline Patch match_query(const Board& catalog, std::string_view query, std::size_t k) {
  auto qt = tokenize(query);
  std::sort(qt.begin(), qt.end());
  qt.erase(std::unique(qt.begin(), qt.end()), qt.end());
  Patch patch;
  if (qt.empty()) return patch;
  for (const auto& item : catalog.items) {
    const auto toks = detail::item_tokens(item);
    const auto hits = std::count_if(qt.begin(), qt.end(), [&](const std::string& t) { return toks.contains(t); });
    if (hits == 0) continue;
    const double frac = static_cast<double>(hits) / static_cast<double>(qt.size());
    patch.push_back({item.id, frac, frac});
  }
  std::sort(patch.begin(), patch.end(), [](const PatchEntry& a, const PatchEntry& b) { return ranks_before(a, b); });
  if (patch.size() > k) patch.resize(k);
  return patch;
}

inline ForagingSession start_session(std::string id, std::string user, std::string query, const Board& catalog,
                                     std::size_t k, double alpha, std::int64_t timestamp = 0) {
  if (query.empty()) throw Error("session query is empty");
  if (k == 0) throw Error("session needs k >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0,1]");
  ForagingSession s;
  s.id = std::move(id);
  s.user = std::move(user);
  s.query = std::move(query);
  s.k = k;
  s.alpha = alpha;
  s.started_at = timestamp;
  s.current_patch = match_query(catalog, s.query, k);
  s.empty_patch = s.current_patch.empty();
  for (const auto& e : s.current_patch) s.diet.viewed_items.insert(e.id);
  s.history.push_back({"start", s.query, timestamp});
  s.cost = {1, 1, 0};
  return s;
}

// Re-retrieval after the user picks a cue. Anchors are the current patch items
// carrying the cue (all carriers when none are on the page). The candidate pool
// is the anchors' neighbors plus every carrier; each candidate's similarity is
// its best cosine to an anchor (0 without an embedding). Returns the emitted
// select event, or nothing when the cue is unknown.
inline std::optional<PreferenceEvent> apply_preference(ForagingSession& s, std::string_view cue_label,
                                                       const Board& catalog, const VectorIndex& index,
                                                       const ScentScores& scores, std::int64_t timestamp,
                                                       PreferenceLog* log = nullptr, const ForageOptions& opts = {}) {
  const std::string cue = lowercase(cue_label);
  detail::advance_clock(s, timestamp);
  s.history.push_back({"select", cue, timestamp});
  ++s.cost.steps;

  std::vector<const ImageItem*> carriers;
  for (const auto& item : catalog.items)
    if (detail::carries_cue(item, cue)) carriers.push_back(&item);
  if (cue.empty() || carriers.empty()) {
    s.unknown_cue = true;
    return std::nullopt;
  }
  s.unknown_cue = false;

  std::vector<std::string> anchors;
  for (const auto& e : s.current_patch) {
    const auto* item = catalog.find(e.id);
    if (item && detail::carries_cue(*item, cue)) anchors.push_back(e.id);
  }
  if (anchors.empty())
    for (const auto* c : carriers) anchors.push_back(c->id);

  std::set<std::string> pool;
  for (const auto* c : carriers) pool.insert(c->id);
  for (const auto& a : anchors)
    if (index.find(a))
      for (const auto& n : index.similar_items(a, s.k)) pool.insert(n.id);

  std::vector<Neighbor> candidates;
  for (const auto& id : pool) {
    double best = 0.0;
    bool any = false;
    if (index.find(id))
      for (const auto& a : anchors)
        if (index.find(a)) {
          const double sim = index.similarity(id, a);
          best = any ? std::max(best, sim) : sim;
          any = true;
        }
    candidates.push_back({id, any ? best : 0.0});
  }

  auto scent = [&](std::string_view id) {
    const auto* item = catalog.find(id);
    return item ? detail::image_scent_of(*item, scores, opts) : 0.0;
  };
  auto ranked = rank_results(candidates, scent, s.alpha);
  if (ranked.size() > s.k) ranked.resize(s.k);
  s.current_patch = std::move(ranked);
  s.empty_patch = s.current_patch.empty();
  for (const auto& e : s.current_patch) s.diet.viewed_items.insert(e.id);
  s.diet.consumed_cues.push_back(cue);
  ++s.cost.retrievals;

  PreferenceEvent event{s.user, s.id, cue, std::nullopt, timestamp, PreferenceAction::select};
  for (const auto& e : s.current_patch) {
    const auto* item = catalog.find(e.id);
    if (item && detail::carries_cue(*item, cue)) {
      event.category = item->category;
      break;
    }
  }
  if (log) log->append(event);
  return event;
}

// One loop step with scent read from the live log; the emitted event is
// appended to that log.
inline std::optional<PreferenceEvent> forage_step(ForagingSession& s, std::string_view cue_label,
                                                  const Board& catalog, const VectorIndex& index, PreferenceLog& log,
                                                  std::int64_t timestamp, const ForageOptions& opts = {}) {
  return apply_preference(s, cue_label, catalog, index, cue_scores(log), timestamp, &log, opts);
}

struct SessionMetrics {
  std::size_t distinct_cues = 0;
  std::size_t consumption_events = 0;
  std::size_t items_viewed = 0;
  AccessCost cost;
};

inline SessionMetrics session_metrics(const ForagingSession& s) {
  const std::set<std::string> distinct(s.diet.consumed_cues.begin(), s.diet.consumed_cues.end());
  return {distinct.size(), s.diet.consumed_cues.size(), s.diet.viewed_items.size(), s.cost};
}

// ---------------------------------------------------------------------------
// JSON views and transcripts

inline nlohmann::json patch_to_json(const Patch& patch) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : patch) out.push_back({{"id", e.id}, {"score", e.score}, {"similarity", e.similarity}});
  return out;
}

inline nlohmann::json session_to_json(const ForagingSession& s) {
  const auto m = session_metrics(s);
  return {{"id", s.id},
          {"user", s.user},
          {"query", s.query},
          {"k", s.k},
          {"alpha", s.alpha},
          {"started_at", s.started_at},
          {"patch", patch_to_json(s.current_patch)},
          {"diet",
           {{"consumed_cues", s.diet.consumed_cues},
            {"viewed_items", s.diet.viewed_items},
            {"distinct_cues", m.distinct_cues},
            {"consumption_events", m.consumption_events},
            {"items_viewed", m.items_viewed}}},
          {"cost", {{"steps", s.cost.steps}, {"retrievals", s.cost.retrievals}, {"elapsed_ms", s.cost.elapsed_ms}}},
          {"flags", {{"empty_patch", s.empty_patch}, {"unknown_cue", s.unknown_cue}}}};
}

inline void export_transcript(std::ostream& out, const ForagingSession& s) {
  for (const auto& h : s.history) {
    nlohmann::json j{{"action", h.action}, {"timestamp", h.timestamp}};
    if (h.action == "start") {
      j["session"] = s.id;
      j["user"] = s.user;
      j["query"] = h.value;
      j["k"] = s.k;
      j["alpha"] = s.alpha;
    } else {
      j["cue_label"] = h.value;
    }
    out << j.dump() << '\n';
  }
}

struct ReplayResult {
  ForagingSession session;
  std::vector<Patch> patches;  // one per action, starting with the initial page
};

// Re-runs a transcript against `log`, which should hold what the original run
// started from; events the replay emits are appended to it.
inline ReplayResult replay_transcript(std::istream& in, const Board& catalog, const VectorIndex& index,
                                      PreferenceLog& log, const ForageOptions& opts = {}) {
  ReplayResult out;
  std::string line;
  bool started = false;
  std::size_t line_no = 0, offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("malformed transcript line " + std::to_string(line_no), start);
    }
    const auto action = j.value("action", std::string());
    const auto ts = j.value("timestamp", std::int64_t{0});
    if (action == "start") {
      if (started) throw ValidationError("transcript starts twice");
      out.session = start_session(j.value("session", std::string("replay")), j.value("user", std::string()),
                                  j.value("query", std::string()), catalog, j.value("k", std::size_t{10}),
                                  j.value("alpha", 0.7), ts);
      started = true;
    } else if (action == "select") {
      if (!started) throw ValidationError("transcript selects before starting");
      forage_step(out.session, j.value("cue_label", std::string()), catalog, index, log, ts, opts);
    } else {
      throw ValidationError("unknown transcript action '" + action + "' on line " + std::to_string(line_no));
    }
    out.patches.push_back(out.session.current_patch);
  }
  if (!started) throw ValidationError("empty transcript");
  return out;
}

}  // namespace forage
