#pragma once

// Information scent: preference events, per-cue frequencies, the 1-10 scent
// scale, ranked scent reports and image-level scent.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "forage/catalog.hpp"
#include "forage/error.hpp"

namespace forage {

enum class PreferenceAction { select, hover, click_image };

inline std::string_view to_string(PreferenceAction a) {
  switch (a) {
    case PreferenceAction::select: return "select";
    case PreferenceAction::hover: return "hover";
    case PreferenceAction::click_image: return "click_image";
  }
  return "select";
}

inline PreferenceAction preference_action_from(std::string_view s) {
  if (s == "select") return PreferenceAction::select;
  if (s == "hover") return PreferenceAction::hover;
  if (s == "click_image") return PreferenceAction::click_image;
  throw ValidationError("unknown preference action '" + std::string(s) + "'");
}

struct PreferenceEvent {
  std::string user;
  std::string session;
  std::string cue_label;
  std::optional<std::string> category;
  std::int64_t timestamp = 0;  // ms
  PreferenceAction action = PreferenceAction::select;
  friend bool operator==(const PreferenceEvent&, const PreferenceEvent&) = default;
};

// Append-only. Timestamps may not go backwards within one session.
class PreferenceLog {
public:
  void append(PreferenceEvent event) {
    if (event.cue_label.empty()) throw ValidationError("preference event has an empty cue label");
    auto it = last_ts_.find(event.session);
    if (it != last_ts_.end() && event.timestamp < it->second)
      throw ValidationError("timestamp regression in session '" + event.session + "': " +
                                std::to_string(event.timestamp) + " < " + std::to_string(it->second),
                            event.session);
    last_ts_[event.session] = event.timestamp;
    events_.push_back(std::move(event));
  }

  std::span<const PreferenceEvent> events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

private:
  std::vector<PreferenceEvent> events_;
  std::map<std::string, std::int64_t> last_ts_;
};

inline PreferenceLog& record_preference(PreferenceLog& log, PreferenceEvent event) {
  log.append(std::move(event));
  return log;
}

using ActionSet = std::set<PreferenceAction>;

inline const ActionSet& default_counted_actions() {
  static const ActionSet s{PreferenceAction::select};
  return s;
}

struct EventFilter {
  std::optional<std::string> category;
  std::optional<std::string> user;
  ActionSet actions = default_counted_actions();
};

using FrequencyMap = std::map<std::string, long>;

inline FrequencyMap frequencies(const PreferenceLog& log, const EventFilter& filter = {}) {
  FrequencyMap out;
  for (const auto& e : log.events()) {
    if (!filter.actions.contains(e.action)) continue;
    if (filter.category && e.category != filter.category) continue;
    if (filter.user && e.user != *filter.user) continue;
    ++out[e.cue_label];
  }
  return out;
}

struct ScentScore {
  std::string cue_label;
  long raw_frequency = 0;
  int scaled = 1;
  friend bool operator==(const ScentScore&, const ScentScore&) = default;
};

using ScentScores = std::map<std::string, ScentScore>;

// clamp(round(10 * f / scope_max), 1, 10), rounding halves up. Integer
// arithmetic keeps the result exact.
inline int scale_frequency(long f, long scope_max) {
  const long rounded = (20 * f + scope_max) / (2 * scope_max);
  return static_cast<int>(std::clamp(rounded, 1L, 10L));
}

inline ScentScores scale_scent(const FrequencyMap& freqs, long scope_max) {
  if (freqs.empty()) throw Error("scale_scent: no frequencies");
  long observed = 0;
  for (const auto& [_, f] : freqs) observed = std::max(observed, f);
  if (scope_max <= 0 || scope_max < observed)
    throw Error("scale_scent: scope max " + std::to_string(scope_max) + " below observed max " + std::to_string(observed));
  ScentScores out;
  for (const auto& [label, f] : freqs) out[label] = {label, f, scale_frequency(f, scope_max)};
  return out;
}

// Scores over the whole log, scaled against its own maximum. Used to rank
// search results.
inline ScentScores cue_scores(const PreferenceLog& log, const ActionSet& counted = default_counted_actions()) {
  EventFilter filter;
  filter.actions = counted;
  const auto freqs = frequencies(log, filter);
  if (freqs.empty()) return {};
  long max = 0;
  for (const auto& [_, f] : freqs) max = std::max(max, f);
  return scale_scent(freqs, max);
}

enum class ScentScope { global, per_category };

inline std::string_view to_string(ScentScope s) { return s == ScentScope::global ? "global" : "per_category"; }

inline ScentScope scent_scope_from(std::string_view s) {
  if (s == "global") return ScentScope::global;
  if (s == "per_category" || s == "per-category") return ScentScope::per_category;
  throw Error("unknown scent scope '" + std::string(s) + "'");
}

// Category name selecting every event regardless of its category.
inline constexpr std::string_view kAllCategories = "*";

struct ScentReport {
  struct Category {
    std::string name;
    std::vector<ScentScore> rows;  // R_1..R_n
    bool empty = false;
  };
  ScentScope scope = ScentScope::global;
  std::size_t top_n = 0;
  std::vector<Category> categories;

  // Set when a requested category had no counted events, or nothing was requested at all.
  bool flagged() const {
    return categories.empty() || std::any_of(categories.begin(), categories.end(), [](const auto& c) { return c.empty; });
  }
};

// Categories named in the log, ascending; kAllCategories when no event has one.
inline std::vector<std::string> log_categories(const PreferenceLog& log) {
  std::set<std::string> names;
  for (const auto& e : log.events())
    if (e.category) names.insert(*e.category);
  if (names.empty() && !log.empty()) return {std::string(kAllCategories)};
  return {names.begin(), names.end()};
}

inline ScentReport scent_report(const PreferenceLog& log, std::vector<std::string> categories, std::size_t top_n,
                                ScentScope scope, const ActionSet& counted = default_counted_actions()) {
  if (top_n == 0) throw Error("scent_report: top_n must be positive");
  if (categories.empty()) categories = log_categories(log);

  auto category_freqs = [&](const std::string& name) {
    EventFilter filter;
    filter.actions = counted;
    if (name != kAllCategories) filter.category = name;
    return frequencies(log, filter);
  };
  // The global maximum spans every category in the log, not only the requested
  // ones, so a category's scores do not depend on what else was asked for.
  long global_max = 0;
  for (const auto& name : log_categories(log))
    for (const auto& [_, f] : category_freqs(name)) global_max = std::max(global_max, f);
  std::vector<FrequencyMap> freqs;
  for (const auto& name : categories) {
    freqs.push_back(category_freqs(name));
    for (const auto& [_, f] : freqs.back()) global_max = std::max(global_max, f);
  }

  ScentReport report;
  report.scope = scope;
  report.top_n = top_n;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    ScentReport::Category cat{categories[i], {}, freqs[i].empty()};
    if (!cat.empty) {
      long scope_max = global_max;
      if (scope == ScentScope::per_category) {
        scope_max = 0;
        for (const auto& [_, f] : freqs[i]) scope_max = std::max(scope_max, f);
      }
      for (auto& [_, s] : scale_scent(freqs[i], scope_max)) cat.rows.push_back(std::move(s));
      std::stable_sort(cat.rows.begin(), cat.rows.end(),
                       [](const ScentScore& a, const ScentScore& b) { return a.raw_frequency > b.raw_frequency; });
      if (cat.rows.size() > top_n) cat.rows.resize(top_n);
    }
    report.categories.push_back(std::move(cat));
  }
  return report;
}

enum class ImageScentRule { mean, max, sum };

// Aggregates the scaled scores of an item's distinct cue labels; labels
// without a score count as 0.
inline double scent_of_image(const ImageItem& item, const ScentScores& scores,
                             ImageScentRule rule = ImageScentRule::mean) {
  std::set<std::string_view> labels;
  for (const auto& c : item.cues) labels.insert(c.label);
  if (labels.empty()) return 0.0;
  double sum = 0.0, max = 0.0;
  for (auto label : labels) {
    const auto it = scores.find(std::string(label));
    const double s = it == scores.end() ? 0.0 : it->second.scaled;
    sum += s;
    max = std::max(max, s);
  }
  switch (rule) {
    case ImageScentRule::mean: return sum / static_cast<double>(labels.size());
    case ImageScentRule::max: return max;
    case ImageScentRule::sum: return sum;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Persistence and rendering

inline nlohmann::json event_to_json(const PreferenceEvent& e) {
  nlohmann::json j{{"user", e.user},
                   {"session", e.session},
                   {"cue_label", e.cue_label},
                   {"timestamp", e.timestamp},
                   {"action", std::string(to_string(e.action))}};
  if (e.category) j["category"] = *e.category;
  return j;
}

inline PreferenceEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("preference event must be an object");
  try {
    PreferenceEvent e;
    e.user = j.value("user", std::string());
    e.session = j.value("session", std::string());
    e.cue_label = j.at("cue_label").get<std::string>();
    if (auto it = j.find("category"); it != j.end() && !it->is_null()) e.category = it->get<std::string>();
    e.timestamp = j.value("timestamp", std::int64_t{0});
    e.action = preference_action_from(j.value("action", std::string("select")));
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("bad preference event: ") + ex.what());
  }
}

inline void write_log_jsonl(std::ostream& out, const PreferenceLog& log) {
  for (const auto& e : log.events()) out << event_to_json(e).dump() << '\n';
}

// One event per line; blank lines are skipped.
inline PreferenceLog read_log_jsonl(std::istream& in) {
  PreferenceLog log;
  std::string line;
  std::size_t offset = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto line_start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("malformed event on line " + std::to_string(line_no), line_start + (e.byte ? e.byte - 1 : 0));
    }
    try {
      log.append(event_from_json(j));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what(), e.subject());
    }
  }
  return log;
}

inline nlohmann::json report_to_json(const ScentReport& r) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.categories) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < c.rows.size(); ++i)
      rows.push_back({{"rank", i + 1},
                      {"label", c.rows[i].cue_label},
                      {"raw_frequency", c.rows[i].raw_frequency},
                      {"scaled", c.rows[i].scaled}});
    cats.push_back({{"name", c.name}, {"empty", c.empty}, {"rows", std::move(rows)}});
  }
  return {{"scope", std::string(to_string(r.scope))},
          {"top", r.top_n},
          {"flagged", r.flagged()},
          {"categories", std::move(cats)}};
}

// Aligned text table: one "User Preferences | IS" column pair per category.
inline std::string render_report_table(const ScentReport& r) {
  constexpr std::string_view kLabelHead = "User Preferences";
  constexpr std::size_t kIsWidth = 2;
  std::vector<std::size_t> widths;
  std::size_t n_rows = 0;
  for (const auto& c : r.categories) {
    std::size_t w = kLabelHead.size();
    for (const auto& row : c.rows) w = std::max(w, row.cue_label.size());
    if (c.empty) w = std::max<std::size_t>(w, 11);
    if (c.name.size() > w + 3 + kIsWidth) w = c.name.size() - 3 - kIsWidth;
    widths.push_back(w);
    n_rows = std::max(n_rows, std::max<std::size_t>(c.rows.size(), c.empty ? 1 : 0));
  }
  const std::size_t rank_w = std::max<std::size_t>(2, 1 + std::to_string(n_rows).size());

  std::ostringstream out;
  auto pad = [](std::string_view s, std::size_t w, bool right = false) {
    std::string out(s);
    if (out.size() < w) out.insert(right ? out.begin() : out.end(), w - out.size(), ' ');
    return out;
  };
  auto rule = [&] {
    out << '+' << std::string(rank_w + 2, '-');
    for (auto w : widths) out << '+' << std::string(w + 2, '-') << '+' << std::string(kIsWidth + 2, '-');
    out << "+\n";
  };

  out << "Information scent of user preferences (scope: " << to_string(r.scope) << ")\n";
  if (r.categories.empty()) {
    out << "(no events)\n";
    return out.str();
  }
  rule();
  out << "| " << pad("", rank_w) << ' ';
  for (std::size_t i = 0; i < r.categories.size(); ++i)
    out << "| " << pad(r.categories[i].name, widths[i] + 3 + kIsWidth) << ' ';
  out << "|\n";
  out << "| " << pad("R", rank_w) << ' ';
  for (auto w : widths) out << "| " << pad(kLabelHead, w) << " | " << pad("IS", kIsWidth) << ' ';
  out << "|\n";
  rule();
  for (std::size_t row = 0; row < n_rows; ++row) {
    out << "| " << pad("R" + std::to_string(row + 1), rank_w) << ' ';
    for (std::size_t i = 0; i < r.categories.size(); ++i) {
      const auto& c = r.categories[i];
      std::string label, is;
      if (row < c.rows.size()) {
        label = c.rows[row].cue_label;
        is = std::to_string(c.rows[row].scaled);
      } else if (c.empty && row == 0) {
        label = "(no events)";
      }
      out << "| " << pad(label, widths[i]) << " | " << pad(is, kIsWidth, true) << ' ';
    }
    out << "|\n";
  }
  rule();
  return out.str();
}

}  // namespace forage
