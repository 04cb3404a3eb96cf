// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "forage/catalog.hpp"
#include "forage/features.hpp"
#include "forage/index.hpp"
#include "forage/scent.hpp"
#include "forage/session.hpp"
#include "knn_oracle.hpp"
#include "test_support.hpp"

using namespace forage;
using namespace forage::testing;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

// Records the first failure message.
struct Check {
  Outcome& out;
  bool operator()(bool cond, const std::string& msg) {
    if (!cond && out.ok) {
      out.ok = false;
      out.detail = msg;
    }
    return cond;
  }
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (o.ok && secs >= budget_s) o = {false, "took " + std::to_string(secs) + " s, budget " + std::to_string(budget_s) + " s"};
  if (!o.ok) ++failures;
  char timing[64];
  std::snprintf(timing, sizeof timing, "%.3f s / %.0f s", secs, budget_s);
  std::cout << (o.ok ? "PASS " : "FAIL ") << name << " (" << timing << ")";
  if (!o.detail.empty()) std::cout << ": " << o.detail;
  std::cout << std::endl;
}

// --- independent references ---------------------------------------------------

int reference_scaled(long f, long max) {
  const double v = std::floor(10.0 * static_cast<double>(f) / static_cast<double>(max) + 0.5);
  return static_cast<int>(std::clamp(v, 1.0, 10.0));
}

std::string reference_palette(int r, int g, int b) {
  static const std::vector<std::pair<std::string, unsigned>> table = {
      {"black", 0x000000}, {"silver", 0xC0C0C0}, {"gray", 0x808080},  {"white", 0xFFFFFF},
      {"maroon", 0x800000}, {"red", 0xFF0000},   {"purple", 0x800080}, {"fuchsia", 0xFF00FF},
      {"green", 0x008000}, {"lime", 0x00FF00},   {"olive", 0x808000},  {"yellow", 0xFFFF00},
      {"navy", 0x000080},  {"blue", 0x0000FF},   {"teal", 0x008080},   {"aqua", 0x00FFFF}};
  long best = -1;
  std::string name;
  for (const auto& [n, v] : table) {
    const long dr = r - static_cast<long>((v >> 16) & 255), dg = g - static_cast<long>((v >> 8) & 255),
               db = b - static_cast<long>(v & 255);
    const long d = dr * dr + dg * dg + db * db;
    if (best < 0 || d < best) {
      best = d;
      name = n;
    }
  }
  return name;
}

// --- criteria -----------------------------------------------------------------

Outcome scent_table() {
  Outcome o;
  Check check{o};
  const auto r = run_command(cli("eval-scent --log " + fixture("tab1.jsonl") + " --scope global --top 5"));
  if (!check(r.exit_code == 0, "eval-scent exited " + std::to_string(r.exit_code))) return o;
  std::vector<int> left, right;
  std::istringstream lines(r.output);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("| R", 0) != 0 || line.size() < 4 || !std::isdigit(static_cast<unsigned char>(line[3]))) continue;
    std::vector<std::string> cells;
    std::istringstream ss(line);
    for (std::string cell; std::getline(ss, cell, '|');) {
      cell.erase(0, cell.find_first_not_of(' '));
      cell.erase(cell.find_last_not_of(' ') + 1);
      cells.push_back(cell);
    }
    // "", R, label, IS, label, IS
    if (!check(cells.size() >= 6, "malformed row: " + line)) return o;
    left.push_back(std::stoi(cells[3]));
    right.push_back(std::stoi(cells[5]));
  }
  auto show = [](const std::vector<int>& v) {
    std::string s;
    for (auto x : v) s += (s.empty() ? "" : "/") + std::to_string(x);
    return s;
  };
  check(left == std::vector<int>{10, 7, 6, 6, 3}, "Bolognese column " + show(left));
  check(right == std::vector<int>{9, 8, 6, 5, 5}, "Zoodles column " + show(right));
  if (o.ok) o.detail = show(left) + " and " + show(right);
  return o;
}

Outcome split_arithmetic() {
  Outcome o;
  Check check{o};
  const Board b = synthetic_board(1116, 4, 11);
  const auto first = split_dataset(b, 0.67, 42);
  check(first.train.size() == 748 && first.test.size() == 368,
        "sizes " + std::to_string(first.train.size()) + "/" + std::to_string(first.test.size()));
  for (int i = 0; i < 4; ++i) {
    const auto again = split_dataset(b, 0.67, 42);
    check(again.train == first.train && again.test == first.test, "rerun " + std::to_string(i + 2) + " differs");
  }
  if (o.ok) o.detail = "748/368, 5 identical runs";
  return o;
}

Outcome knn_oracle() {
  Outcome o;
  Check check{o};
  const auto data = oracle::random_unit_vectors(200, 64, 7);
  std::vector<ImageItem> items;
  for (const auto& d : data) {
    ImageItem it;
    it.id = d.id;
    it.embedding = EmbeddingVector{d.v};
    items.push_back(std::move(it));
  }
  const auto index = build_index(items);
  std::size_t matched = 0;
  for (const auto& q : data) {
    bool ok = true;
    for (std::size_t k : {1, 5, 20}) {
      const auto got = index.knn(q.v, k);
      const auto want = oracle::brute_force_knn(data, q.v, k);
      ok = ok && got.size() == want.size();
      for (std::size_t i = 0; ok && i < got.size(); ++i) ok = got[i].id == want[i].first;
    }
    matched += ok;
  }
  check(matched == 200, std::to_string(matched) + "/200 queries match");
  if (o.ok) o.detail = "200/200 queries";
  return o;
}

Outcome kmeans_invariants() {
  Outcome o;
  Check check{o};
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 50 && o.ok; ++t) {
    const Raster r = random_raster(rng, 64);
    const auto km = kmeans_colors(r.pixels, 5, static_cast<std::uint64_t>(t), 1000);
    if (!check(km.converged, "raster " + std::to_string(t) + " did not converge")) break;
    // Regroup around the returned centroids and compare.
    std::vector<std::array<double, 3>> sum(km.clusters.size(), {0, 0, 0});
    std::vector<std::size_t> count(km.clusters.size(), 0);
    for (const auto& p : r.pixels) {
      std::size_t best = 0;
      double bd = 1e300;
      for (std::size_t c = 0; c < km.clusters.size(); ++c) {
        const auto& m = km.clusters[c].centroid;
        const double d = (p.r - m.r) * (p.r - m.r) + (p.g - m.g) * (p.g - m.g) + (p.b - m.b) * (p.b - m.b);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      sum[best][0] += p.r;
      sum[best][1] += p.g;
      sum[best][2] += p.b;
      ++count[best];
    }
    double total = 0;
    for (std::size_t c = 0; c < km.clusters.size(); ++c) {
      const auto& m = km.clusters[c].centroid;
      const bool same = count[c] == km.clusters[c].count && count[c] > 0 &&
                        std::abs(sum[c][0] / count[c] - m.r) < 1e-9 && std::abs(sum[c][1] / count[c] - m.g) < 1e-9 &&
                        std::abs(sum[c][2] / count[c] - m.b) < 1e-9;
      check(same, "raster " + std::to_string(t) + " cluster " + std::to_string(c) + " is not a fixed point");
      total += km.clusters[c].proportion;
    }
    check(std::abs(total - 1.0) <= 1e-6, "raster " + std::to_string(t) + " proportions sum to " + std::to_string(total));

    const auto one = kmeans_colors(r.pixels, 1, 0);
    long double sr = 0, sg = 0, sb = 0;
    for (const auto& p : r.pixels) {
      sr += p.r;
      sg += p.g;
      sb += p.b;
    }
    const long double n = static_cast<long double>(r.pixels.size());
    check(one.clusters.size() == 1 && std::abs(static_cast<double>(sr / n) - one.clusters[0].centroid.r) <= 1e-9 &&
              std::abs(static_cast<double>(sg / n) - one.clusters[0].centroid.g) <= 1e-9 &&
              std::abs(static_cast<double>(sb / n) - one.clusters[0].centroid.b) <= 1e-9,
          "raster " + std::to_string(t) + " k=1 centroid is not the pixel mean");
  }
  if (o.ok) o.detail = "50 rasters";
  return o;
}

Outcome palette_oracle() {
  Outcome o;
  Check check{o};
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> byte(0, 255);
  int agree = 0;
  for (int i = 0; i < 10000; ++i) {
    const int r = byte(rng), g = byte(rng), b = byte(rng);
    agree += nearest_palette_label(Rgb{std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)}) == reference_palette(r, g, b);
  }
  check(agree == 10000, std::to_string(agree) + "/10000 agree");
  if (o.ok) o.detail = "10000/10000";
  return o;
}

Outcome naive_bayes() {
  Outcome o;
  Check check{o};
  const std::vector<std::pair<KeywordProfile, std::string>> docs = {
      {{{{"bolognese", 2}}}, "A"}, {{{{"spaghetti", 1}}}, "A"}, {{{{"zoodles", 3}}}, "B"}};
  const auto m = train_naive_bayes(docs, 1.0);
  // (2 + 1) / (3 + 3)
  const double p = std::exp(m.log_likelihoods.at("A").at("bolognese"));
  check(std::abs(p - 0.5) <= 1e-9, "P(bolognese|A) = " + std::to_string(p));
  // Hand posterior for {zoodles}: A: 2/3 * 1/6 = 1/9; B: 1/3 * 4/6 = 2/9.
  const auto c = classify(m, {{{"zoodles", 1}}});
  check(c.category == "B", "argmax " + c.category);
  check(std::abs(c.posteriors.at("B") - 2.0 / 3.0) <= 1e-9, "posterior B " + std::to_string(c.posteriors.at("B")));
  // {bolognese, spaghetti}: A: 2/3 * 1/2 * 1/3 = 1/9; B: 1/3 * 1/6 * 1/6 = 1/108.
  const auto a = classify(m, {{{"bolognese", 1}, {"spaghetti", 1}}});
  check(a.category == "A", "argmax " + a.category);
  check(std::abs(a.posteriors.at("A") - 12.0 / 13.0) <= 1e-9, "posterior A " + std::to_string(a.posteriors.at("A")));
  if (o.ok) o.detail = "P(bolognese|A) = 0.5";
  return o;
}

Outcome scent_properties() {
  Outcome o;
  Check check{o};
  std::mt19937_64 rng(555);
  const std::vector<std::string> labels = {"bolognese", "spaghetti", "zoodles", "easy", "pasta", "sauce", "pesto", "chicken"};
  const std::vector<std::string> cats = {"A", "B", "C"};
  for (int t = 0; t < 1000 && o.ok; ++t) {
    std::vector<PreferenceEvent> events;
    const int n = std::uniform_int_distribution<int>(1, 120)(rng);
    for (int i = 0; i < n; ++i) {
      PreferenceEvent e;
      e.user = "u";
      e.session = "s";
      e.cue_label = labels[std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng)];
      e.category = cats[std::uniform_int_distribution<std::size_t>(0, cats.size() - 1)(rng)];
      e.action = std::uniform_int_distribution<int>(0, 4)(rng) == 0 ? PreferenceAction::hover : PreferenceAction::select;
      events.push_back(std::move(e));
    }
    auto build = [](std::vector<PreferenceEvent> ev) {
      PreferenceLog log;
      std::int64_t ts = 0;
      for (auto& e : ev) {
        e.timestamp = ts += 5;
        log.append(e);
      }
      return log;
    };
    const auto log = build(events);
    const auto scope = t % 2 ? ScentScope::global : ScentScope::per_category;
    const auto report = scent_report(log, {}, labels.size(), scope);

    // Reference counts per category.
    std::map<std::string, std::map<std::string, long>> ref;
    long global_max = 0;
    for (const auto& e : events)
      if (e.action == PreferenceAction::select) global_max = std::max(global_max, ++ref[*e.category][e.cue_label]);
    for (const auto& cat : report.categories) {
      const auto& counts = ref[cat.name];
      long cat_max = 0;
      for (const auto& [_, f] : counts) cat_max = std::max(cat_max, f);
      const long max = scope == ScentScope::global ? global_max : cat_max;
      for (const auto& a : cat.rows) {
        check(a.raw_frequency == counts.at(a.cue_label), "trial " + std::to_string(t) + ": wrong frequency");
        check(a.scaled == reference_scaled(a.raw_frequency, max), "trial " + std::to_string(t) + ": wrong scale");
        if (a.raw_frequency == max) check(a.scaled == 10, "trial " + std::to_string(t) + ": max cue not 10");
        for (const auto& b : cat.rows)
          if (a.raw_frequency >= b.raw_frequency)
            check(a.scaled >= b.scaled, "trial " + std::to_string(t) + ": monotonicity broken");
      }
    }
    if (scope == ScentScope::per_category)
      for (const auto& cat : report.categories)
        if (!cat.rows.empty()) check(cat.rows.front().scaled == 10, "trial " + std::to_string(t) + ": category top not 10");

    auto shuffled = events;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto permuted = scent_report(build(shuffled), {}, labels.size(), scope);
    check(report_to_json(permuted).dump() == report_to_json(report).dump(),
          "trial " + std::to_string(t) + ": report depends on event order");
  }
  if (o.ok) o.detail = "1000 logs";
  return o;
}

Outcome forage_loop() {
  Outcome o;
  Check check{o};
  Board b = synthetic_board(50, 8, 12);
  const std::vector<std::string> extra = {"easy", "pasta", "pesto", "chicken", "sauce", "garlic"};
  std::mt19937_64 rng(9);
  for (auto& item : b.items) {
    item.content_labels.push_back({extra[std::uniform_int_distribution<std::size_t>(0, extra.size() - 1)(rng)],
                                   std::uniform_real_distribution<double>(0.3, 1.0)(rng)});
    item.cues = assemble_cues(item, 3, 5);
  }
  const auto index = build_index(b);
  PreferenceLog log;
  auto s = start_session("s1", "u1", "zoodles", b, 10, 0.7, 0);
  std::vector<Patch> patches{s.current_patch};
  auto prev = session_metrics(s);
  check(is_valid_patch(s.current_patch) && !s.current_patch.empty(), "initial patch invalid or empty");
  std::int64_t ts = 0;
  for (const char* cue : {"easy", "pesto", "zucchini"}) {
    forage_step(s, cue, b, index, log, ts += 1000);
    patches.push_back(s.current_patch);
    const auto m = session_metrics(s);
    check(is_valid_patch(s.current_patch), std::string("patch after '") + cue + "' is not sorted");
    check(m.cost.steps == prev.cost.steps + 1, "steps did not advance by one");
    check(m.cost.retrievals >= prev.cost.retrievals && m.cost.elapsed_ms >= prev.cost.elapsed_ms, "cost went backwards");
    check(m.consumption_events >= prev.consumption_events && m.distinct_cues >= prev.distinct_cues &&
              m.items_viewed >= prev.items_viewed,
          "diet went backwards");
    prev = m;
  }
  check(prev.cost.steps == 4 && prev.cost.retrievals <= 4, "final counters");

  std::stringstream transcript;
  export_transcript(transcript, s);
  const std::string text = transcript.str();
  PreferenceLog replay_log;
  const auto r = replay_transcript(transcript, b, index, replay_log);
  check(r.patches.size() == patches.size(), "replay patch count");
  for (std::size_t i = 0; i < patches.size() && i < r.patches.size(); ++i)
    check(patch_to_json(r.patches[i]).dump() == patch_to_json(patches[i]).dump(), "replayed patch " + std::to_string(i) + " differs");
  check(session_to_json(r.session).dump() == session_to_json(s).dump(), "replayed session differs");
  std::ostringstream again;
  export_transcript(again, r.session);
  check(again.str() == text, "re-exported transcript differs");
  if (o.ok) o.detail = "4 steps, byte-identical replay";
  return o;
}

Outcome rank_degeneracy() {
  Outcome o;
  Check check{o};
  const Board b = fixture_board();
  const auto index = build_index(b);
  std::ifstream in(fixture("tab1.jsonl"));
  const auto scores = cue_scores(read_log_jsonl(in));
  std::map<std::string, double> scent;
  for (const auto& item : b.items) scent[item.id] = scent_of_image(item, scores);
  auto f = [&](std::string_view id) { return scent.at(std::string(id)); };

  for (const auto& query : b.items) {
    const auto cands = index.knn(*query.embedding, b.items.size());
    auto by_sim = cands;
    std::sort(by_sim.begin(), by_sim.end(), [](const Neighbor& x, const Neighbor& y) {
      return x.similarity != y.similarity ? x.similarity > y.similarity : x.id < y.id;
    });
    auto by_scent = cands;
    std::sort(by_scent.begin(), by_scent.end(), [&](const Neighbor& x, const Neighbor& y) {
      if (scent[x.id] != scent[y.id]) return scent[x.id] > scent[y.id];
      return x.similarity != y.similarity ? x.similarity > y.similarity : x.id < y.id;
    });
    const auto a1 = rank_results(cands, f, 1.0), a0 = rank_results(cands, f, 0.0);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      check(a1[i].id == by_sim[i].id, "alpha=1 order differs for query " + query.id);
      check(a0[i].id == by_scent[i].id, "alpha=0 order differs for query " + query.id);
    }
  }
  if (o.ok) o.detail = "6 queries";
  return o;
}

}  // namespace

int main() {
  criterion("scent-table-columns", 1, scent_table);
  criterion("split-arithmetic", 1, split_arithmetic);
  criterion("knn-oracle", 5, knn_oracle);
  criterion("kmeans-invariants", 30, kmeans_invariants);
  criterion("palette-oracle", 1, palette_oracle);
  criterion("naive-bayes-hand-check", 1, naive_bayes);
  criterion("scent-properties", 10, scent_properties);
  criterion("forage-loop-end-to-end", 5, forage_loop);
  criterion("rank-degeneracy", 1, rank_degeneracy);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
