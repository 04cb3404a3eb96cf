#pragma once

// Cue extraction: dominant colors via k-means snapped to the HTML basic
// palette, cleaned keyword counts, and a multinomial Naive Bayes categorizer.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forage/catalog.hpp"
#include "forage/error.hpp"

namespace forage {

// ---------------------------------------------------------------------------
// Palette

struct PaletteEntry {
  std::string_view label;
  std::uint8_t r, g, b;
};

// HTML 4.01 basic colors. Order matters: distance ties resolve to the earlier entry.
inline constexpr std::array<PaletteEntry, 16> kHtmlPalette{{
    {"black", 0, 0, 0},       {"silver", 192, 192, 192}, {"gray", 128, 128, 128}, {"white", 255, 255, 255},
    {"maroon", 128, 0, 0},    {"red", 255, 0, 0},        {"purple", 128, 0, 128}, {"fuchsia", 255, 0, 255},
    {"green", 0, 128, 0},     {"lime", 0, 255, 0},       {"olive", 128, 128, 0},  {"yellow", 255, 255, 0},
    {"navy", 0, 0, 128},      {"blue", 0, 0, 255},       {"teal", 0, 128, 128},   {"aqua", 0, 255, 255},
}};

struct RgbD {
  double r = 0, g = 0, b = 0;
  friend bool operator==(const RgbD&, const RgbD&) = default;
};

inline RgbD to_rgbd(Rgb p) { return {double(p.r), double(p.g), double(p.b)}; }

inline double squared_distance(const RgbD& a, const RgbD& b) {
  const double dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
  return dr * dr + dg * dg + db * db;
}

inline std::size_t nearest_palette_index(const RgbD& c) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kHtmlPalette.size(); ++i) {
    const auto& p = kHtmlPalette[i];
    const double d = squared_distance(c, {double(p.r), double(p.g), double(p.b)});
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline std::string_view nearest_palette_label(const RgbD& c) { return kHtmlPalette[nearest_palette_index(c)].label; }
inline std::string_view nearest_palette_label(Rgb c) { return nearest_palette_label(to_rgbd(c)); }

// ---------------------------------------------------------------------------
// k-means over RGB pixels

struct ColorCluster {
  RgbD centroid;
  double proportion = 0.0;
  std::size_t count = 0;
};

struct KMeansResult {
  // Sorted by count descending, then centroid lexicographically.
  std::vector<ColorCluster> clusters;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline std::size_t nearest_centroid(const RgbD& p, const std::vector<RgbD>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw;
  do draw = rng(); while (draw >= limit);
  return draw % bound;
}

// First seed drawn uniformly, the rest by farthest point. Stops early when every
// pixel already coincides with a seed.
inline std::vector<RgbD> farthest_point_seeds(std::span<const Rgb> pixels, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<RgbD> centroids{to_rgbd(pixels[bounded_draw(rng, pixels.size())])};
  std::vector<double> min_d(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) min_d[i] = squared_distance(to_rgbd(pixels[i]), centroids[0]);
  while (static_cast<int>(centroids.size()) < k) {
    const auto far = std::max_element(min_d.begin(), min_d.end());
    if (*far == 0.0) break;
    const RgbD next = to_rgbd(pixels[static_cast<std::size_t>(far - min_d.begin())]);
    centroids.push_back(next);
    for (std::size_t i = 0; i < pixels.size(); ++i)
      min_d[i] = std::min(min_d[i], squared_distance(to_rgbd(pixels[i]), next));
  }
  return centroids;
}

}  // namespace detail

inline KMeansResult kmeans_colors(std::span<const Rgb> pixels, int k, std::uint64_t seed, int max_iters = 50) {
  if (pixels.empty()) throw Error("k-means needs a nonempty raster");
  if (k < 1) throw Error("k-means needs k >= 1");
  if (max_iters < 1) throw Error("k-means needs max_iters >= 1");

  std::vector<RgbD> centroids = detail::farthest_point_seeds(pixels, k, seed);
  std::vector<std::size_t> assign(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) assign[i] = detail::nearest_centroid(to_rgbd(pixels[i]), centroids);

  KMeansResult result;
  std::vector<std::size_t> counts;
  for (int iter = 1;; ++iter) {
    // Update step: exact means from integer sums; empty clusters are dropped.
    std::vector<std::array<std::int64_t, 3>> sums(centroids.size(), {0, 0, 0});
    counts.assign(centroids.size(), 0);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      auto& s = sums[assign[i]];
      s[0] += pixels[i].r;
      s[1] += pixels[i].g;
      s[2] += pixels[i].b;
      ++counts[assign[i]];
    }
    std::vector<std::size_t> remap(centroids.size());
    std::vector<RgbD> next;
    std::vector<std::size_t> next_counts;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (counts[c] == 0) continue;
      remap[c] = next.size();
      const double n = static_cast<double>(counts[c]);
      next.push_back({double(sums[c][0]) / n, double(sums[c][1]) / n, double(sums[c][2]) / n});
      next_counts.push_back(counts[c]);
    }
    centroids = std::move(next);
    counts = std::move(next_counts);
    for (auto& a : assign) a = remap[a];

    // Assignment step.
    bool changed = false;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      const auto c = detail::nearest_centroid(to_rgbd(pixels[i]), centroids);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    result.iterations = iter;
    if (!changed) {
      result.converged = true;
      break;
    }
    if (iter >= max_iters) {
      // Budget exhausted: report the means of the final assignment.
      std::vector<std::array<std::int64_t, 3>> s2(centroids.size(), {0, 0, 0});
      counts.assign(centroids.size(), 0);
      for (std::size_t i = 0; i < pixels.size(); ++i) {
        s2[assign[i]][0] += pixels[i].r;
        s2[assign[i]][1] += pixels[i].g;
        s2[assign[i]][2] += pixels[i].b;
        ++counts[assign[i]];
      }
      std::vector<RgbD> fin;
      std::vector<std::size_t> fin_counts;
      for (std::size_t c = 0; c < centroids.size(); ++c) {
        if (counts[c] == 0) continue;
        const double n = static_cast<double>(counts[c]);
        fin.push_back({double(s2[c][0]) / n, double(s2[c][1]) / n, double(s2[c][2]) / n});
        fin_counts.push_back(counts[c]);
      }
      centroids = std::move(fin);
      counts = std::move(fin_counts);
      break;
    }
  }

  const double total = static_cast<double>(pixels.size());
  for (std::size_t c = 0; c < centroids.size(); ++c)
    result.clusters.push_back({centroids[c], static_cast<double>(counts[c]) / total, counts[c]});
  std::sort(result.clusters.begin(), result.clusters.end(), [](const ColorCluster& a, const ColorCluster& b) {
    if (a.count != b.count) return a.count > b.count;
    return std::tie(a.centroid.r, a.centroid.g, a.centroid.b) < std::tie(b.centroid.r, b.centroid.g, b.centroid.b);
  });
  return result;
}

struct ColorAssignment {
  std::string palette_label;
  double proportion = 0.0;
};

// Clusters snapped to palette labels; clusters sharing a label are merged.
// Sorted by proportion descending, then palette order.
inline std::vector<ColorAssignment> palette_assignments(const std::vector<ColorCluster>& clusters) {
  std::array<double, kHtmlPalette.size()> acc{};
  std::array<bool, kHtmlPalette.size()> used{};
  for (const auto& c : clusters) {
    const auto i = nearest_palette_index(c.centroid);
    acc[i] += c.proportion;
    used[i] = true;
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (used[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return acc[a] > acc[b]; });
  std::vector<ColorAssignment> out;
  for (auto i : order) out.push_back({std::string(kHtmlPalette[i].label), acc[i]});
  return out;
}

// ---------------------------------------------------------------------------
// Keywords

using StopwordSet = std::set<std::string, std::less<>>;

inline const StopwordSet& default_stopwords() {
  static const StopwordSet words{
      "a",       "about",  "above",   "after",  "again",   "against", "all",    "am",      "an",    "and",
      "any",     "are",    "as",      "at",     "be",      "because", "been",   "before",  "being", "below",
      "between", "both",   "but",     "by",     "can",     "could",   "did",    "do",      "does",  "doing",
      "down",    "during", "each",    "few",    "for",     "from",    "further", "had",    "has",   "have",
      "having",  "he",     "her",     "here",   "hers",    "herself", "him",    "himself", "his",   "how",
      "i",       "if",     "in",      "into",   "is",      "it",      "its",    "itself",  "just",  "me",
      "more",    "most",   "my",      "myself", "no",      "nor",     "not",    "now",     "of",    "off",
      "on",      "once",   "only",    "or",     "other",   "our",     "ours",   "ourselves", "out", "over",
      "own",     "same",   "she",     "should", "so",      "some",    "such",   "than",    "that",  "the",
      "their",   "theirs", "them",    "themselves", "then", "there",  "these",  "they",    "this",  "those",
      "through", "to",     "too",     "under",  "until",   "up",      "very",   "was",     "we",    "were",
      "what",    "when",   "where",   "which",  "while",   "who",     "whom",   "why",     "will",  "with",
      "would",   "you",    "your",    "yours",  "yourself", "yourselves",
  };
  return words;
}

inline StopwordSet load_stopwords(std::istream& in) {
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    std::string tok;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (!tok.empty() && tok.front() != '#') words.insert(tok);
  }
  return words;
}

inline StopwordSet load_stopwords_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stopword file '" + path.string() + "'");
  return load_stopwords(in);
}

// Lowercased runs of ASCII alphanumerics. Every other byte separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

struct KeywordProfile {
  std::map<std::string, int> counts;

  bool empty() const { return counts.empty(); }
  int total() const {
    int t = 0;
    for (const auto& [_, c] : counts) t += c;
    return t;
  }
  friend bool operator==(const KeywordProfile&, const KeywordProfile&) = default;
};

inline KeywordProfile extract_keywords(std::string_view title, std::string_view description,
                                       const StopwordSet& stopwords = default_stopwords()) {
  KeywordProfile profile;
  for (auto text : {title, description})
    for (auto& tok : tokenize(text))
      if (tok.size() >= 2 && !stopwords.contains(tok)) ++profile.counts[tok];
  return profile;
}

// ---------------------------------------------------------------------------
// Multinomial Naive Bayes with additive smoothing

struct NaiveBayesModel {
  std::vector<std::string> categories;  // ascending
  std::map<std::string, double> log_priors;
  std::map<std::string, std::map<std::string, double>> log_likelihoods;  // category -> token -> log P(t|c)
  std::map<std::string, double> log_unknown;                            // category -> log P(unseen|c)
  std::set<std::string> vocabulary;
  double smoothing = 1.0;
};

inline NaiveBayesModel train_naive_bayes(const std::vector<std::pair<KeywordProfile, std::string>>& docs,
                                         double smoothing = 1.0) {
  if (!(smoothing > 0.0) || !std::isfinite(smoothing)) throw Error("smoothing must be positive");
  std::map<std::string, int> doc_counts;
  std::map<std::string, std::map<std::string, long>> token_counts;
  std::map<std::string, long> totals;
  NaiveBayesModel model;
  model.smoothing = smoothing;
  for (const auto& [profile, category] : docs) {
    ++doc_counts[category];
    auto& tc = token_counts[category];
    for (const auto& [tok, n] : profile.counts) {
      tc[tok] += n;
      totals[category] += n;
      model.vocabulary.insert(tok);
    }
  }
  if (doc_counts.size() < 2) throw Error("naive Bayes needs at least two categories");

  const double n_docs = static_cast<double>(docs.size());
  const double v = static_cast<double>(model.vocabulary.size());
  for (const auto& [category, n] : doc_counts) {
    model.categories.push_back(category);
    model.log_priors[category] = std::log(static_cast<double>(n) / n_docs);
    const double denom = static_cast<double>(totals[category]) + smoothing * v;
    auto& ll = model.log_likelihoods[category];
    for (const auto& tok : model.vocabulary) {
      const auto it = token_counts[category].find(tok);
      const double count = it == token_counts[category].end() ? 0.0 : static_cast<double>(it->second);
      ll[tok] = std::log((count + smoothing) / denom);
    }
    model.log_unknown[category] = std::log(smoothing / denom);
  }
  return model;
}

struct Classification {
  std::string category;
  std::map<std::string, double> posteriors;
};

inline Classification classify(const NaiveBayesModel& model, const KeywordProfile& doc) {
  std::map<std::string, double> log_post;
  for (const auto& c : model.categories) {
    double s = model.log_priors.at(c);
    const auto& ll = model.log_likelihoods.at(c);
    for (const auto& [tok, n] : doc.counts) {
      const auto it = ll.find(tok);
      s += n * (it == ll.end() ? model.log_unknown.at(c) : it->second);
    }
    log_post[c] = s;
  }
  Classification out;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : model.categories)  // ascending, so ties keep the earlier name
    if (log_post[c] > best) {
      best = log_post[c];
      out.category = c;
    }
  double z = 0.0;
  for (const auto& [c, lp] : log_post) z += std::exp(lp - best);
  for (const auto& [c, lp] : log_post) out.posteriors[c] = std::exp(lp - best) / z;
  return out;
}

// ---------------------------------------------------------------------------
// Cue assembly

struct CueOptions {
  const StopwordSet* stopwords = nullptr;  // null selects default_stopwords()
  int color_clusters = 5;
  std::uint64_t seed = 0;
  int max_iters = 50;
};

// Dedup by (label, source) keeping the max weight, then order by weight
// descending, label ascending, source.
inline std::vector<Cue> normalize_cues(std::vector<Cue> cues) {
  std::map<std::pair<std::string, CueSource>, double> best;
  for (auto& c : cues) {
    auto [it, inserted] = best.try_emplace({c.label, c.source}, c.weight);
    if (!inserted) it->second = std::max(it->second, c.weight);
  }
  std::vector<Cue> out;
  for (const auto& [key, w] : best) out.push_back({key.first, key.second, w});
  std::stable_sort(out.begin(), out.end(), [](const Cue& a, const Cue& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.label != b.label) return a.label < b.label;
    return a.source < b.source;
  });
  return out;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Content labels, top palette colors and top keywords, plus any user cues the
// item already carries.
inline std::vector<Cue> assemble_cues(const ImageItem& item, int top_colors, int top_keywords,
                                      const CueOptions& opts = {}) {
  std::vector<Cue> cues;
  for (const auto& cl : item.content_labels) {
    auto label = lowercase(cl.label);
    if (!label.empty()) cues.push_back({std::move(label), CueSource::content, cl.confidence});
  }
  for (const auto& c : item.cues)
    if (c.source == CueSource::user) cues.push_back(c);

  if (item.pixels && !item.pixels->empty() && top_colors > 0) {
    const auto km = kmeans_colors(item.pixels->pixels, opts.color_clusters, opts.seed, opts.max_iters);
    const auto colors = palette_assignments(km.clusters);
    for (std::size_t i = 0; i < colors.size() && i < static_cast<std::size_t>(top_colors); ++i)
      cues.push_back({colors[i].palette_label, CueSource::color, colors[i].proportion});
  }

  if (top_keywords > 0) {
    const auto profile =
        extract_keywords(item.title, item.description, opts.stopwords ? *opts.stopwords : default_stopwords());
    std::vector<std::pair<std::string, int>> ranked(profile.counts.begin(), profile.counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (!ranked.empty()) {
      const double max_count = ranked.front().second;
      for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(top_keywords); ++i)
        cues.push_back({ranked[i].first, CueSource::keyword, ranked[i].second / max_count});
    }
  }
  return normalize_cues(std::move(cues));
}

}  // namespace forage
