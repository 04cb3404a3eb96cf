#pragma once

// Boards of images: data model, board-file ingestion, embedding sidecars and
// deterministic train/test splitting.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "forage/error.hpp"

namespace forage {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Row-major RGB raster.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  bool empty() const { return pixels.empty(); }
  const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const Raster&, const Raster&) = default;
};

enum class CueSource { content, color, keyword, user };

inline std::string_view to_string(CueSource s) {
  switch (s) {
    case CueSource::content: return "content";
    case CueSource::color: return "color";
    case CueSource::keyword: return "keyword";
    case CueSource::user: return "user";
  }
  return "user";
}

inline CueSource cue_source_from(std::string_view s) {
  if (s == "content") return CueSource::content;
  if (s == "color") return CueSource::color;
  if (s == "keyword") return CueSource::keyword;
  if (s == "user") return CueSource::user;
  throw ValidationError("unknown cue source '" + std::string(s) + "'");
}

// A selectable label attached to an image; the carrier of scent.
struct Cue {
  std::string label;
  CueSource source = CueSource::content;
  double weight = 0.0;
  friend bool operator==(const Cue&, const Cue&) = default;
};

struct ContentLabel {
  std::string label;
  double confidence = 0.0;
  friend bool operator==(const ContentLabel&, const ContentLabel&) = default;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

struct ImageItem {
  std::string id;
  std::string board;
  // Defaults to the board name when the file does not set one.
  std::string category;
  std::string title;
  std::string description;
  std::vector<ContentLabel> content_labels;
  std::optional<Raster> pixels;
  std::optional<std::string> image_file;
  std::optional<EmbeddingVector> embedding;
  std::vector<Cue> cues;

  // Items without an embedding keep their cues but never enter the index.
  bool indexable() const { return embedding.has_value(); }
  friend bool operator==(const ImageItem&, const ImageItem&) = default;
};

struct Board {
  std::string name;
  std::vector<ImageItem> items;

  const ImageItem* find(std::string_view id) const {
    for (const auto& it : items)
      if (it.id == id) return &it;
    return nullptr;
  }
  friend bool operator==(const Board&, const Board&) = default;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  double train_fraction = 0.0;
  bool per_category = false;
};

struct Violation {
  std::string item_id;  // empty for board-level rules
  std::string rule;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

inline ValidationReport validate_catalog(const Board& board) {
  ValidationReport report;
  auto add = [&](const std::string& id, std::string rule, std::string msg) {
    report.push_back({id, std::move(rule), std::move(msg)});
  };

  if (board.name.empty()) add("", "board-name", "board name is empty");

  std::set<std::string> seen;
  for (const auto& item : board.items) {
    if (item.id.empty()) {
      add(item.id, "id-nonempty", "item id is empty");
    } else if (!seen.insert(item.id).second) {
      add(item.id, "id-unique", "duplicate item id '" + item.id + "'");
    }
    for (const auto& cl : item.content_labels) {
      if (!(cl.confidence >= 0.0 && cl.confidence <= 1.0))
        add(item.id, "confidence-range",
            "content label '" + cl.label + "' confidence " + std::to_string(cl.confidence) +
                " outside [0,1]");
    }
    if (item.embedding) {
      const auto& v = item.embedding->values;
      if (v.empty()) {
        add(item.id, "embedding-dim", "embedding has dimension 0");
      } else if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
        add(item.id, "embedding-finite", "embedding contains a non-finite value");
      } else if (item.embedding->norm() == 0.0) {
        add(item.id, "embedding-nonzero", "embedding has zero norm");
      }
    }
    if (item.pixels) {
      const auto& r = *item.pixels;
      if (r.width <= 0 || r.height <= 0 ||
          r.pixels.size() != static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height))
        add(item.id, "raster-shape", "pixel count does not match width x height");
    }
    for (const auto& cue : item.cues) {
      if (cue.label.empty()) add(item.id, "cue-label", "cue label is empty");
      if (!std::isfinite(cue.weight) || cue.weight < 0.0)
        add(item.id, "cue-weight", "cue '" + cue.label + "' has invalid weight");
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// PPM rasters (P3 ascii / P6 binary, maxval <= 255)

inline Raster read_ppm(std::istream& in) {
  auto next_token = [&in]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        if (!tok.empty()) break;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P3" && magic != "P6") throw ParseError("not a PPM raster (magic '" + magic + "')", 0);
  Raster r;
  int maxval = 0;
  try {
    r.width = std::stoi(next_token());
    r.height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ParseError("bad PPM header", static_cast<std::size_t>(std::max<std::streamoff>(0, in.tellg())));
  }
  if (r.width <= 0 || r.height <= 0 || maxval <= 0 || maxval > 255)
    throw ParseError("unsupported PPM dimensions or maxval", 0);
  const auto n = static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height);
  r.pixels.resize(n);
  auto scale = [maxval](int v) { return static_cast<std::uint8_t>(std::lround(v * 255.0 / maxval)); };
  if (magic == "P6") {
    std::vector<unsigned char> buf(n * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw ParseError("truncated PPM data", 0);
    for (std::size_t i = 0; i < n; ++i) r.pixels[i] = {scale(buf[3 * i]), scale(buf[3 * i + 1]), scale(buf[3 * i + 2])};
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::array<int, 3> c{};
      for (auto& ch : c) {
        const auto tok = next_token();
        if (tok.empty()) throw ParseError("truncated PPM data", 0);
        ch = std::stoi(tok);
        if (ch < 0 || ch > maxval) throw ParseError("PPM sample out of range", 0);
      }
      r.pixels[i] = {scale(c[0]), scale(c[1]), scale(c[2])};
    }
  }
  return r;
}

inline Raster read_ppm_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open raster '" + path.string() + "'");
  return read_ppm(in);
}

// ---------------------------------------------------------------------------
// Embedding sidecar: "EMB1", u32 count, u32 dim, count*dim little-endian f32.

namespace detail {

inline std::uint32_t read_u32_le(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw ParseError("truncated embedding sidecar", static_cast<std::size_t>(std::max<std::streamoff>(0, in.tellg())));
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

}  // namespace detail

inline std::vector<EmbeddingVector> read_embedding_sidecar(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || std::string_view(magic.data(), 4) != "EMB1")
    throw ParseError("embedding sidecar lacks EMB1 magic", 0);
  const auto count = detail::read_u32_le(in);
  const auto dim = detail::read_u32_le(in);
  if (dim == 0) throw ParseError("embedding sidecar declares dimension 0", 8);
  std::vector<EmbeddingVector> out(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    out[i].values.resize(dim);
    for (std::uint32_t d = 0; d < dim; ++d)
      out[i].values[d] = static_cast<double>(std::bit_cast<float>(detail::read_u32_le(in)));
  }
  return out;
}

inline void write_embedding_sidecar(std::ostream& out, const std::vector<EmbeddingVector>& vectors) {
  const std::uint32_t dim = vectors.empty() ? 1 : static_cast<std::uint32_t>(vectors.front().dim());
  out.write("EMB1", 4);
  detail::write_u32_le(out, static_cast<std::uint32_t>(vectors.size()));
  detail::write_u32_le(out, dim);
  for (const auto& v : vectors) {
    if (v.dim() != dim) throw ValidationError("sidecar vectors must share one dimension");
    for (double x : v.values) detail::write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
}

// ---------------------------------------------------------------------------
// Board JSON

struct BoardLoadOptions {
  // Resolves relative `image_file` paths; rasters are read only when set.
  std::optional<std::filesystem::path> image_root;
  // Embeddings in item order, overriding any inline "embedding" arrays.
  std::istream* embedding_sidecar = nullptr;
};

namespace detail {

inline std::string item_ref(const nlohmann::json& j, std::size_t index) {
  if (j.is_object() && j.contains("id") && j["id"].is_string()) return j["id"].get<std::string>();
  return "#" + std::to_string(index);
}

template <class T>
T field(const nlohmann::json& obj, const char* key, const std::string& ref, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("item " + ref + ": field '" + key + "' has the wrong type", ref);
  }
}

}  // namespace detail

// Decodes the board format without checking domain invariants.
inline Board parse_board(std::istream& in, const BoardLoadOptions& opts = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed board JSON: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ParseError("board JSON must be an object", 0);

  Board board;
  board.name = detail::field<std::string>(doc, "name", "board", "");
  const auto items_it = doc.find("items");
  if (items_it == doc.end() || !items_it->is_array()) throw ValidationError("board has no 'items' array");

  std::size_t index = 0;
  for (const auto& j : *items_it) {
    const auto ref = detail::item_ref(j, index++);
    if (!j.is_object()) throw ValidationError("item " + ref + " is not an object", ref);
    ImageItem item;
    item.id = detail::field<std::string>(j, "id", ref, "");
    item.board = board.name;
    item.category = detail::field<std::string>(j, "category", ref, board.name);
    item.title = detail::field<std::string>(j, "title", ref, "");
    item.description = detail::field<std::string>(j, "description", ref, "");
    if (auto it = j.find("content_labels"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) throw ValidationError("item " + ref + ": content_labels must be an array", ref);
      for (const auto& cl : *it) {
        if (!cl.is_object()) throw ValidationError("item " + ref + ": content label must be an object", ref);
        item.content_labels.push_back({detail::field<std::string>(cl, "label", ref, ""),
                                       detail::field<double>(cl, "confidence", ref, 0.0)});
      }
    }
    if (auto it = j.find("embedding"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) throw ValidationError("item " + ref + ": embedding must be an array", ref);
      EmbeddingVector v;
      for (const auto& x : *it) {
        if (!x.is_number()) throw ValidationError("item " + ref + ": embedding holds a non-number", ref);
        v.values.push_back(x.get<double>());
      }
      item.embedding = std::move(v);
    }
    if (auto it = j.find("image_file"); it != j.end() && it->is_string()) item.image_file = it->get<std::string>();
    if (auto it = j.find("pixels"); it != j.end() && !it->is_null()) {
      Raster r;
      r.width = detail::field<int>(*it, "width", ref, 0);
      r.height = detail::field<int>(*it, "height", ref, 0);
      const auto data = detail::field<std::vector<int>>(*it, "data", ref, {});
      if (data.size() % 3 != 0) throw ValidationError("item " + ref + ": pixel data length not a multiple of 3", ref);
      for (std::size_t i = 0; i < data.size(); i += 3) {
        for (std::size_t c = 0; c < 3; ++c)
          if (data[i + c] < 0 || data[i + c] > 255)
            throw ValidationError("item " + ref + ": pixel sample out of range", ref);
        r.pixels.push_back({std::uint8_t(data[i]), std::uint8_t(data[i + 1]), std::uint8_t(data[i + 2])});
      }
      item.pixels = std::move(r);
    } else if (item.image_file && opts.image_root) {
      std::filesystem::path p(*item.image_file);
      if (p.is_relative()) p = *opts.image_root / p;
      item.pixels = read_ppm_file(p);
    }
    if (auto it = j.find("cues"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) throw ValidationError("item " + ref + ": cues must be an array", ref);
      for (const auto& c : *it)
        item.cues.push_back({detail::field<std::string>(c, "label", ref, ""),
                             cue_source_from(detail::field<std::string>(c, "source", ref, "user")),
                             detail::field<double>(c, "weight", ref, 0.0)});
    }
    board.items.push_back(std::move(item));
  }

  if (opts.embedding_sidecar) {
    auto vectors = read_embedding_sidecar(*opts.embedding_sidecar);
    if (vectors.size() != board.items.size())
      throw ValidationError("embedding sidecar holds " + std::to_string(vectors.size()) + " vectors for " +
                            std::to_string(board.items.size()) + " items");
    for (std::size_t i = 0; i < vectors.size(); ++i) board.items[i].embedding = std::move(vectors[i]);
  }
  return board;
}

inline std::string describe(const Violation& v) {
  return (v.item_id.empty() ? std::string("board") : "item '" + v.item_id + "'") + " [" + v.rule + "]: " + v.message;
}

// Decodes and validates; throws on the first invariant breach.
inline Board load_board(std::istream& in, const BoardLoadOptions& opts = {}) {
  Board board = parse_board(in, opts);
  const auto report = validate_catalog(board);
  if (!report.empty()) {
    throw ValidationError(describe(report.front()) +
                              (report.size() > 1 ? " (+" + std::to_string(report.size() - 1) + " more)" : ""),
                          report.front().item_id);
  }
  return board;
}

inline Board load_board_file(const std::filesystem::path& path,
                             const std::optional<std::filesystem::path>& sidecar = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open board file '" + path.string() + "'");
  BoardLoadOptions opts;
  opts.image_root = path.parent_path();
  std::ifstream side;
  if (sidecar) {
    side.open(*sidecar, std::ios::binary);
    if (!side) throw Error("cannot open embedding sidecar '" + sidecar->string() + "'");
    opts.embedding_sidecar = &side;
  }
  return load_board(in, opts);
}

inline nlohmann::json board_to_json(const Board& board) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : board.items) {
    nlohmann::json j{{"id", item.id}, {"title", item.title}, {"description", item.description}};
    if (item.category != board.name) j["category"] = item.category;
    auto& labels = j["content_labels"] = nlohmann::json::array();
    for (const auto& cl : item.content_labels) labels.push_back({{"label", cl.label}, {"confidence", cl.confidence}});
    if (item.embedding) j["embedding"] = item.embedding->values;
    if (item.image_file) j["image_file"] = *item.image_file;
    if (item.pixels) {
      std::vector<int> data;
      data.reserve(item.pixels->pixels.size() * 3);
      for (const auto& p : item.pixels->pixels) data.insert(data.end(), {p.r, p.g, p.b});
      j["pixels"] = {{"width", item.pixels->width}, {"height", item.pixels->height}, {"data", data}};
    }
    if (!item.cues.empty()) {
      auto& cues = j["cues"] = nlohmann::json::array();
      for (const auto& c : item.cues)
        cues.push_back({{"label", c.label}, {"source", std::string(to_string(c.source))}, {"weight", c.weight}});
    }
    items.push_back(std::move(j));
  }
  return {{"name", board.name}, {"items", std::move(items)}};
}

inline void serialize_board(std::ostream& out, const Board& board) { out << board_to_json(board).dump(2) << '\n'; }

// ---------------------------------------------------------------------------
// Splitting

namespace detail {

// Fisher-Yates over mt19937_64 with rejection sampling, so the permutation
// does not depend on the standard library's distribution implementation.
template <class T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do draw = rng(); while (draw >= limit);
    std::swap(v[i - 1], v[draw % bound]);
  }
}

inline std::size_t train_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace detail

// Seeded shuffle then prefix split. With `per_category` each category is split
// on its own and the parts are concatenated in first-appearance order.
inline DatasetSplit split_dataset(const Board& board, double train_fraction, std::uint64_t seed,
                                  bool per_category = false) {
  if (board.items.empty()) throw Error("cannot split an empty board");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error("train fraction must lie strictly between 0 and 1");

  std::vector<std::string> group_order;
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& item : board.items) {
    const std::string key = per_category ? item.category : std::string();
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) group_order.push_back(key);
    it->second.push_back(item.id);
  }

  DatasetSplit split;
  split.seed = seed;
  split.train_fraction = train_fraction;
  split.per_category = per_category;
  std::mt19937_64 rng(seed);
  for (const auto& key : group_order) {
    auto ids = groups[key];
    detail::seeded_shuffle(ids, rng);
    const auto cut = detail::train_count(ids.size(), train_fraction);
    split.train.insert(split.train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut));
    split.test.insert(split.test.end(), ids.begin() + static_cast<std::ptrdiff_t>(cut), ids.end());
  }
  return split;
}

}  // namespace forage
