#pragma once

// Exact cosine k-nearest-neighbor search over item embeddings.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "forage/catalog.hpp"
#include "forage/error.hpp"

namespace forage {

struct Neighbor {
  std::string id;
  double similarity = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> unit(std::span<const double> v, std::string_view who) {
  double n2 = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) throw ValidationError("vector for '" + std::string(who) + "' is not finite", std::string(who));
    n2 += x * x;
  }
  const double n = std::sqrt(n2);
  if (n == 0.0) throw ValidationError("vector for '" + std::string(who) + "' has zero norm", std::string(who));
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

inline bool ranks_before(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

}  // namespace detail

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  double aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw Error("cosine: zero vector");
  return std::clamp(detail::dot(a, b) / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

// Immutable after construction; safe for concurrent queries.
class VectorIndex {
public:
  struct Entry {
    std::string id;
    std::vector<double> unit;
  };

  VectorIndex() = default;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }

  const Entry* find(std::string_view id) const {
    const auto it = pos_.find(std::string(id));
    return it == pos_.end() ? nullptr : &entries_[it->second];
  }

  // Top-min(k, n) by similarity descending, ties by id ascending.
  std::vector<Neighbor> knn(std::span<const double> query, std::size_t k,
                            std::optional<std::string_view> exclude = std::nullopt) const {
    if (k == 0) throw Error("knn: k must be positive");
    if (query.size() != dim_ && !entries_.empty())
      throw Error("knn: query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                  std::to_string(dim_));
    const auto q = detail::unit(query, "query");
    std::vector<Neighbor> all;
    all.reserve(entries_.size());
    for (const auto& e : entries_) {
      if (exclude && e.id == *exclude) continue;
      all.push_back({e.id, std::clamp(detail::dot(q, e.unit), -1.0, 1.0)});
    }
    const auto take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), detail::ranks_before);
    all.resize(take);
    return all;
  }

  std::vector<Neighbor> knn(const EmbeddingVector& query, std::size_t k,
                            std::optional<std::string_view> exclude = std::nullopt) const {
    return knn(std::span<const double>(query.values), k, exclude);
  }

  std::vector<Neighbor> similar_items(std::string_view item_id, std::size_t k) const {
    const auto* e = find(item_id);
    if (!e) throw Error("similar_items: unknown item '" + std::string(item_id) + "'");
    return knn(std::span<const double>(e->unit), k, item_id);
  }

  // Similarity between two indexed items.
  double similarity(std::string_view a, std::string_view b) const {
    const auto* ea = find(a);
    const auto* eb = find(b);
    if (!ea || !eb) throw Error("similarity: unknown item");
    return std::clamp(detail::dot(ea->unit, eb->unit), -1.0, 1.0);
  }

  template <class Items>
  friend VectorIndex build_index(const Items& items);

private:
  std::size_t dim_ = 0;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> pos_;
};

// One normalized entry per indexable item, in input order. Items without an
// embedding are skipped.
template <class Items>
VectorIndex build_index(const Items& items) {
  VectorIndex index;
  for (const ImageItem& item : items) {
    if (!item.indexable()) continue;
    const auto& v = item.embedding->values;
    if (index.entries_.empty()) {
      if (v.empty()) throw ValidationError("item '" + item.id + "' has an empty embedding", item.id);
      index.dim_ = v.size();
    } else if (v.size() != index.dim_) {
      throw ValidationError("item '" + item.id + "' has embedding dimension " + std::to_string(v.size()) +
                                ", index dimension is " + std::to_string(index.dim_),
                            item.id);
    }
    if (index.pos_.contains(item.id)) throw ValidationError("duplicate item id '" + item.id + "'", item.id);
    index.pos_.emplace(item.id, index.entries_.size());
    index.entries_.push_back({item.id, detail::unit(v, item.id)});
  }
  return index;
}

inline VectorIndex build_index(const Board& board) { return build_index(board.items); }

}  // namespace forage
