#pragma once

// Exact nearest-neighbor search over music embeddings.

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "moodbridge/error.hpp"
#include "moodbridge/numcore.hpp"

namespace moodbridge {

enum class Metric { Euclidean, Cosine };

inline std::string_view to_string(Metric m) { return m == Metric::Euclidean ? "EUCLIDEAN" : "COSINE"; }

struct EmbeddingSpaceSpec {
  std::size_t dim = 0;
  Metric metric = Metric::Cosine;

  friend bool operator==(const EmbeddingSpaceSpec&, const EmbeddingSpaceSpec&) = default;
};

inline double space_distance(const EmbeddingSpaceSpec& space, std::span<const double> a, std::span<const double> b) {
  return space.metric == Metric::Euclidean ? euclidean_distance(a, b) : cosine_distance(a, b);
}

struct EmbeddingVector {
  EmbeddingSpaceSpec space;
  Vector values;
};

struct IndexEntry {
  std::string id;
  std::string tag;
  EmbeddingVector embedding;
};

struct Hit {
  std::string id;
  std::string tag;
  double distance = 0.0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

/// Hits sorted by distance, ties by ascending id.
struct RankedResult {
  std::string query_id;
  std::vector<Hit> hits;
};

inline bool hit_order(const Hit& a, const Hit& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.id < b.id;
}

class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  /// All entries must share `space`; ids must be unique.
  EmbeddingIndex(EmbeddingSpaceSpec space, std::vector<IndexEntry> entries) : space_(space) {
    std::unordered_set<std::string> ids;
    for (const auto& e : entries) {
      if (!(e.embedding.space == space_))
        fail(ErrorKind::InvalidArgument, "build_index: entry '" + e.id + "' is in a different embedding space");
      if (e.embedding.values.size() != space_.dim)
        fail(ErrorKind::Dimension, "build_index: entry '" + e.id + "' has the wrong dimension");
      if (!ids.insert(e.id).second) fail(ErrorKind::InvalidArgument, "build_index: duplicate id '" + e.id + "'");
    }
    entries_ = std::move(entries);
  }

  const EmbeddingSpaceSpec& space() const { return space_; }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  EmbeddingSpaceSpec space_;
  std::vector<IndexEntry> entries_;
};

inline EmbeddingIndex build_index(std::vector<IndexEntry> entries, std::optional<EmbeddingSpaceSpec> space = std::nullopt) {
  if (!space && !entries.empty()) space = entries.front().embedding.space;
  return EmbeddingIndex(space.value_or(EmbeddingSpaceSpec{}), std::move(entries));
}

/// Top-k entries by the index's metric.
inline RankedResult query(const EmbeddingIndex& index, const EmbeddingVector& q, std::size_t k,
                          std::string query_id = {}) {
  if (k == 0) fail(ErrorKind::InvalidArgument, "query: k must be >= 1");
  RankedResult result{std::move(query_id), {}};
  if (index.size() == 0) return result;
  if (!(q.space == index.space())) fail(ErrorKind::InvalidArgument, "query: embedding space does not match the index");
  std::vector<Hit> hits;
  hits.reserve(index.size());
  for (const auto& e : index.entries())
    hits.push_back({e.id, e.tag, space_distance(index.space(), q.values, e.embedding.values)});
  const std::size_t n = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), hit_order);
  hits.resize(n);
  result.hits = std::move(hits);
  return result;
}

}  // namespace moodbridge
