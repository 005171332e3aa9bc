#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "moodbridge/retrieval.hpp"
#include "test_util.hpp"

using namespace moodbridge;

namespace {

const EmbeddingSpaceSpec kVa{2, Metric::Euclidean};

IndexEntry entry(const std::string& id, const EmbeddingSpaceSpec& s, Vector v, const std::string& tag = "t") {
  return {id, tag, {s, std::move(v)}};
}

std::vector<IndexEntry> random_entries(std::size_t n, const EmbeddingSpaceSpec& s, Rng& rng, bool unit) {
  std::vector<IndexEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vector v = mbtest::random_vector(s.dim, rng);
    if (unit) v = normalized(v);
    out.push_back(entry("song" + std::to_string(1000 + i), s, v, "tag" + std::to_string(i % 7)));
  }
  return out;
}

// Brute-force ranking: explicit distance, stable sort on (distance, id).
std::vector<std::pair<double, std::string>> brute(const std::vector<IndexEntry>& es, const Vector& q, Metric m) {
  std::vector<std::pair<double, std::string>> out;
  for (const auto& e : es) {
    const Vector& v = e.embedding.values;
    double d = 0;
    if (m == Metric::Euclidean) {
      for (std::size_t i = 0; i < v.size(); ++i) d += (q[i] - v[i]) * (q[i] - v[i]);
      d = std::sqrt(d);
    } else {
      double qv = 0, qq = 0, vv = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        qv += q[i] * v[i];
        qq += q[i] * q[i];
        vv += v[i] * v[i];
      }
      d = 1.0 - qv / (std::sqrt(qq) * std::sqrt(vv));
    }
    out.emplace_back(d, e.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(BuildIndex, EmptyIndexGivesEmptyHits) {
  const EmbeddingIndex idx = build_index({});
  EXPECT_EQ(idx.size(), 0u);
  EXPECT_TRUE(query(idx, {kVa, {0.0, 0.0}}, 5).hits.empty());
}

TEST(BuildIndex, DuplicateIdRejected) {
  EXPECT_THROW(build_index({entry("a", kVa, {0, 0}), entry("b", kVa, {1, 0}), entry("a", kVa, {0, 1})}), Error);
}

TEST(BuildIndex, MixedSpacesRejected) {
  const EmbeddingSpaceSpec cos2{2, Metric::Cosine};
  EXPECT_THROW(build_index({entry("a", kVa, {0, 0}), entry("b", cos2, {1, 0})}), Error);
  EXPECT_THROW(build_index({entry("a", kVa, {0, 0}), entry("b", kVa, {1, 0, 0})}), Error);
}

TEST(Query, VaHandDistances) {
  const EmbeddingIndex idx = build_index({entry("far", kVa, {0.3, 0.4}), entry("near", kVa, {0.0, 0.1})});
  const RankedResult r = query(idx, {kVa, {0.0, 0.0}}, 10, "q");
  ASSERT_EQ(r.hits.size(), 2u);
  EXPECT_EQ(r.query_id, "q");
  EXPECT_EQ(r.hits[0].id, "near");
  EXPECT_NEAR(r.hits[0].distance, 0.1, 1e-15);
  EXPECT_EQ(r.hits[1].id, "far");
  EXPECT_NEAR(r.hits[1].distance, 0.5, 1e-15);
}

TEST(Query, SpaceMismatchAndZeroK) {
  const EmbeddingIndex idx = build_index({entry("a", kVa, {0, 0})});
  EXPECT_THROW(query(idx, {{2, Metric::Cosine}, {1.0, 0.0}}, 1), Error);
  EXPECT_THROW(query(idx, {kVa, {0.0, 0.0}}, 0), Error);
}

TEST(Query, TiesBrokenByAscendingId) {
  const EmbeddingIndex idx =
      build_index({entry("c", kVa, {1, 0}), entry("a", kVa, {0, 1}), entry("b", kVa, {-1, 0}), entry("z", kVa, {0, 0.5})});
  const RankedResult r = query(idx, {kVa, {0.0, 0.0}}, 4);
  std::vector<std::string> ids;
  for (const auto& h : r.hits) ids.push_back(h.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"z", "a", "b", "c"}));
}

TEST(Query, LargeKReturnsEverythingSorted) {
  Rng rng(1);
  const EmbeddingSpaceSpec s{4, Metric::Cosine};
  const auto es = random_entries(30, s, rng, false);
  const EmbeddingIndex idx = build_index(es);
  const RankedResult r = query(idx, {s, mbtest::random_vector(4, rng)}, 1000);
  ASSERT_EQ(r.hits.size(), 30u);
  for (std::size_t i = 1; i < r.hits.size(); ++i) EXPECT_FALSE(hit_order(r.hits[i], r.hits[i - 1]));
}

TEST(Query, SelfRetrievalComesFirst) {
  Rng rng(2);
  for (Metric m : {Metric::Cosine, Metric::Euclidean}) {
    const EmbeddingSpaceSpec s{8, m};
    const auto es = random_entries(100, s, rng, m == Metric::Cosine);
    const EmbeddingIndex idx = build_index(es);
    for (const auto& e : es) {
      const RankedResult r = query(idx, e.embedding, 1);
      ASSERT_EQ(r.hits.size(), 1u);
      EXPECT_EQ(r.hits[0].id, e.id);
      EXPECT_NEAR(r.hits[0].distance, 0.0, 1e-12);
    }
  }
}

TEST(Query, MatchesBruteForceOracle) {
  Rng rng(3);
  for (Metric m : {Metric::Cosine, Metric::Euclidean}) {
    const EmbeddingSpaceSpec s{16, m};
    const auto es = random_entries(200, s, rng, false);
    const EmbeddingIndex idx = build_index(es);
    for (int trial = 0; trial < 20; ++trial) {
      const Vector q = mbtest::random_vector(16, rng);
      const auto oracle = brute(es, q, m);
      const RankedResult r = query(idx, {s, q}, 5);
      ASSERT_EQ(r.hits.size(), 5u);
      for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(r.hits[i].id, oracle[i].second);
        EXPECT_NEAR(r.hits[i].distance, oracle[i].first, 1e-12);
      }
    }
  }
}

TEST(Query, SmallerKIsPrefix) {
  Rng rng(4);
  const EmbeddingSpaceSpec s{6, Metric::Cosine};
  const auto es = random_entries(80, s, rng, true);
  // Duplicate a few vectors so ties are present.
  auto with_ties = es;
  for (int i = 0; i < 10; ++i) with_ties.push_back(entry("dup" + std::to_string(i), s, es[i].embedding.values));
  const EmbeddingIndex idx = build_index(with_ties);
  for (int trial = 0; trial < 10; ++trial) {
    const EmbeddingVector q{s, normalized(mbtest::random_vector(6, rng))};
    const auto full = query(idx, q, 90).hits;
    for (std::size_t k : {1u, 3u, 10u, 45u}) {
      const auto part = query(idx, q, k).hits;
      ASSERT_EQ(part.size(), k);
      EXPECT_TRUE(std::equal(part.begin(), part.end(), full.begin()));
    }
  }
}

TEST(Query, CosineAndEuclideanAgreeOnSphere) {
  Rng rng(5);
  const EmbeddingSpaceSpec cs{10, Metric::Cosine}, es{10, Metric::Euclidean};
  std::vector<IndexEntry> cos_entries, euc_entries;
  for (int i = 0; i < 150; ++i) {
    const Vector v = normalized(mbtest::random_vector(10, rng));
    cos_entries.push_back(entry("s" + std::to_string(i), cs, v));
    euc_entries.push_back(entry("s" + std::to_string(i), es, v));
  }
  const EmbeddingIndex ci = build_index(cos_entries), ei = build_index(euc_entries);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector q = normalized(mbtest::random_vector(10, rng));
    const auto a = query(ci, {cs, q}, 150).hits;
    const auto b = query(ei, {es, q}, 150).hits;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].id, b[i].id);
      // |u - v|^2 = 2 (1 - cos) on the unit sphere.
      EXPECT_NEAR(b[i].distance * b[i].distance, 2.0 * a[i].distance, 1e-12);
    }
  }
}
