#pragma once

// Triplet construction: positive pools from a taxonomy map and
// distance-weighted negative mining on the unit sphere.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "moodbridge/error.hpp"
#include "moodbridge/features.hpp"
#include "moodbridge/models.hpp"
#include "moodbridge/numcore.hpp"
#include "moodbridge/rng.hpp"
#include "moodbridge/taxonomy.hpp"

namespace moodbridge {

struct MinerConfig {
  std::size_t dim = 64;   // embedding dimension n
  double lambda = 10.0;   // clamp on the inverse density
  double epsilon = 0.05;  // distances are clamped to [epsilon, 2 - epsilon]
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 2) fail(ErrorKind::Config, "miner: embedding dim must be >= 2");
    if (!(lambda > 0.0)) fail(ErrorKind::Config, "miner: lambda must be > 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) fail(ErrorKind::Config, "miner: epsilon must be in (0, 1)");
  }
};

/// log of the normalizer 2^(n-2) B((n-1)/2, (n-1)/2) of the sphere distance density.
inline double log_sphere_density_normalizer(std::size_t n) {
  const double nn = static_cast<double>(n);
  const double a = (nn - 1.0) / 2.0;
  return (nn - 2.0) * std::log(2.0) + 2.0 * std::lgamma(a) - std::lgamma(2.0 * a);
}

/// log of the density of pairwise distances between uniform points on the
/// unit sphere in R^n:
///   q(d) = d^(n-2) (1 - d^2/4)^((n-3)/2) / (2^(n-2) B((n-1)/2, (n-1)/2)).
inline double log_sphere_distance_density(double d, std::size_t n, double log_norm) {
  const double nn = static_cast<double>(n);
  return (nn - 2.0) * std::log(d) + ((nn - 3.0) / 2.0) * std::log(1.0 - 0.25 * d * d) - log_norm;
}

inline double log_sphere_distance_density(double d, std::size_t n) {
  return log_sphere_distance_density(d, n, log_sphere_density_normalizer(n));
}

/// Selection probabilities proportional to min(lambda, 1/q(d)).
inline Vector negative_sampling_probabilities(std::span<const double> distances, const MinerConfig& cfg) {
  cfg.validate();
  const std::size_t m = distances.size();
  Vector logw(m);
  const double log_lambda = std::log(cfg.lambda);
  const double log_norm = log_sphere_density_normalizer(cfg.dim);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const double d = std::clamp(distances[i], cfg.epsilon, 2.0 - cfg.epsilon);
    logw[i] = std::min(log_lambda, -log_sphere_distance_density(d, cfg.dim, log_norm));
    if (std::isfinite(logw[i])) mx = std::max(mx, logw[i]);
  }
  Vector p(m, 0.0);
  double sum = 0.0;
  if (std::isfinite(mx)) {
    for (std::size_t i = 0; i < m; ++i) {
      p[i] = std::isfinite(logw[i]) ? std::exp(logw[i] - mx) : 0.0;
      sum += p[i];
    }
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(m));
    return p;
  }
  for (double& x : p) x /= sum;
  return p;
}

/// Index into `distances` drawn with negative_sampling_probabilities.
inline std::size_t sample_by_distance(std::span<const double> distances, const MinerConfig& cfg, Rng& rng) {
  if (distances.empty()) fail(ErrorKind::InvalidArgument, "distance_weighted_negative: no candidates");
  if (distances.size() == 1) return 0;
  const Vector p = negative_sampling_probabilities(distances, cfg);
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cum += p[i];
    if (u < cum) return i;
  }
  // Round-off left u past the final cumulative value; take the last positive weight.
  for (std::size_t i = p.size(); i-- > 0;)
    if (p[i] > 0.0) return i;
  return p.size() - 1;
}

/// Euclidean distance between two unit vectors.
inline double sphere_distance(std::span<const double> u, std::span<const double> v) {
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * dot(u, v)));
}

struct Candidate {
  std::string id;
  Vector embedding;  // unit norm
};

inline std::string distance_weighted_negative(std::span<const double> anchor, std::span<const Candidate> candidates,
                                              const MinerConfig& cfg, Rng& rng) {
  if (candidates.empty()) fail(ErrorKind::InvalidArgument, "distance_weighted_negative: no candidates");
  Vector d;
  d.reserve(candidates.size());
  for (const auto& c : candidates) d.push_back(sphere_distance(anchor, c.embedding));
  return candidates[sample_by_distance(d, cfg, rng)].id;
}

/// Music records whose tag is relevant to `text_tag` under `map`.
inline std::vector<std::size_t> positive_pool(const std::string& text_tag, const TaxonomyMap& map,
                                              const FeatureTable& music) {
  const auto relevant = relevant_set(map, text_tag);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < music.size(); ++i)
    if (is_relevant(relevant, music[i].tag)) out.push_back(i);
  if (out.empty()) fail(ErrorKind::Data, "empty positive pool for text tag '" + text_tag + "'");
  return out;
}

namespace detail {

inline Matrix tag_embeddings(const Model& model, const TripletSources& sources) {
  Matrix out = path_forward(model.params, {Part::TagBranch}, sources.tag_vectors).output();
  normalize_rows(out);
  return out;
}

inline std::uint64_t triplet_stream(TripletKind kind, std::size_t i) {
  return (static_cast<std::uint64_t>(kind) << 40) ^ static_cast<std::uint64_t>(i);
}

}  // namespace detail

/// One pass of triplets for an epoch, mined against the current embeddings.
///
/// CROSS: one triplet per text record (anchor text, positive music drawn
/// uniformly from the positive pool, negative music mined from its complement).
/// TAG_TEXT / TAG_MUSIC (three-branch only): one triplet per record, with the
/// record's tag as anchor, the record as positive and a mined negative of the
/// same modality carrying a different tag.
inline std::vector<TripletBatch> build_epoch_triplets(const TripletSources& sources, const TaxonomyMap& map,
                                                      const Model& model, const MinerConfig& cfg, Rng& rng) {
  if (!is_metric(model.config.kind)) fail(ErrorKind::Unsupported, "triplets are only built for metric strategies");
  cfg.validate();
  const FeatureTable& text = *sources.text;
  const FeatureTable& music = *sources.music;
  const std::uint64_t epoch_seed = rng.next();
  const Matrix text_emb = embed_table(model, text);
  const Matrix music_emb = embed_table(model, music);

  std::vector<TripletBatch> out;
  TripletBatch cross{TripletKind::Cross, {}};
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> pools;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const std::string& tag = text[i].tag;
    auto it = pools.find(tag);
    if (it == pools.end()) {
      auto pos = positive_pool(tag, map, music);
      std::vector<std::size_t> neg;
      const auto relevant = relevant_set(map, tag);
      for (std::size_t j = 0; j < music.size(); ++j)
        if (!is_relevant(relevant, music[j].tag)) neg.push_back(j);
      it = pools.emplace(tag, std::make_pair(std::move(pos), std::move(neg))).first;
    }
    const auto& [pos, neg] = it->second;
    if (neg.empty()) continue;
    Rng local(mix_seed(epoch_seed, detail::triplet_stream(TripletKind::Cross, i)));
    const std::size_t p = pos[local.below(pos.size())];
    Vector d(neg.size());
    for (std::size_t k = 0; k < neg.size(); ++k) d[k] = sphere_distance(text_emb.row(i), music_emb.row(neg[k]));
    const std::size_t n = neg[sample_by_distance(d, cfg, local)];
    cross.triplets.push_back({{Source::Text, i}, {Source::Music, p}, {Source::Music, n}});
  }
  out.push_back(std::move(cross));
  if (model.config.kind != StrategyKind::Metric3Branch) return out;

  const Matrix tag_emb = detail::tag_embeddings(model, sources);
  auto within = [&](TripletKind kind, const FeatureTable& table, const Matrix& emb, Source source) {
    TripletBatch batch{kind, {}};
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto tag_idx = sources.tag_index(table[i].tag);
      if (!tag_idx) fail(ErrorKind::Data, "tag '" + table[i].tag + "' has no word vector");
      std::vector<std::size_t> neg;
      Vector d;
      for (std::size_t j = 0; j < table.size(); ++j) {
        if (table[j].tag == table[i].tag) continue;
        neg.push_back(j);
        d.push_back(sphere_distance(tag_emb.row(*tag_idx), emb.row(j)));
      }
      if (neg.empty()) continue;
      Rng local(mix_seed(epoch_seed, detail::triplet_stream(kind, i)));
      const std::size_t n = neg[sample_by_distance(d, cfg, local)];
      batch.triplets.push_back({{Source::Tag, *tag_idx}, {source, i}, {source, n}});
    }
    return batch;
  };
  out.push_back(within(TripletKind::TagText, text, text_emb, Source::Text));
  out.push_back(within(TripletKind::TagMusic, music, music_emb, Source::Music));
  return out;
}

/// Number of triplets violating the tag partition: the positive must carry a
/// relevant tag and the negative an irrelevant one (for TAG_* batches the
/// relevant set is the anchor tag itself).
inline std::size_t count_partition_violations(const TripletBatch& batch, const TripletSources& sources,
                                              const TaxonomyMap& map) {
  auto tag_of = [&](const ItemRef& r) -> const std::string& {
    switch (r.source) {
      case Source::Text: return (*sources.text)[r.index].tag;
      case Source::Music: return (*sources.music)[r.index].tag;
      case Source::Tag: return sources.tag_names.at(r.index);
    }
    fail(ErrorKind::InvalidArgument, "bad item reference");
  };
  std::size_t bad = 0;
  for (const auto& t : batch.triplets) {
    if (t.positive == t.negative) {
      ++bad;
      continue;
    }
    std::vector<std::string> relevant;
    if (batch.kind == TripletKind::Cross)
      relevant = relevant_set(map, tag_of(t.anchor));
    else
      relevant = {tag_of(t.anchor)};
    if (!is_relevant(relevant, tag_of(t.positive)) || is_relevant(relevant, tag_of(t.negative))) ++bad;
  }
  return bad;
}

}  // namespace moodbridge
