#pragma once

// Ranked-retrieval evaluation: P@k, reciprocal rank, per-class and macro
// aggregation with taxonomy-mapped relevance, and confusion matrices.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "moodbridge/error.hpp"
#include "moodbridge/features.hpp"
#include "moodbridge/models.hpp"
#include "moodbridge/retrieval.hpp"
#include "moodbridge/taxonomy.hpp"

namespace moodbridge {

/// Fraction of the top-k slots holding a relevant tag. Slots beyond the end
/// of a short ranking count as irrelevant.
inline double precision_at_k(std::span<const std::string> ranked_tags, const std::vector<std::string>& relevant,
                             std::size_t k = 5) {
  if (k == 0) fail(ErrorKind::InvalidArgument, "precision_at_k: k must be >= 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked_tags.size() && i < k; ++i)
    if (is_relevant(relevant, ranked_tags[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(k);
}

/// 1 / rank of the first relevant tag, 0 when none is relevant.
inline double reciprocal_rank(std::span<const std::string> ranked_tags, const std::vector<std::string>& relevant) {
  for (std::size_t i = 0; i < ranked_tags.size(); ++i)
    if (is_relevant(relevant, ranked_tags[i])) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

inline std::vector<std::string> tags_of(const RankedResult& r) {
  std::vector<std::string> out;
  out.reserve(r.hits.size());
  for (const auto& h : r.hits) out.push_back(h.tag);
  return out;
}

struct QueryOutcome {
  std::string tag;  // text tag of the query
  double precision = 0.0;
  double reciprocal_rank = 0.0;
};

struct ClassMetrics {
  std::string tag;
  double p_at_k = 0.0;
  double mrr = 0.0;
  std::size_t queries = 0;
};

struct EvalReport {
  Scheme scheme = Scheme::Manual;
  std::string mapping_provenance;
  StrategyKind kind = StrategyKind::Metric3Branch;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::size_t k = 5;
  std::vector<ClassMetrics> per_class;  // classes with at least one query, in vocabulary order
  std::vector<std::string> excluded_classes;
  double macro_p_at_k = 0.0;
  double macro_mrr = 0.0;
  double micro_p_at_k = 0.0;
  double micro_mrr = 0.0;
  std::size_t queries = 0;
};

/// Per-class means, then unweighted means over the classes that have queries.
inline EvalReport aggregate(const std::vector<QueryOutcome>& outcomes, const std::vector<std::string>& class_order) {
  EvalReport r;
  for (const auto& tag : class_order) {
    ClassMetrics m{tag, 0.0, 0.0, 0};
    for (const auto& o : outcomes) {
      if (o.tag != tag) continue;
      m.p_at_k += o.precision;
      m.mrr += o.reciprocal_rank;
      ++m.queries;
    }
    if (m.queries == 0) {
      r.excluded_classes.push_back(tag);
      continue;
    }
    m.p_at_k /= static_cast<double>(m.queries);
    m.mrr /= static_cast<double>(m.queries);
    r.per_class.push_back(m);
  }
  for (const auto& m : r.per_class) {
    r.macro_p_at_k += m.p_at_k;
    r.macro_mrr += m.mrr;
  }
  if (!r.per_class.empty()) {
    r.macro_p_at_k /= static_cast<double>(r.per_class.size());
    r.macro_mrr /= static_cast<double>(r.per_class.size());
  }
  std::size_t counted = 0;
  for (const auto& o : outcomes) {
    bool known = false;
    for (const auto& t : class_order) known = known || t == o.tag;
    if (!known) continue;
    r.micro_p_at_k += o.precision;
    r.micro_mrr += o.reciprocal_rank;
    ++counted;
  }
  if (counted) {
    r.micro_p_at_k /= static_cast<double>(counted);
    r.micro_mrr /= static_cast<double>(counted);
  }
  r.queries = counted;
  return r;
}

/// Music index over the embeddings of `music` (embedding strategies only).
inline EmbeddingIndex music_index(const Model& model, const FeatureTable& music) {
  const auto space = model.space();
  if (!space) fail(ErrorKind::Unsupported, "music_index needs an embedding strategy");
  const Matrix emb = embed_table(model, music);
  std::vector<IndexEntry> entries;
  entries.reserve(music.size());
  for (std::size_t i = 0; i < music.size(); ++i)
    entries.push_back({music[i].id, music[i].tag, {*space, Vector(emb.row(i).begin(), emb.row(i).end())}});
  return build_index(std::move(entries), *space);
}

/// Full rankings of `music` for every record of `text`, in text order.
inline std::vector<RankedResult> rank_all(const Model& model, const FeatureTable& text, const FeatureTable& music) {
  std::vector<RankedResult> out;
  out.reserve(text.size());
  if (is_classifier(model.config.kind)) {
    const ClassificationRanker ranker(model, music);
    for (const auto& r : text.records()) out.push_back(ranker.rank(r));
    return out;
  }
  const EmbeddingIndex index = music_index(model, music);
  const Matrix emb = embed_table(model, text);
  const std::size_t k = std::max<std::size_t>(1, index.size());
  for (std::size_t i = 0; i < text.size(); ++i)
    out.push_back(query(index, {index.space(), Vector(emb.row(i).begin(), emb.row(i).end())}, k, text[i].id));
  return out;
}

/// Macro P@k / MRR of text-to-music retrieval with relevance from `map`.
inline EvalReport evaluate(const Model& model, const FeatureTable& text, const FeatureTable& music,
                           const TaxonomyMap& map, std::size_t k = 5) {
  if (text.empty() || music.empty()) fail(ErrorKind::Data, "evaluate: empty split");
  const auto rankings = rank_all(model, text, music);
  std::vector<QueryOutcome> outcomes;
  outcomes.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto relevant = relevant_set(map, text[i].tag);
    const auto tags = tags_of(rankings[i]);
    outcomes.push_back({text[i].tag, precision_at_k(tags, relevant, k), reciprocal_rank(tags, relevant)});
  }
  EvalReport r = aggregate(outcomes, model.text_vocab.tags());
  r.scheme = map.scheme();
  r.mapping_provenance = map.provenance();
  r.kind = model.config.kind;
  r.seed = model.config.seed;
  r.k = k;
  return r;
}

/// Rows = true class, columns = predicted class, over the head of the table's modality.
inline Matrix confusion_matrix(const Model& model, const FeatureTable& table) {
  const Vocabulary& vocab = table.modality() == Modality::Text ? model.text_vocab : model.music_vocab;
  Matrix m(vocab.size(), vocab.size());
  const auto predicted = predict_classes(model, table);
  for (std::size_t i = 0; i < table.size(); ++i) m(vocab.require_index(table[i].tag), predicted[i]) += 1.0;
  return m;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["scheme"] = std::string(to_string(r.scheme));
  j["mapping_provenance"] = r.mapping_provenance;
  j["model_kind"] = std::string(to_string(r.kind));
  j["seed"] = r.seed;
  j["config_digest"] = r.config_digest;
  j["k"] = r.k;
  j["queries"] = r.queries;
  j["macro_p_at_k"] = r.macro_p_at_k;
  j["macro_mrr"] = r.macro_mrr;
  j["micro_p_at_k"] = r.micro_p_at_k;
  j["micro_mrr"] = r.micro_mrr;
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (const auto& c : r.per_class) {
    nlohmann::ordered_json cj;
    cj["p_at_k"] = c.p_at_k;
    cj["mrr"] = c.mrr;
    cj["queries"] = c.queries;
    classes[c.tag] = cj;
  }
  j["per_class"] = classes;
  j["excluded_classes"] = r.excluded_classes;
  return j;
}

}  // namespace moodbridge
