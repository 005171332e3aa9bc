#pragma once

// Text-tag -> music-tag mappings between heterogeneous emotion vocabularies.

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "moodbridge/error.hpp"
#include "moodbridge/features.hpp"
#include "moodbridge/numcore.hpp"

namespace moodbridge {

enum class Scheme { VA, W2V, Manual };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::VA: return "VA";
    case Scheme::W2V: return "W2V";
    case Scheme::Manual: return "MANUAL";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  const std::string n = normalize_tag(s);
  if (n == "va") return Scheme::VA;
  if (n == "w2v") return Scheme::W2V;
  if (n == "manual") return Scheme::Manual;
  fail(ErrorKind::Config, "unknown mapping scheme '" + std::string(s) + "'");
}

/// Total map from the text vocabulary to non-empty ordered music-tag sets.
class TaxonomyMap {
 public:
  TaxonomyMap() = default;
  TaxonomyMap(Scheme scheme, std::string provenance) : scheme_(scheme), provenance_(std::move(provenance)) {}

  Scheme scheme() const { return scheme_; }
  const std::string& provenance() const { return provenance_; }
  const std::vector<std::string>& text_tags() const { return order_; }

  void set(const std::string& text_tag, std::vector<std::string> music_tags) {
    const std::string key = normalize_tag(text_tag);
    if (music_tags.empty()) fail(ErrorKind::Data, "mapping for '" + key + "' is empty");
    for (auto& m : music_tags) m = normalize_tag(m);
    if ((scheme_ == Scheme::VA || scheme_ == Scheme::W2V) && music_tags.size() != 1)
      fail(ErrorKind::Data, "VA and W2V mappings must be single-valued ('" + key + "')");
    if (!map_.count(key)) order_.push_back(key);
    map_[key] = std::move(music_tags);
  }

  bool contains(const std::string& text_tag) const { return map_.count(normalize_tag(text_tag)) > 0; }

  const std::vector<std::string>& at(const std::string& text_tag) const {
    auto it = map_.find(normalize_tag(text_tag));
    if (it == map_.end()) fail(ErrorKind::Data, "tag '" + text_tag + "' is not in the taxonomy map");
    return it->second;
  }

  /// Checks totality over `text_vocab` and that every value is a music tag.
  void validate(const Vocabulary& text_vocab, const Vocabulary& music_vocab) const {
    for (const auto& t : text_vocab.tags())
      if (!map_.count(t)) fail(ErrorKind::Data, "taxonomy map has no entry for text tag '" + t + "'");
    for (const auto& [t, ms] : map_)
      for (const auto& m : ms)
        if (!music_vocab.contains(m)) fail(ErrorKind::Data, "taxonomy maps '" + t + "' to unknown music tag '" + m + "'");
  }

  friend bool operator==(const TaxonomyMap& a, const TaxonomyMap& b) {
    return a.scheme_ == b.scheme_ && a.map_ == b.map_;
  }

 private:
  Scheme scheme_ = Scheme::Manual;
  std::string provenance_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<std::string>> map_;
};

inline std::vector<std::string> relevant_set(const TaxonomyMap& map, const std::string& text_tag) {
  return map.at(text_tag);
}

inline bool is_relevant(const std::vector<std::string>& relevant, const std::string& music_tag) {
  return std::find(relevant.begin(), relevant.end(), music_tag) != relevant.end();
}

namespace detail {

[[noreturn]] inline void missing_tags(const std::string& what, const std::vector<std::string>& missing) {
  std::string msg = what + ":";
  for (const auto& m : missing) msg += " " + m;
  fail(ErrorKind::Data, msg);
}

// argmin over music tags; strict '<' keeps the first tag in vocabulary order on ties.
template <class Point, class Dist>
TaxonomyMap nearest_tag_map(Scheme scheme, std::string provenance, const Vocabulary& text_vocab,
                            const Vocabulary& music_vocab, const std::map<std::string, Point>& points, Dist&& dist) {
  TaxonomyMap map(scheme, std::move(provenance));
  for (const auto& t : text_vocab.tags()) {
    std::size_t best = 0;
    double best_d = 0.0;
    for (std::size_t j = 0; j < music_vocab.size(); ++j) {
      const double d = dist(points.at(t), points.at(music_vocab.tags()[j]));
      if (j == 0 || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    map.set(t, {music_vocab.tags()[best]});
  }
  return map;
}

}  // namespace detail

/// Nearest music tag in (valence, arousal); dominance is ignored.
inline TaxonomyMap map_va(const Vocabulary& text_vocab, const Vocabulary& music_vocab, const VadLexicon& lexicon,
                          const std::string& provenance = "VAD lexicon") {
  std::map<std::string, Vector> points;
  std::vector<std::string> missing;
  for (const auto* vocab : {&text_vocab, &music_vocab})
    for (const auto& t : vocab->tags()) {
      if (auto e = lexicon.resolve(t))
        points[t] = {e->valence, e->arousal};
      else
        missing.push_back(t);
    }
  if (!missing.empty()) detail::missing_tags("tags missing from the VAD lexicon", missing);
  return detail::nearest_tag_map(Scheme::VA, provenance, text_vocab, music_vocab, points,
                                 [](const Vector& a, const Vector& b) { return euclidean_distance(a, b); });
}

/// Nearest music tag by cosine distance in a word-embedding space.
inline TaxonomyMap map_w2v(const Vocabulary& text_vocab, const Vocabulary& music_vocab,
                           const WordEmbeddingTable& embeddings, const std::string& provenance = "word embeddings") {
  std::map<std::string, Vector> points;
  std::vector<std::string> missing;
  for (const auto* vocab : {&text_vocab, &music_vocab})
    for (const auto& t : vocab->tags()) {
      if (const Vector* v = embeddings.resolve(t))
        points[t] = *v;
      else
        missing.push_back(t);
    }
  if (!missing.empty()) detail::missing_tags("tags missing from the embedding table", missing);
  return detail::nearest_tag_map(Scheme::W2V, provenance, text_vocab, music_vocab, points,
                                 [](const Vector& a, const Vector& b) { return cosine_distance(a, b); });
}

// ---------------------------------------------------------------------------
// Built-in reference mappings for the Alm and ISEAR text datasets onto the
// AudioSet mood vocabulary.

enum class Dataset { Alm, Isear };

inline Dataset parse_dataset(std::string_view s) {
  const std::string n = normalize_tag(s);
  if (n == "alm") return Dataset::Alm;
  if (n == "isear") return Dataset::Isear;
  fail(ErrorKind::Config, "unknown dataset '" + std::string(s) + "' (expected ALM or ISEAR)");
}

struct ReferenceRow {
  Dataset dataset;
  const char* original;
  const char* va;
  const char* w2v;
  std::vector<std::string> manual;
};

inline const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {Dataset::Alm, "anger", "angry", "angry", {"angry"}},
      {Dataset::Alm, "fearful", "sad", "scary", {"scary"}},
      {Dataset::Alm, "happy", "happy", "happy", {"exciting", "funny", "happy"}},
      {Dataset::Alm, "sad", "sad", "sad", {"sad"}},
      {Dataset::Alm, "surprised", "exciting", "happy", {"exciting"}},
      {Dataset::Isear, "anger", "angry", "angry", {"angry"}},
      {Dataset::Isear, "disgust", "angry", "angry", {"angry", "scary"}},
      {Dataset::Isear, "fear", "angry", "angry", {"scary"}},
      {Dataset::Isear, "guilt", "sad", "angry", {"angry", "sad"}},
      {Dataset::Isear, "joy", "exciting", "tender", {"exciting", "funny", "happy"}},
      {Dataset::Isear, "sadness", "sad", "tender", {"sad"}},
      {Dataset::Isear, "shame", "angry", "sad", {"angry", "sad"}},
  };
  return rows;
}

inline const char* reference_provenance() { return "built-in reference table (Alm/ISEAR -> AudioSet moods)"; }

inline Vocabulary audioset_mood_vocabulary() {
  return Vocabulary(Modality::Music, {"happy", "funny", "sad", "tender", "exciting", "angry", "scary"});
}

inline Vocabulary reference_text_vocabulary(Dataset d) {
  std::vector<std::string> tags;
  for (const auto& r : reference_rows())
    if (r.dataset == d) tags.push_back(r.original);
  return Vocabulary(Modality::Text, tags);
}

/// Built-in mapping for `d` under `scheme`, verbatim from the reference table.
inline TaxonomyMap reference_map(Dataset d, Scheme scheme) {
  TaxonomyMap map(scheme, reference_provenance());
  for (const auto& r : reference_rows()) {
    if (r.dataset != d) continue;
    switch (scheme) {
      case Scheme::VA: map.set(r.original, {r.va}); break;
      case Scheme::W2V: map.set(r.original, {r.w2v}); break;
      case Scheme::Manual: map.set(r.original, r.manual); break;
    }
  }
  return map;
}

inline TaxonomyMap manual_map(Dataset d) { return reference_map(d, Scheme::Manual); }

struct MapDifference {
  std::string text_tag;
  std::vector<std::string> computed;
  std::vector<std::string> expected;
};

/// Entries where `computed` disagrees with `expected`, over expected's keys.
inline std::vector<MapDifference> diff_maps(const TaxonomyMap& computed, const TaxonomyMap& expected) {
  std::vector<MapDifference> out;
  for (const auto& t : expected.text_tags()) {
    std::vector<std::string> got;
    if (computed.contains(t)) got = computed.at(t);
    if (got != expected.at(t)) out.push_back({t, got, expected.at(t)});
  }
  return out;
}

// TSV: scheme<TAB>text_tag<TAB>music_tags(comma-joined)
inline std::string format_taxonomy(const TaxonomyMap& map) {
  std::string out;
  for (const auto& t : map.text_tags()) {
    out += std::string(to_string(map.scheme())) + "\t" + t + "\t";
    const auto& ms = map.at(t);
    for (std::size_t i = 0; i < ms.size(); ++i) out += (i ? "," : "") + ms[i];
    out += "\n";
  }
  return out;
}

inline TaxonomyMap parse_taxonomy(const std::string& text, const std::string& origin) {
  const auto lines = detail::lines_of(text);
  std::optional<Scheme> scheme;
  TaxonomyMap map;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (detail::trim(lines[ln]).empty() || lines[ln][0] == '#') continue;
    const auto cols = detail::split(lines[ln], '\t');
    if (cols.size() != 3) detail::parse_error(origin, ln + 1, "expected scheme<TAB>text_tag<TAB>music_tags");
    Scheme s;
    try {
      s = parse_scheme(cols[0]);
    } catch (const Error& e) {
      detail::parse_error(origin, ln + 1, e.what());
    }
    if (!scheme) {
      scheme = s;
      map = TaxonomyMap(s, origin);
    } else if (*scheme != s) {
      detail::parse_error(origin, ln + 1, "mixed schemes in one map file");
    }
    try {
      map.set(cols[1], detail::split(cols[2], ','));
    } catch (const Error& e) {
      detail::parse_error(origin, ln + 1, e.what());
    }
  }
  if (!scheme) fail(ErrorKind::Data, origin + ": empty taxonomy map");
  return map;
}

inline TaxonomyMap load_taxonomy(const std::string& path) { return parse_taxonomy(detail::read_file(path), path); }

}  // namespace moodbridge
