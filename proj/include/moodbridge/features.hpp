#pragma once

// Feature interchange files, lexicons, word-embedding tables and splits.
//
// Feature file layout (UTF-8, one record per line):
//   #dim=<D> modality=<TEXT|MUSIC>
//   id<TAB>tag<TAB>v1,v2,...,vD

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "moodbridge/error.hpp"
#include "moodbridge/numcore.hpp"
#include "moodbridge/rng.hpp"

namespace moodbridge {

enum class Modality { Text, Music };

inline std::string_view to_string(Modality m) { return m == Modality::Text ? "TEXT" : "MUSIC"; }

inline Modality parse_modality(std::string_view s) {
  if (s == "TEXT") return Modality::Text;
  if (s == "MUSIC") return Modality::Music;
  fail(ErrorKind::Data, "unknown modality '" + std::string(s) + "'");
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  return lines;
}

[[noreturn]] inline void parse_error(const std::string& path, std::size_t line, const std::string& what) {
  fail(ErrorKind::Data, path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace detail

/// Lowercase ASCII, trimmed, internal spaces joined with underscores.
inline std::string normalize_tag(std::string_view raw) {
  std::string t = detail::trim(raw);
  std::string out;
  out.reserve(t.size());
  bool pending_space = false;
  for (char ch : t) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back('_');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

struct FeatureRecord {
  std::string id;
  Modality modality = Modality::Text;
  std::string tag;
  Vector features;
};

/// Records of a single modality with a common feature dimension, in file order.
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(Modality modality, std::size_t dim) : modality_(modality), dim_(dim) {}

  Modality modality() const { return modality_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<FeatureRecord>& records() const { return records_; }
  const FeatureRecord& operator[](std::size_t i) const { return records_[i]; }

  void add(FeatureRecord r) {
    if (r.modality != modality_)
      fail(ErrorKind::Data, "record '" + r.id + "' has modality " + std::string(to_string(r.modality)) +
                                ", table is " + std::string(to_string(modality_)));
    if (r.features.size() != dim_)
      fail(ErrorKind::Data, "record '" + r.id + "' has " + std::to_string(r.features.size()) +
                                " features, expected " + std::to_string(dim_));
    if (!all_finite(r.features)) fail(ErrorKind::Data, "record '" + r.id + "' has a non-finite feature");
    r.tag = normalize_tag(r.tag);
    if (r.id.empty() || r.tag.empty()) fail(ErrorKind::Data, "record with empty id or tag");
    if (index_.count(r.id)) fail(ErrorKind::Data, "duplicate id '" + r.id + "'");
    index_.emplace(r.id, records_.size());
    records_.push_back(std::move(r));
  }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Distinct tags in first-appearance order.
  std::vector<std::string> tags() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& r : records_)
      if (seen.insert(r.tag).second) out.push_back(r.tag);
    return out;
  }

 private:
  Modality modality_ = Modality::Text;
  std::size_t dim_ = 0;
  std::vector<FeatureRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline FeatureTable parse_features(const std::string& text, const std::string& origin,
                                   std::optional<std::size_t> expected_dim = std::nullopt) {
  const auto lines = detail::lines_of(text);
  if (lines.empty()) detail::parse_error(origin, 1, "missing header '#dim=<D> modality=<TEXT|MUSIC>'");
  std::optional<std::size_t> dim;
  std::optional<Modality> modality;
  const std::string& header = lines[0];
  if (header.rfind("#", 0) != 0) detail::parse_error(origin, 1, "missing header line");
  for (const auto& field : detail::split_ws(header.substr(1))) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) detail::parse_error(origin, 1, "malformed header field '" + field + "'");
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "dim") {
      std::size_t d = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), d);
      if (ec != std::errc() || p != value.data() + value.size() || d == 0)
        detail::parse_error(origin, 1, "bad dim '" + value + "'");
      dim = d;
    } else if (key == "modality") {
      try {
        modality = parse_modality(value);
      } catch (const Error& e) {
        detail::parse_error(origin, 1, e.what());
      }
    }
  }
  if (!dim || !modality) detail::parse_error(origin, 1, "header must declare dim and modality");
  if (expected_dim && *expected_dim != *dim)
    detail::parse_error(origin, 1, "dim " + std::to_string(*dim) + " differs from expected " +
                                       std::to_string(*expected_dim));

  FeatureTable table(*modality, *dim);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty() || line[0] == '#') continue;
    const auto cols = detail::split(line, '\t');
    if (cols.size() != 3) detail::parse_error(origin, ln + 1, "expected id<TAB>tag<TAB>values");
    FeatureRecord r{cols[0], *modality, cols[1], {}};
    for (const auto& v : detail::split(cols[2], ',')) {
      const auto x = detail::parse_double(v);
      if (!x) detail::parse_error(origin, ln + 1, "record '" + r.id + "': bad number '" + v + "'");
      r.features.push_back(*x);
    }
    try {
      table.add(std::move(r));
    } catch (const Error& e) {
      detail::parse_error(origin, ln + 1, e.what());
    }
  }
  return table;
}

inline FeatureTable load_features(const std::string& path, std::optional<std::size_t> expected_dim = std::nullopt) {
  return parse_features(detail::read_file(path), path, expected_dim);
}

inline std::string format_features(const FeatureTable& table) {
  std::string out = "#dim=" + std::to_string(table.dim()) + " modality=" + std::string(to_string(table.modality())) + "\n";
  for (const auto& r : table.records()) {
    out += r.id;
    out += '\t';
    out += r.tag;
    out += '\t';
    for (std::size_t i = 0; i < r.features.size(); ++i) {
      if (i) out += ',';
      out += detail::format_double(r.features[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write '" + path + "'");
  out << content;
  if (!out) fail(ErrorKind::Data, "write failed for '" + path + "'");
}

inline void write_features(const std::string& path, const FeatureTable& table) {
  write_text_file(path, format_features(table));
}

// ---------------------------------------------------------------------------

/// Ordered, duplicate-free tag list; position defines the class index.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(Modality modality, const std::vector<std::string>& tags) : modality_(modality) {
    for (const auto& t : tags) {
      std::string n = normalize_tag(t);
      if (n.empty()) fail(ErrorKind::Data, "empty tag in vocabulary");
      if (index_.count(n)) fail(ErrorKind::Data, "duplicate tag '" + n + "' in vocabulary");
      index_.emplace(n, tags_.size());
      tags_.push_back(std::move(n));
    }
    if (tags_.empty()) fail(ErrorKind::Data, "vocabulary must not be empty");
  }

  /// Sorted distinct tags of a table.
  static Vocabulary from_table(const FeatureTable& table) {
    auto tags = table.tags();
    std::sort(tags.begin(), tags.end());
    return Vocabulary(table.modality(), tags);
  }

  Modality modality() const { return modality_; }
  const std::vector<std::string>& tags() const { return tags_; }
  std::size_t size() const { return tags_.size(); }
  bool contains(const std::string& tag) const { return index_.count(tag) > 0; }

  std::optional<std::size_t> index_of(const std::string& tag) const {
    auto it = index_.find(tag);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require_index(const std::string& tag) const {
    auto i = index_of(tag);
    if (!i) fail(ErrorKind::Data, "tag '" + tag + "' is not in the " + std::string(to_string(modality_)) + " vocabulary");
    return *i;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.modality_ == b.modality_ && a.tags_ == b.tags_;
  }

 private:
  Modality modality_ = Modality::Text;
  std::vector<std::string> tags_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Spelling variants tried when a tag is missing from a lexicon or embedding table.
inline const std::vector<std::pair<std::string, std::string>>& tag_aliases() {
  static const std::vector<std::pair<std::string, std::string>> aliases = {
      {"anger", "angry"},
      {"angry", "anger"},
      {"fearful", "fear"},
  };
  return aliases;
}

inline std::vector<std::string> lookup_candidates(const std::string& tag) {
  std::vector<std::string> out{normalize_tag(tag)};
  for (const auto& [from, to] : tag_aliases())
    if (from == out.front()) out.push_back(to);
  return out;
}

struct VadEntry {
  double valence = 0.0;
  double arousal = 0.0;
  std::optional<double> dominance;
};

class VadLexicon {
 public:
  void add(const std::string& word, VadEntry e) { entries_[normalize_tag(word)] = e; }

  std::optional<VadEntry> lookup(const std::string& word) const {
    auto it = entries_.find(normalize_tag(word));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  /// Lookup with the alias table as fallback.
  std::optional<VadEntry> resolve(const std::string& tag) const {
    for (const auto& c : lookup_candidates(tag))
      if (auto e = lookup(c)) return e;
    return std::nullopt;
  }

  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, VadEntry>& entries() const { return entries_; }

 private:
  std::map<std::string, VadEntry> entries_;
};

/// word<TAB>valence<TAB>arousal[<TAB>dominance], values in [0, 1]. A leading
/// column-name line ("Word ...") is skipped.
inline VadLexicon parse_vad_lexicon(const std::string& text, const std::string& origin) {
  VadLexicon lex;
  const auto lines = detail::lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (detail::trim(line).empty() || line[0] == '#') continue;
    const auto cols = detail::split(line, '\t');
    if (cols.size() != 3 && cols.size() != 4)
      detail::parse_error(origin, ln + 1, "expected word<TAB>valence<TAB>arousal<TAB>dominance");
    if (ln == 0 && normalize_tag(cols[0]) == "word" && !detail::parse_double(cols[1])) continue;
    std::array<double, 3> v{0, 0, 0};
    for (std::size_t c = 1; c < cols.size(); ++c) {
      const auto x = detail::parse_double(cols[c]);
      if (!x) detail::parse_error(origin, ln + 1, "bad number '" + cols[c] + "'");
      if (*x < 0.0 || *x > 1.0)
        detail::parse_error(origin, ln + 1, "value " + cols[c] + " for '" + cols[0] + "' outside [0, 1]");
      v[c - 1] = *x;
    }
    VadEntry e{v[0], v[1], std::nullopt};
    if (cols.size() == 4) e.dominance = v[2];
    lex.add(cols[0], e);
  }
  return lex;
}

inline VadLexicon load_vad_lexicon(const std::string& path) {
  return parse_vad_lexicon(detail::read_file(path), path);
}

inline std::string format_vad_lexicon(const VadLexicon& lex) {
  std::string out;
  for (const auto& [w, e] : lex.entries()) {
    out += w + "\t" + detail::format_double(e.valence) + "\t" + detail::format_double(e.arousal);
    if (e.dominance) out += "\t" + detail::format_double(*e.dominance);
    out += "\n";
  }
  return out;
}

/// Token vectors in word2vec text layout. Tokens may join n-grams with '_'.
class WordEmbeddingTable {
 public:
  WordEmbeddingTable() = default;
  explicit WordEmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void add(const std::string& token, Vector v) {
    if (v.size() != dim_)
      fail(ErrorKind::Data, "vector for '" + token + "' has length " + std::to_string(v.size()) + ", expected " +
                                std::to_string(dim_));
    if (!(norm(v) > 0.0) || !all_finite(v)) fail(ErrorKind::Data, "vector for '" + token + "' has zero norm");
    const std::string key = normalize_tag(token);
    if (index_.count(key)) fail(ErrorKind::Data, "duplicate token '" + key + "'");
    index_.emplace(key, tokens_.size());
    tokens_.push_back(key);
    vectors_.push_back(std::move(v));
  }

  const Vector* lookup(const std::string& token) const {
    auto it = index_.find(normalize_tag(token));
    return it == index_.end() ? nullptr : &vectors_[it->second];
  }

  const Vector* resolve(const std::string& tag) const {
    for (const auto& c : lookup_candidates(tag))
      if (const Vector* v = lookup(c)) return v;
    return nullptr;
  }

  const Vector& vector_at(std::size_t i) const { return vectors_[i]; }

  /// Tokens ordered by cosine distance to `token` (excluding itself), ties by table order.
  std::vector<std::pair<std::string, double>> nearest(const std::string& token, std::size_t k) const {
    const Vector* q = lookup(token);
    if (!q) fail(ErrorKind::Data, "token '" + token + "' not in embedding table");
    std::vector<std::pair<std::size_t, double>> scored;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (&vectors_[i] == q) continue;
      scored.emplace_back(i, cosine_distance(*q, vectors_[i]));
    }
    std::stable_sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.second < b.second; });
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.emplace_back(tokens_[scored[i].first], scored[i].second);
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::vector<Vector> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline WordEmbeddingTable parse_word_embeddings(const std::string& text, const std::string& origin) {
  const auto lines = detail::lines_of(text);
  if (lines.empty()) detail::parse_error(origin, 1, "missing 'V D' header");
  const auto head = detail::split_ws(lines[0]);
  std::size_t count = 0, dim = 0;
  auto parse_count = [&](const std::string& s, std::size_t& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
  };
  if (head.size() != 2 || !parse_count(head[0], count) || !parse_count(head[1], dim) || dim == 0)
    detail::parse_error(origin, 1, "header must be 'V D'");
  WordEmbeddingTable table(dim);
  std::size_t rows = 0;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto cols = detail::split_ws(lines[ln]);
    if (cols.empty()) continue;
    if (cols.size() != dim + 1)
      detail::parse_error(origin, ln + 1, "token '" + cols[0] + "' has " + std::to_string(cols.size() - 1) +
                                              " values, expected " + std::to_string(dim));
    Vector v;
    for (std::size_t c = 1; c < cols.size(); ++c) {
      const auto x = detail::parse_double(cols[c]);
      if (!x) detail::parse_error(origin, ln + 1, "bad number '" + cols[c] + "'");
      v.push_back(*x);
    }
    try {
      table.add(cols[0], std::move(v));
    } catch (const Error& e) {
      detail::parse_error(origin, ln + 1, e.what());
    }
    ++rows;
  }
  if (rows != count)
    detail::parse_error(origin, 1, "header declares " + std::to_string(count) + " tokens, file has " + std::to_string(rows));
  return table;
}

inline WordEmbeddingTable load_word_embeddings(const std::string& path) {
  return parse_word_embeddings(detail::read_file(path), path);
}

inline std::string format_word_embeddings(const WordEmbeddingTable& table) {
  std::string out = std::to_string(table.size()) + " " + std::to_string(table.dim()) + "\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += table.tokens()[i];
    for (double x : table.vector_at(i)) out += " " + detail::format_double(x);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stratified splits

enum class Split { Train, Val, Test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "TRAIN";
    case Split::Val: return "VAL";
    case Split::Test: return "TEST";
  }
  return "?";
}

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

using SplitAssignment = std::map<std::string, Split>;

/// Largest-remainder apportionment of n items over the three ratios;
/// leftover items go to the largest fractional parts, ties in train/val/test order.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& r) {
  const std::array<double, 3> exact{r.train * n, r.val * n, r.test * n};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = static_cast<std::size_t>(std::floor(exact[i] + 1e-9));
    frac[i] = exact[i] - static_cast<double>(counts[i]);
    used += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b] + 1e-12; });
  for (std::size_t i = 0; used < n; ++i, ++used) counts[order[i % 3]] += 1;
  return counts;
}

inline SplitAssignment stratified_split(const FeatureTable& table, const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
    fail(ErrorKind::Config, "split ratios must be non-negative and sum to 1");
  std::map<std::string, std::vector<std::size_t>> by_tag;
  for (std::size_t i = 0; i < table.size(); ++i) by_tag[table[i].tag].push_back(i);
  std::vector<std::string> small;
  for (const auto& [tag, members] : by_tag)
    if (members.size() < 3) small.push_back(tag + " (" + std::to_string(members.size()) + ")");
  if (!small.empty()) {
    std::string msg = "stratified_split needs at least 3 items per class; too small:";
    for (const auto& s : small) msg += " " + s;
    fail(ErrorKind::Data, msg);
  }
  SplitAssignment out;
  std::uint64_t stream = 0;
  for (auto& [tag, members] : by_tag) {
    Rng rng(mix_seed(seed, stream++));
    rng.shuffle(members);
    const auto counts = split_counts(members.size(), ratios);
    for (std::size_t j = 0; j < members.size(); ++j) {
      const Split s = j < counts[0] ? Split::Train : (j < counts[0] + counts[1] ? Split::Val : Split::Test);
      out.emplace(table[members[j]].id, s);
    }
  }
  return out;
}

/// Records assigned to `which`, in original table order.
inline FeatureTable subset(const FeatureTable& table, const SplitAssignment& assignment, Split which) {
  FeatureTable out(table.modality(), table.dim());
  for (const auto& r : table.records()) {
    auto it = assignment.find(r.id);
    if (it == assignment.end()) fail(ErrorKind::Data, "record '" + r.id + "' has no split assignment");
    if (it->second == which) out.add(r);
  }
  return out;
}

}  // namespace moodbridge
