#pragma once

// The six bridging strategies: parameter layout per strategy, embedding
// functions, losses and their gradients.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moodbridge/error.hpp"
#include "moodbridge/features.hpp"
#include "moodbridge/numcore.hpp"
#include "moodbridge/retrieval.hpp"
#include "moodbridge/taxonomy.hpp"

namespace moodbridge {

enum class StrategyKind { Classifier, MultiHead, VaRegression, W2vRegression, Metric2Branch, Metric3Branch };

inline constexpr std::array<StrategyKind, 6> kAllStrategies{
    StrategyKind::Classifier,    StrategyKind::MultiHead,     StrategyKind::VaRegression,
    StrategyKind::W2vRegression, StrategyKind::Metric2Branch, StrategyKind::Metric3Branch};

inline std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Classifier: return "CLASSIFIER";
    case StrategyKind::MultiHead: return "MULTI_HEAD";
    case StrategyKind::VaRegression: return "VA_REGRESSION";
    case StrategyKind::W2vRegression: return "W2V_REGRESSION";
    case StrategyKind::Metric2Branch: return "METRIC_2BRANCH";
    case StrategyKind::Metric3Branch: return "METRIC_3BRANCH";
  }
  return "?";
}

inline StrategyKind parse_strategy(std::string_view s) {
  for (auto k : kAllStrategies)
    if (to_string(k) == s) return k;
  fail(ErrorKind::Config, "unknown strategy '" + std::string(s) + "'");
}

inline bool is_classifier(StrategyKind k) { return k == StrategyKind::Classifier || k == StrategyKind::MultiHead; }
inline bool is_regression(StrategyKind k) { return k == StrategyKind::VaRegression || k == StrategyKind::W2vRegression; }
inline bool is_metric(StrategyKind k) { return k == StrategyKind::Metric2Branch || k == StrategyKind::Metric3Branch; }

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Metric3Branch;
  std::size_t embedding_dim = 64;
  double margin = 0.2;
  std::vector<std::size_t> hidden{256, 256};
  std::uint64_t seed = 0;
  // Weights of the tag-text, tag-music and cross-modal triplet terms.
  std::array<double, 3> loss_weights{1.0, 1.0, 1.0};
};

struct ModelDims {
  std::size_t text_features = 0;
  std::size_t music_features = 0;
  std::size_t word_dim = 0;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

enum class Part { TextTrunk, MusicTrunk, TagBranch, TextHead, MusicHead, SharedTrunk };

inline constexpr std::array<Part, 6> kAllParts{Part::TextTrunk, Part::MusicTrunk, Part::TagBranch,
                                               Part::TextHead,  Part::MusicHead,  Part::SharedTrunk};

inline std::string_view to_string(Part p) {
  switch (p) {
    case Part::TextTrunk: return "text_trunk";
    case Part::MusicTrunk: return "music_trunk";
    case Part::TagBranch: return "tag_branch";
    case Part::TextHead: return "text_head";
    case Part::MusicHead: return "music_head";
    case Part::SharedTrunk: return "shared_trunk";
  }
  return "?";
}

inline Part parse_part(std::string_view s) {
  for (auto p : kAllParts)
    if (to_string(p) == s) return p;
  fail(ErrorKind::Data, "unknown parameter block '" + std::string(s) + "'");
}

/// Trainable blocks; which ones exist depends on the strategy.
struct ModelParams {
  std::array<std::optional<MLPParams>, kAllParts.size()> blocks;

  bool has(Part p) const { return blocks[static_cast<std::size_t>(p)].has_value(); }

  MLPParams& get(Part p) {
    auto& b = blocks[static_cast<std::size_t>(p)];
    if (!b) fail(ErrorKind::Unsupported, "model has no " + std::string(to_string(p)));
    return *b;
  }
  const MLPParams& get(Part p) const { return const_cast<ModelParams*>(this)->get(p); }

  void set(Part p, MLPParams m) { blocks[static_cast<std::size_t>(p)] = std::move(m); }

  std::vector<Part> present() const {
    std::vector<Part> out;
    for (auto p : kAllParts)
      if (has(p)) out.push_back(p);
    return out;
  }

  std::vector<MLPParams*> pointers() {
    std::vector<MLPParams*> out;
    for (auto& b : blocks)
      if (b) out.push_back(&*b);
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  for (auto part : p.present()) z.set(part, zeros_like(p.get(part)));
  return z;
}

template <class Fn>
void for_each_value(ModelParams& p, Fn&& fn) {
  for (auto part : p.present()) for_each_value(p.get(part), fn);
}

template <class Fn>
void for_each_value(const ModelParams& p, Fn&& fn) {
  for (auto part : p.present()) for_each_value(p.get(part), fn);
}

inline std::vector<double*> value_pointers(ModelParams& p) {
  std::vector<double*> out;
  for_each_value(p, [&](double& x) { out.push_back(&x); });
  return out;
}

inline Vector flatten(const ModelParams& p) {
  Vector out;
  for_each_value(p, [&](double x) { out.push_back(x); });
  return out;
}

struct Model {
  StrategyConfig config;
  ModelDims dims;
  Vocabulary text_vocab;
  Vocabulary music_vocab;
  ModelParams params;

  /// Target space for embedding strategies; empty for classifiers.
  std::optional<EmbeddingSpaceSpec> space() const {
    switch (config.kind) {
      case StrategyKind::VaRegression: return EmbeddingSpaceSpec{2, Metric::Euclidean};
      case StrategyKind::W2vRegression: return EmbeddingSpaceSpec{dims.word_dim, Metric::Cosine};
      case StrategyKind::Metric2Branch:
      case StrategyKind::Metric3Branch: return EmbeddingSpaceSpec{config.embedding_dim, Metric::Cosine};
      default: return std::nullopt;
    }
  }
};

inline void validate_strategy(const StrategyConfig& c, const ModelDims& dims) {
  if (c.embedding_dim == 0) fail(ErrorKind::Config, "embedding_dim must be positive");
  if (c.hidden.empty() || std::count(c.hidden.begin(), c.hidden.end(), std::size_t{0}))
    fail(ErrorKind::Config, "hidden widths must be positive");
  if (is_metric(c.kind) && !(c.margin > 0.0)) fail(ErrorKind::Config, "margin must be > 0 for metric strategies");
  if (c.kind == StrategyKind::VaRegression && c.embedding_dim != 2)
    fail(ErrorKind::Config, "VA_REGRESSION requires embedding_dim = 2");
  if (c.kind == StrategyKind::W2vRegression && c.embedding_dim != dims.word_dim)
    fail(ErrorKind::Config, "W2V_REGRESSION requires embedding_dim = word-embedding dim (" +
                                std::to_string(dims.word_dim) + ")");
  if ((c.kind == StrategyKind::W2vRegression || c.kind == StrategyKind::Metric3Branch) && dims.word_dim == 0)
    fail(ErrorKind::Config, std::string(to_string(c.kind)) + " needs word embeddings");
  if (dims.text_features == 0 || dims.music_features == 0) fail(ErrorKind::Config, "feature dims must be positive");
}

/// Default embedding dim for a strategy (2 for VA, the word dim for W2V).
inline std::size_t default_embedding_dim(StrategyKind k, std::size_t word_dim) {
  if (k == StrategyKind::VaRegression) return 2;
  if (k == StrategyKind::W2vRegression) return word_dim;
  return 64;
}

inline Model make_model(const StrategyConfig& config, Vocabulary text_vocab, Vocabulary music_vocab,
                        const ModelDims& dims) {
  validate_strategy(config, dims);
  Model m{config, dims, std::move(text_vocab), std::move(music_vocab), {}};
  Rng rng(mix_seed(config.seed, 0x6d6f64656cULL));
  auto trunk = [&](std::size_t in, std::size_t out) {
    std::vector<std::size_t> d{in};
    d.insert(d.end(), config.hidden.begin(), config.hidden.end());
    d.push_back(out);
    return make_mlp(d, rng);
  };
  const std::size_t e = config.embedding_dim;
  switch (config.kind) {
    case StrategyKind::Classifier:
      m.params.set(Part::TextTrunk, trunk(dims.text_features, e));
      m.params.set(Part::TextHead, make_mlp({e, m.text_vocab.size()}, rng));
      m.params.set(Part::MusicTrunk, trunk(dims.music_features, e));
      m.params.set(Part::MusicHead, make_mlp({e, m.music_vocab.size()}, rng));
      break;
    case StrategyKind::MultiHead: {
      const std::size_t h = config.hidden.front();
      m.params.set(Part::TextTrunk, make_mlp({dims.text_features, h}, rng));
      m.params.set(Part::MusicTrunk, make_mlp({dims.music_features, h}, rng));
      m.params.set(Part::SharedTrunk, trunk(h, e));
      m.params.set(Part::TextHead, make_mlp({e, m.text_vocab.size()}, rng));
      m.params.set(Part::MusicHead, make_mlp({e, m.music_vocab.size()}, rng));
      break;
    }
    case StrategyKind::VaRegression:
    case StrategyKind::W2vRegression:
    case StrategyKind::Metric2Branch:
      m.params.set(Part::TextTrunk, trunk(dims.text_features, e));
      m.params.set(Part::MusicTrunk, trunk(dims.music_features, e));
      break;
    case StrategyKind::Metric3Branch:
      m.params.set(Part::TextTrunk, trunk(dims.text_features, e));
      m.params.set(Part::MusicTrunk, trunk(dims.music_features, e));
      m.params.set(Part::TagBranch, make_mlp({dims.word_dim, e}, rng));
      break;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Chained forward/backward over several blocks, ReLU at the joins.

using Path = std::vector<Part>;

struct PathForward {
  std::vector<BatchForward> stages;
  const Matrix& output() const { return stages.back().output; }
};

inline PathForward path_forward(const ModelParams& params, const Path& path, const Matrix& x) {
  PathForward f;
  Matrix input = x;
  for (std::size_t s = 0; s < path.size(); ++s) {
    f.stages.push_back(mlp_forward(params.get(path[s]), input));
    if (s + 1 < path.size()) {
      input = f.stages.back().output;
      for (double& v : input.values()) v = v > 0.0 ? v : 0.0;
    }
  }
  return f;
}

inline void path_backward(const ModelParams& params, const Path& path, const PathForward& f, Matrix grad,
                          ModelParams& grads) {
  for (std::size_t s = path.size(); s-- > 0;) {
    BatchBackward b = mlp_backward(params.get(path[s]), f.stages[s].cache, grad);
    accumulate(grads.get(path[s]), b.grads);
    if (s > 0) {
      grad = std::move(b.input_grad);
      auto gv = grad.values();
      const auto ov = f.stages[s - 1].output.values();
      for (std::size_t i = 0; i < gv.size(); ++i)
        if (!(ov[i] > 0.0)) gv[i] = 0.0;
    }
  }
}

inline Path embedding_path(StrategyKind kind, Modality m) {
  if (is_classifier(kind)) fail(ErrorKind::Unsupported, std::string(to_string(kind)) + " does not produce embeddings");
  return {m == Modality::Text ? Part::TextTrunk : Part::MusicTrunk};
}

inline Path logits_path(StrategyKind kind, Modality m) {
  const bool text = m == Modality::Text;
  if (kind == StrategyKind::Classifier)
    return {text ? Part::TextTrunk : Part::MusicTrunk, text ? Part::TextHead : Part::MusicHead};
  if (kind == StrategyKind::MultiHead)
    return {text ? Part::TextTrunk : Part::MusicTrunk, Part::SharedTrunk, text ? Part::TextHead : Part::MusicHead};
  fail(ErrorKind::Unsupported, std::string(to_string(kind)) + " has no classification heads");
}

inline Matrix stack_features(const FeatureTable& table) {
  Matrix x(table.size(), table.dim());
  for (std::size_t i = 0; i < table.size(); ++i) std::copy(table[i].features.begin(), table[i].features.end(), x.row(i).begin());
  return x;
}

// ---------------------------------------------------------------------------
// Embeddings

namespace detail {

inline void normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    Vector n = normalized(m.row(r));
    std::copy(n.begin(), n.end(), m.row(r).begin());
  }
}

}  // namespace detail

/// Embeddings of every record of `table`, one per row. Cosine spaces are
/// L2-normalized; the VA space is returned raw.
inline Matrix embed_table(const Model& model, const FeatureTable& table) {
  const auto space = model.space();
  if (!space) fail(ErrorKind::Unsupported, std::string(to_string(model.config.kind)) + " does not produce embeddings");
  if (table.empty()) return Matrix(0, space->dim);
  Matrix out = path_forward(model.params, embedding_path(model.config.kind, table.modality()), stack_features(table)).output();
  if (space->metric == Metric::Cosine) detail::normalize_rows(out);
  return out;
}

inline EmbeddingVector embed(const Model& model, const FeatureRecord& record) {
  const auto space = model.space();
  if (!space) fail(ErrorKind::Unsupported, std::string(to_string(model.config.kind)) + " does not produce embeddings");
  const Path path = embedding_path(model.config.kind, record.modality);
  Matrix x(1, record.features.size());
  std::copy(record.features.begin(), record.features.end(), x.row(0).begin());
  const Matrix out = path_forward(model.params, path, x).output();
  Vector v(out.row(0).begin(), out.row(0).end());
  if (space->metric == Metric::Cosine) v = normalized(v);
  return {*space, std::move(v)};
}

/// Tag-branch embedding of a word vector (three-branch models only).
inline EmbeddingVector embed_tag(const Model& model, std::span<const double> word_vector) {
  if (model.config.kind != StrategyKind::Metric3Branch)
    fail(ErrorKind::Unsupported, "only METRIC_3BRANCH embeds tags");
  const Forward f = mlp_forward(model.params.get(Part::TagBranch), word_vector);
  return {*model.space(), normalized(f.output)};
}

// ---------------------------------------------------------------------------
// Losses

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/// -log softmax(logits)[class]; gradient softmax - onehot.
inline LossGrad cross_entropy_loss(std::span<const double> logits, std::size_t class_index) {
  if (class_index >= logits.size())
    fail(ErrorKind::InvalidArgument, "cross_entropy_loss: class index " + std::to_string(class_index) +
                                         " out of range for " + std::to_string(logits.size()) + " logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  Vector p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  const double loss = (mx - logits[class_index]) + std::log(sum);
  p[class_index] -= 1.0;
  return {loss, std::move(p)};
}

inline Vector softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] = std::exp(logits[i] - mx));
  for (double& x : p) x /= sum;
  return p;
}

inline LossGrad mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) fail(ErrorKind::Dimension, "mse_loss: length mismatch");
  const double n = static_cast<double>(pred.size());
  LossGrad r{0.0, Vector(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += d * d / n;
    r.grad[i] = 2.0 * d / n;
  }
  return r;
}

namespace detail {

// D(u, v) and dD/du for the given metric.
inline double distance_with_grad(std::span<const double> u, std::span<const double> v, Metric metric, Vector& du) {
  du.assign(u.size(), 0.0);
  if (metric == Metric::Euclidean) {
    const double d = euclidean_distance(u, v);
    if (d > 0.0)
      for (std::size_t i = 0; i < u.size(); ++i) du[i] = (u[i] - v[i]) / d;
    return d;
  }
  const double nu = norm(u), nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) fail(ErrorKind::Numeric, "triplet_loss: zero-norm embedding");
  const double uv = dot(u, v);
  const double c = uv / (nu * nv);
  for (std::size_t i = 0; i < u.size(); ++i) du[i] = -(v[i] / (nu * nv) - c * u[i] / (nu * nu));
  return 1.0 - c;
}

}  // namespace detail

struct TripletLossResult {
  double loss = 0.0;
  Vector grad_anchor;
  Vector grad_positive;
  Vector grad_negative;
};

/// [D(a, p) - D(a, n) + margin]_+ with gradients for all three arguments.
inline TripletLossResult triplet_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                                      double margin, Metric metric = Metric::Cosine) {
  if (a.size() != p.size() || a.size() != n.size()) fail(ErrorKind::Dimension, "triplet_loss: length mismatch");
  Vector da_p, dp_a, da_n, dn_a;
  const double d_ap = detail::distance_with_grad(a, p, metric, da_p);
  detail::distance_with_grad(p, a, metric, dp_a);
  const double d_an = detail::distance_with_grad(a, n, metric, da_n);
  detail::distance_with_grad(n, a, metric, dn_a);
  TripletLossResult r{0.0, Vector(a.size(), 0.0), Vector(a.size(), 0.0), Vector(a.size(), 0.0)};
  const double h = d_ap - d_an + margin;
  if (!(h > 0.0)) return r;
  r.loss = h;
  for (std::size_t i = 0; i < a.size(); ++i) {
    r.grad_anchor[i] = da_p[i] - da_n[i];
    r.grad_positive[i] = dp_a[i];
    r.grad_negative[i] = -dn_a[i];
  }
  return r;
}

/// VA: (valence, arousal). W2V: the unit-normalized word vector.
inline Vector regression_target(const std::string& tag, Scheme scheme, const VadLexicon* lexicon,
                                const WordEmbeddingTable* embeddings) {
  if (scheme == Scheme::VA) {
    if (!lexicon) fail(ErrorKind::Config, "VA regression target needs a lexicon");
    const auto e = lexicon->resolve(tag);
    if (!e) fail(ErrorKind::Data, "tag '" + tag + "' is not in the VAD lexicon");
    return {e->valence, e->arousal};
  }
  if (scheme == Scheme::W2V) {
    if (!embeddings) fail(ErrorKind::Config, "W2V regression target needs word embeddings");
    const Vector* v = embeddings->resolve(tag);
    if (!v) fail(ErrorKind::Data, "tag '" + tag + "' is not in the embedding table");
    return normalized(*v);
  }
  fail(ErrorKind::InvalidArgument, "regression targets exist only for VA and W2V");
}

using RegressionTargets = std::map<std::string, Vector>;

/// Targets for every tag of both vocabularies of a regression model.
inline RegressionTargets build_regression_targets(const Model& model, const VadLexicon* lexicon,
                                                  const WordEmbeddingTable* embeddings) {
  const Scheme scheme = model.config.kind == StrategyKind::VaRegression ? Scheme::VA : Scheme::W2V;
  if (!is_regression(model.config.kind)) fail(ErrorKind::Unsupported, "not a regression strategy");
  RegressionTargets t;
  for (const auto* vocab : {&model.text_vocab, &model.music_vocab})
    for (const auto& tag : vocab->tags()) t[tag] = regression_target(tag, scheme, lexicon, embeddings);
  return t;
}

// ---------------------------------------------------------------------------
// Batches and the per-strategy objective

struct LabeledBatch {
  std::vector<const FeatureRecord*> items;
};

enum class Source { Text, Music, Tag };

struct ItemRef {
  Source source = Source::Text;
  std::size_t index = 0;

  friend bool operator==(const ItemRef&, const ItemRef&) = default;
};

struct Triplet {
  ItemRef anchor;
  ItemRef positive;
  ItemRef negative;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

enum class TripletKind { Cross, TagText, TagMusic };

struct TripletBatch {
  TripletKind kind = TripletKind::Cross;
  std::vector<Triplet> triplets;

  friend bool operator==(const TripletBatch&, const TripletBatch&) = default;
};

/// Inputs that triplet references index into.
struct TripletSources {
  const FeatureTable* text = nullptr;
  const FeatureTable* music = nullptr;
  std::vector<std::string> tag_names;
  Matrix tag_vectors;  // word vector per tag, row-aligned with tag_names

  std::optional<std::size_t> tag_index(const std::string& tag) const {
    auto it = std::find(tag_names.begin(), tag_names.end(), tag);
    if (it == tag_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - tag_names.begin());
  }
};

/// Tag list = text vocabulary then music tags not already present.
inline TripletSources make_triplet_sources(const FeatureTable& text, const FeatureTable& music, const Model& model,
                                           const WordEmbeddingTable* embeddings) {
  TripletSources s;
  s.text = &text;
  s.music = &music;
  for (const auto* vocab : {&model.text_vocab, &model.music_vocab})
    for (const auto& t : vocab->tags())
      if (!s.tag_index(t)) s.tag_names.push_back(t);
  if (model.config.kind == StrategyKind::Metric3Branch) {
    if (!embeddings) fail(ErrorKind::Config, "METRIC_3BRANCH needs word embeddings");
    s.tag_vectors = Matrix(s.tag_names.size(), embeddings->dim());
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < s.tag_names.size(); ++i) {
      const Vector* v = embeddings->resolve(s.tag_names[i]);
      if (!v) {
        missing.push_back(s.tag_names[i]);
        continue;
      }
      std::copy(v->begin(), v->end(), s.tag_vectors.row(i).begin());
    }
    if (!missing.empty()) detail::missing_tags("tags missing from the embedding table", missing);
  }
  return s;
}

struct LossResult {
  double loss = 0.0;
  ModelParams grads;
};

/// Mean cross-entropy (classifier kinds) or mean MSE to the regression
/// targets (regression kinds) over a mixed-modality batch.
inline LossResult strategy_loss(const Model& model, const LabeledBatch& batch, const RegressionTargets* targets = nullptr) {
  const StrategyKind kind = model.config.kind;
  if (is_metric(kind)) fail(ErrorKind::InvalidArgument, "metric strategies train on triplet batches");
  if (is_regression(kind) && !targets) fail(ErrorKind::InvalidArgument, "regression loss needs targets");
  LossResult r{0.0, zeros_like(model.params)};
  if (batch.items.empty()) return r;
  const double scale = 1.0 / static_cast<double>(batch.items.size());
  for (Modality m : {Modality::Text, Modality::Music}) {
    std::vector<const FeatureRecord*> items;
    for (const auto* it : batch.items)
      if (it->modality == m) items.push_back(it);
    if (items.empty()) continue;
    const std::size_t dim = m == Modality::Text ? model.dims.text_features : model.dims.music_features;
    Matrix x(items.size(), dim);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i]->features.size() != dim)
        fail(ErrorKind::Dimension, "record '" + items[i]->id + "' has the wrong feature dim");
      std::copy(items[i]->features.begin(), items[i]->features.end(), x.row(i).begin());
    }
    const Path path = is_classifier(kind) ? logits_path(kind, m) : embedding_path(kind, m);
    const PathForward f = path_forward(model.params, path, x);
    Matrix grad(f.output().rows(), f.output().cols());
    const Vocabulary& vocab = m == Modality::Text ? model.text_vocab : model.music_vocab;
    for (std::size_t i = 0; i < items.size(); ++i) {
      LossGrad lg;
      if (is_classifier(kind)) {
        lg = cross_entropy_loss(f.output().row(i), vocab.require_index(items[i]->tag));
      } else {
        auto t = targets->find(items[i]->tag);
        if (t == targets->end()) fail(ErrorKind::Data, "no regression target for tag '" + items[i]->tag + "'");
        lg = mse_loss(f.output().row(i), t->second);
      }
      r.loss += scale * lg.loss;
      axpy(grad.row(i), scale, lg.grad);
    }
    path_backward(model.params, path, f, std::move(grad), r.grads);
  }
  return r;
}

inline double triplet_weight(const StrategyConfig& c, TripletKind k) {
  switch (k) {
    case TripletKind::TagText: return c.loss_weights[0];
    case TripletKind::TagMusic: return c.loss_weights[1];
    case TripletKind::Cross: return c.loss_weights[2];
  }
  return 0.0;
}

/// Weighted sum over batches of the mean cosine triplet loss of each batch.
/// Two-branch models accept only cross-modal batches.
inline LossResult strategy_loss(const Model& model, std::span<const TripletBatch> batches, const TripletSources& sources) {
  const StrategyKind kind = model.config.kind;
  if (!is_metric(kind)) fail(ErrorKind::InvalidArgument, std::string(to_string(kind)) + " trains on labeled batches");
  LossResult r{0.0, zeros_like(model.params)};

  struct Group {
    Source source;
    Path path;
    std::map<std::size_t, std::size_t> rows;  // source index -> batch row
    std::optional<PathForward> forward;
    Matrix grad;
  };
  std::array<Group, 3> groups{Group{Source::Text, {Part::TextTrunk}, {}, {}, {}},
                              Group{Source::Music, {Part::MusicTrunk}, {}, {}, {}},
                              Group{Source::Tag, {Part::TagBranch}, {}, {}, {}}};
  auto group_of = [&](const ItemRef& ref) -> Group& { return groups[static_cast<std::size_t>(ref.source)]; };

  for (const auto& b : batches) {
    if (kind == StrategyKind::Metric2Branch && b.kind != TripletKind::Cross)
      fail(ErrorKind::InvalidArgument, "METRIC_2BRANCH accepts only cross-modal triplets");
    for (const auto& t : b.triplets)
      for (const ItemRef* ref : {&t.anchor, &t.positive, &t.negative}) {
        Group& g = group_of(*ref);
        g.rows.emplace(ref->index, g.rows.size());
      }
  }
  for (Group& g : groups) {
    if (g.rows.empty()) continue;
    const Matrix* src_matrix = nullptr;
    const FeatureTable* table = nullptr;
    if (g.source == Source::Text) table = sources.text;
    if (g.source == Source::Music) table = sources.music;
    if (g.source == Source::Tag) src_matrix = &sources.tag_vectors;
    if (!table && !src_matrix) fail(ErrorKind::InvalidArgument, "triplet source missing");
    const std::size_t dim = table ? table->dim() : src_matrix->cols();
    const std::size_t count = table ? table->size() : src_matrix->rows();
    Matrix x(g.rows.size(), dim);
    for (const auto& [idx, row] : g.rows) {
      if (idx >= count) fail(ErrorKind::InvalidArgument, "triplet reference out of range");
      if (table)
        std::copy((*table)[idx].features.begin(), (*table)[idx].features.end(), x.row(row).begin());
      else
        std::copy(src_matrix->row(idx).begin(), src_matrix->row(idx).end(), x.row(row).begin());
    }
    g.forward = path_forward(model.params, g.path, x);
    g.grad = Matrix(x.rows(), g.forward->output().cols());
  }

  for (const auto& b : batches) {
    if (b.triplets.empty()) continue;
    const double w = triplet_weight(model.config, b.kind) / static_cast<double>(b.triplets.size());
    for (const auto& t : b.triplets) {
      Group& ga = group_of(t.anchor);
      Group& gp = group_of(t.positive);
      Group& gn = group_of(t.negative);
      const std::size_t ra = ga.rows.at(t.anchor.index), rp = gp.rows.at(t.positive.index),
                        rn = gn.rows.at(t.negative.index);
      const auto res = triplet_loss(ga.forward->output().row(ra), gp.forward->output().row(rp),
                                    gn.forward->output().row(rn), model.config.margin, Metric::Cosine);
      if (res.loss == 0.0) continue;
      r.loss += w * res.loss;
      axpy(ga.grad.row(ra), w, res.grad_anchor);
      axpy(gp.grad.row(rp), w, res.grad_positive);
      axpy(gn.grad.row(rn), w, res.grad_negative);
    }
  }
  for (Group& g : groups)
    if (g.forward) path_backward(model.params, g.path, *g.forward, std::move(g.grad), r.grads);
  return r;
}

// ---------------------------------------------------------------------------
// Classification-based ranking

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Predicted class index for each record of `table`, under the head of its own modality.
inline std::vector<std::size_t> predict_classes(const Model& model, const FeatureTable& table) {
  if (!is_classifier(model.config.kind)) fail(ErrorKind::Unsupported, "predict_classes needs a classifier strategy");
  std::vector<std::size_t> out;
  if (table.empty()) return out;
  const PathForward f = path_forward(model.params, logits_path(model.config.kind, table.modality()), stack_features(table));
  for (std::size_t i = 0; i < table.size(); ++i) out.push_back(argmax(f.output().row(i)));
  return out;
}

/// Ranks a music table by the likelihood of the predicted text mood.
///
/// CLASSIFIER uses the music head and yields an empty ranking when the
/// predicted text mood is not a music tag. MULTI_HEAD sends music through the
/// shared trunk and the text head.
class ClassificationRanker {
 public:
  ClassificationRanker(const Model& model, const FeatureTable& music) : model_(&model), music_(&music) {
    const StrategyKind kind = model.config.kind;
    if (!is_classifier(kind)) fail(ErrorKind::Unsupported, "classification ranking needs a classifier strategy");
    if (music.empty()) return;
    const Path path = kind == StrategyKind::Classifier ? logits_path(kind, Modality::Music)
                                                       : Path{Part::MusicTrunk, Part::SharedTrunk, Part::TextHead};
    const Matrix logits = path_forward(model.params, path, stack_features(music)).output();
    probs_ = Matrix(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      const Vector p = softmax(logits.row(i));
      std::copy(p.begin(), p.end(), probs_.row(i).begin());
    }
  }

  std::string predict_text_tag(const FeatureRecord& text) const {
    Matrix x(1, text.features.size());
    std::copy(text.features.begin(), text.features.end(), x.row(0).begin());
    const Matrix logits = path_forward(model_->params, logits_path(model_->config.kind, Modality::Text), x).output();
    return model_->text_vocab.tags()[argmax(logits.row(0))];
  }

  RankedResult rank(const FeatureRecord& text) const {
    RankedResult result{text.id, {}};
    const std::string predicted = predict_text_tag(text);
    std::optional<std::size_t> column;
    if (model_->config.kind == StrategyKind::Classifier)
      column = model_->music_vocab.index_of(predicted);
    else
      column = model_->text_vocab.index_of(predicted);
    if (!column || music_->empty()) return result;
    for (std::size_t i = 0; i < music_->size(); ++i)
      result.hits.push_back({(*music_)[i].id, (*music_)[i].tag, 1.0 - probs_(i, *column)});
    std::sort(result.hits.begin(), result.hits.end(), hit_order);
    return result;
  }

 private:
  const Model* model_;
  const FeatureTable* music_;
  Matrix probs_;
};

inline RankedResult rank_by_classification(const Model& model, const FeatureRecord& text, const FeatureTable& music) {
  return ClassificationRanker(model, music).rank(text);
}

}  // namespace moodbridge
