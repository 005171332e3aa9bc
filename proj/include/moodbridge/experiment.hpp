#pragma once

// Experiment orchestration: flat key/value configs, the training loop with
// validation-based early stopping, and the strategy comparison grid.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "moodbridge/checkpoint.hpp"
#include "moodbridge/error.hpp"
#include "moodbridge/eval.hpp"
#include "moodbridge/features.hpp"
#include "moodbridge/models.hpp"
#include "moodbridge/numcore.hpp"
#include "moodbridge/rng.hpp"
#include "moodbridge/sampling.hpp"
#include "moodbridge/taxonomy.hpp"

namespace moodbridge {

// ---------------------------------------------------------------------------
// Logging (MOODBRIDGE_LOG = quiet | info | debug; default quiet)

enum class LogLevel { Quiet, Info, Debug };

inline LogLevel log_level() {
  const char* v = std::getenv("MOODBRIDGE_LOG");
  if (!v) return LogLevel::Quiet;
  const std::string s = v;
  if (s == "debug") return LogLevel::Debug;
  if (s == "info") return LogLevel::Info;
  return LogLevel::Quiet;
}

inline void log_msg(LogLevel level, const std::string& msg) {
  if (log_level() >= level) std::cerr << "[moodbridge] " << msg << "\n";
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string text_features;
  std::string music_features;
  std::string lexicon;
  std::string embeddings;
  std::string taxonomy_map;
  std::optional<Dataset> manual_dataset;
  StrategyConfig strategy;
  bool embedding_dim_set = false;  // otherwise derived from the strategy
  Scheme scheme = Scheme::W2V;
  SplitRatios split_ratios;
  std::uint64_t seed = 0;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 10;
  double miner_lambda = 10.0;
  double miner_epsilon = 0.05;
  std::string output_dir;
  std::string base_dir;  // relative paths resolve against this; not part of the digest

  std::string resolve(const std::string& path) const {
    if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
    return (std::filesystem::path(base_dir) / path).lexically_normal().string();
  }
};

namespace detail {

inline std::string format_list(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
  return out;
}

inline std::vector<double> parse_doubles(const std::string& v, const std::string& key) {
  std::vector<double> out;
  for (const auto& f : split(v, ',')) {
    auto d = parse_double(trim(f));
    if (!d) fail(ErrorKind::Config, "config: bad number in '" + key + "': '" + f + "'");
    out.push_back(*d);
  }
  return out;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    fail(ErrorKind::Config, "config: '" + key + "' must be a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "config: '" + key + "' is out of range");
  }
}

// Shortest %g form that reads back to the same double.
inline std::string format_short(double x) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

/// Canonical text of a config. The digest covers everything except output_dir.
inline std::string format_config(const ExperimentConfig& c, bool include_output_dir = true) {
  auto num = [](double x) { return detail::format_short(x); };
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  kv("text_features", c.text_features);
  kv("music_features", c.music_features);
  kv("lexicon", c.lexicon);
  kv("embeddings", c.embeddings);
  kv("taxonomy_map", c.taxonomy_map);
  kv("manual_dataset", c.manual_dataset ? (*c.manual_dataset == Dataset::Alm ? "ALM" : "ISEAR") : "");
  kv("strategy", std::string(to_string(c.strategy.kind)));
  kv("scheme", std::string(to_string(c.scheme)));
  kv("split_ratios", num(c.split_ratios.train) + "," + num(c.split_ratios.val) + "," + num(c.split_ratios.test));
  kv("seed", std::to_string(c.seed));
  kv("lr", num(c.lr));
  kv("batch_size", std::to_string(c.batch_size));
  kv("max_epochs", std::to_string(c.max_epochs));
  kv("patience", std::to_string(c.patience));
  std::vector<std::string> hidden;
  for (auto h : c.strategy.hidden) hidden.push_back(std::to_string(h));
  kv("hidden", detail::format_list(hidden));
  kv("embedding_dim", c.embedding_dim_set ? std::to_string(c.strategy.embedding_dim) : "auto");
  kv("margin", num(c.strategy.margin));
  kv("miner_lambda", num(c.miner_lambda));
  kv("miner_epsilon", num(c.miner_epsilon));
  kv("loss_weights", num(c.strategy.loss_weights[0]) + "," + num(c.strategy.loss_weights[1]) + "," +
                         num(c.strategy.loss_weights[2]));
  if (include_output_dir) kv("output_dir", c.output_dir);
  return out;
}

/// 64-bit FNV-1a of the canonical config text, as 16 hex digits.
inline std::string config_digest(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_config(c, false)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline ExperimentConfig parse_config(const std::string& text, const std::string& origin, const std::string& base_dir = {}) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  const auto lines = detail::lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::string line = lines[ln];
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, origin + ":" + std::to_string(ln + 1) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string v = detail::trim(line.substr(eq + 1));
    auto where = [&] { return origin + ":" + std::to_string(ln + 1) + ": "; };
    auto one_double = [&] {
      const auto d = detail::parse_doubles(v, key);
      if (d.size() != 1) fail(ErrorKind::Config, where() + "'" + key + "' takes one number");
      return d[0];
    };
    try {
      if (key == "text_features") c.text_features = v;
      else if (key == "music_features") c.music_features = v;
      else if (key == "lexicon") c.lexicon = v;
      else if (key == "embeddings") c.embeddings = v;
      else if (key == "taxonomy_map") c.taxonomy_map = v;
      else if (key == "manual_dataset") {
        if (v.empty()) c.manual_dataset.reset();
        else c.manual_dataset = parse_dataset(detail::upper(v));
      } else if (key == "strategy") c.strategy.kind = parse_strategy(detail::upper(v));
      else if (key == "scheme") c.scheme = parse_scheme(detail::upper(v));
      else if (key == "split_ratios") {
        const auto r = detail::parse_doubles(v, key);
        if (r.size() != 3) fail(ErrorKind::Config, where() + "split_ratios needs three values");
        c.split_ratios = {r[0], r[1], r[2]};
      } else if (key == "seed") c.seed = detail::parse_u64(v, key);
      else if (key == "lr") c.lr = one_double();
      else if (key == "batch_size") c.batch_size = detail::parse_u64(v, key);
      else if (key == "max_epochs") c.max_epochs = detail::parse_u64(v, key);
      else if (key == "patience") c.patience = detail::parse_u64(v, key);
      else if (key == "hidden") {
        c.strategy.hidden.clear();
        for (const auto& h : detail::split(v, ',')) c.strategy.hidden.push_back(detail::parse_u64(detail::trim(h), key));
      } else if (key == "embedding_dim") {
        c.embedding_dim_set = v != "auto";
        if (c.embedding_dim_set) c.strategy.embedding_dim = detail::parse_u64(v, key);
      } else if (key == "margin") c.strategy.margin = one_double();
      else if (key == "miner_lambda") c.miner_lambda = one_double();
      else if (key == "miner_epsilon") c.miner_epsilon = one_double();
      else if (key == "loss_weights") {
        const auto w = detail::parse_doubles(v, key);
        if (w.size() != 3) fail(ErrorKind::Config, where() + "loss_weights needs three values");
        c.strategy.loss_weights = {w[0], w[1], w[2]};
      } else if (key == "output_dir") c.output_dir = v;
      else fail(ErrorKind::Config, where() + "unknown key '" + key + "'");
    } catch (const Error& e) {
      if (std::string(e.what()).rfind(origin, 0) == 0) throw;
      fail(ErrorKind::Config, where() + e.what());
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream probe(path);
  if (!probe) fail(ErrorKind::Config, "cannot read config '" + path + "'");
  const auto parent = std::filesystem::path(path).parent_path().string();
  return parse_config(detail::read_file(path), path, parent);
}

/// Checks values and that referenced files exist; does not parse data.
inline void validate_config(const ExperimentConfig& c) {
  auto need_file = [&](const std::string& key, const std::string& p, bool required) {
    if (p.empty()) {
      if (required) fail(ErrorKind::Config, "config: '" + key + "' is required");
      return;
    }
    if (!std::filesystem::is_regular_file(c.resolve(p)))
      fail(ErrorKind::Config, "config: " + key + " file '" + c.resolve(p) + "' does not exist");
  };
  need_file("text_features", c.text_features, true);
  need_file("music_features", c.music_features, true);
  need_file("lexicon", c.lexicon, false);
  need_file("embeddings", c.embeddings, false);
  need_file("taxonomy_map", c.taxonomy_map, false);
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) fail(ErrorKind::Config, "config: lr must be > 0");
  if (c.batch_size == 0) fail(ErrorKind::Config, "config: batch_size must be >= 1");
  const auto& r = c.split_ratios;
  if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
    fail(ErrorKind::Config, "config: split_ratios must be non-negative and sum to 1");
  if (!(r.val > 0.0) || !(r.test > 0.0) || !(r.train > 0.0))
    fail(ErrorKind::Config, "config: every split ratio must be positive");
  MinerConfig{c.strategy.embedding_dim, c.miner_lambda, c.miner_epsilon, c.seed}.validate();
  const std::string kind(to_string(c.strategy.kind));
  if (c.strategy.kind == StrategyKind::VaRegression && c.lexicon.empty())
    fail(ErrorKind::Config, kind + " needs a lexicon");
  if ((c.strategy.kind == StrategyKind::W2vRegression || c.strategy.kind == StrategyKind::Metric3Branch) &&
      c.embeddings.empty())
    fail(ErrorKind::Config, kind + " needs word embeddings");
  for (double w : c.strategy.loss_weights)
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::Config, "config: loss weights must be >= 0");
}

// ---------------------------------------------------------------------------
// Data

struct ExperimentData {
  FeatureTable text;
  FeatureTable music;
  std::optional<VadLexicon> lexicon;
  std::optional<WordEmbeddingTable> embeddings;
  std::optional<TaxonomyMap> map_file;
  std::optional<Dataset> manual_dataset;
  Vocabulary text_vocab;
  Vocabulary music_vocab;
  FeatureTable text_train, text_val, text_test;
  FeatureTable music_train, music_val, music_test;

  ModelDims dims() const {
    return {text.dim(), music.dim(), embeddings ? embeddings->dim() : std::size_t{0}};
  }
  const FeatureTable& text_split(Split s) const {
    return s == Split::Train ? text_train : (s == Split::Val ? text_val : text_test);
  }
  const FeatureTable& music_split(Split s) const {
    return s == Split::Train ? music_train : (s == Split::Val ? music_val : music_test);
  }
};

/// Splits are seeded from the experiment seed, one stream per modality.
inline ExperimentData load_experiment_data(const ExperimentConfig& c) {
  validate_config(c);
  ExperimentData d;
  d.text = load_features(c.resolve(c.text_features));
  d.music = load_features(c.resolve(c.music_features));
  if (d.text.modality() != Modality::Text) fail(ErrorKind::Data, "text_features file is not a TEXT table");
  if (d.music.modality() != Modality::Music) fail(ErrorKind::Data, "music_features file is not a MUSIC table");
  if (!c.lexicon.empty()) d.lexicon = load_vad_lexicon(c.resolve(c.lexicon));
  if (!c.embeddings.empty()) d.embeddings = load_word_embeddings(c.resolve(c.embeddings));
  if (!c.taxonomy_map.empty()) d.map_file = load_taxonomy(c.resolve(c.taxonomy_map));
  d.manual_dataset = c.manual_dataset;
  d.text_vocab = Vocabulary::from_table(d.text);
  d.music_vocab = Vocabulary::from_table(d.music);
  const auto ts = stratified_split(d.text, c.split_ratios, mix_seed(c.seed, 1));
  const auto ms = stratified_split(d.music, c.split_ratios, mix_seed(c.seed, 2));
  d.text_train = subset(d.text, ts, Split::Train);
  d.text_val = subset(d.text, ts, Split::Val);
  d.text_test = subset(d.text, ts, Split::Test);
  d.music_train = subset(d.music, ms, Split::Train);
  d.music_val = subset(d.music, ms, Split::Val);
  d.music_test = subset(d.music, ms, Split::Test);
  return d;
}

/// The relevance map for `scheme`, or nothing when its inputs are absent.
/// A taxonomy_map file wins for the scheme it declares.
inline std::optional<TaxonomyMap> find_map(const ExperimentData& d, Scheme scheme) {
  std::optional<TaxonomyMap> m;
  if (d.map_file && d.map_file->scheme() == scheme)
    m = *d.map_file;
  else if (scheme == Scheme::VA && d.lexicon)
    m = map_va(d.text_vocab, d.music_vocab, *d.lexicon);
  else if (scheme == Scheme::W2V && d.embeddings)
    m = map_w2v(d.text_vocab, d.music_vocab, *d.embeddings);
  else if (scheme == Scheme::Manual && d.manual_dataset)
    m = manual_map(*d.manual_dataset);
  if (m) m->validate(d.text_vocab, d.music_vocab);
  return m;
}

inline TaxonomyMap require_map(const ExperimentData& d, Scheme scheme) {
  auto m = find_map(d, scheme);
  if (!m)
    fail(ErrorKind::Config, "no source for the " + std::string(to_string(scheme)) +
                                " mapping (needs lexicon, embeddings, taxonomy_map or manual_dataset)");
  return *m;
}

inline StrategyConfig resolve_strategy(const ExperimentConfig& c, const ExperimentData& d) {
  StrategyConfig s = c.strategy;
  s.seed = c.seed;
  if (!c.embedding_dim_set) s.embedding_dim = default_embedding_dim(s.kind, d.dims().word_dim);
  validate_strategy(s, d.dims());
  return s;
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();  // labeled strategies only
  double val_p_at_k = 0.0;
  double val_mrr = 0.0;
  bool improved = false;
};

struct TrainResult {
  Model model;  // best parameters
  std::string config_digest;
  std::vector<EpochLog> log;
  double initial_val_mrr = 0.0;
  double best_val_mrr = 0.0;
  std::size_t best_epoch = 0;
  EvalReport test_report;
};

namespace detail {

inline void apply_adam(Model& model, ModelParams& grads, AdamState& adam) {
  auto ptrs = model.params.pointers();
  std::vector<MLPParams> g;
  for (Part p : grads.present()) g.push_back(std::move(grads.get(p)));
  adam_step(std::span<MLPParams* const>(ptrs), std::span<const MLPParams>(g), adam);
}

inline double labeled_loss(const Model& model, const FeatureTable& text, const FeatureTable& music,
                           const RegressionTargets* targets) {
  LabeledBatch batch;
  for (const auto* t : {&text, &music})
    for (const auto& r : t->records()) batch.items.push_back(&r);
  return strategy_loss(model, batch, targets).loss;
}

}  // namespace detail

/// Trains on already-loaded data; no files are written.
inline TrainResult train(const ExperimentConfig& c, const ExperimentData& d) {
  validate_config(c);
  const StrategyConfig sc = resolve_strategy(c, d);
  const TaxonomyMap map = require_map(d, c.scheme);
  TrainResult res;
  res.config_digest = config_digest(c);
  res.model = make_model(sc, d.text_vocab, d.music_vocab, d.dims());
  Model& model = res.model;
  const StrategyKind kind = sc.kind;

  const VadLexicon* lex = d.lexicon ? &*d.lexicon : nullptr;
  const WordEmbeddingTable* emb = d.embeddings ? &*d.embeddings : nullptr;
  std::optional<RegressionTargets> targets;
  if (is_regression(kind)) targets = build_regression_targets(model, lex, emb);
  std::optional<TripletSources> sources;
  if (is_metric(kind)) sources = make_triplet_sources(d.text_train, d.music_train, model, emb);
  const MinerConfig miner{sc.embedding_dim, c.miner_lambda, c.miner_epsilon, c.seed};
  if (is_metric(kind)) {
    for (const auto& t : d.text_vocab.tags()) (void)positive_pool(t, map, d.music_train);
  }

  auto validation = [&](EpochLog& e) {
    const EvalReport r = evaluate(model, d.text_val, d.music_val, map);
    e.val_p_at_k = r.macro_p_at_k;
    e.val_mrr = r.macro_mrr;
    if (!is_metric(kind)) e.val_loss = detail::labeled_loss(model, d.text_val, d.music_val, targets ? &*targets : nullptr);
  };
  // Ranked by validation MRR; labeled strategies break ties by lower validation loss.
  auto better = [](const EpochLog& a, const EpochLog& b) {
    if (a.val_mrr > b.val_mrr + 1e-12) return true;
    if (a.val_mrr < b.val_mrr - 1e-12) return false;
    return std::isfinite(a.val_loss) && std::isfinite(b.val_loss) && a.val_loss < b.val_loss;
  };

  EpochLog best;
  validation(best);
  res.initial_val_mrr = best.val_mrr;
  ModelParams best_params = model.params;
  log_msg(LogLevel::Info, std::string(to_string(kind)) + " epoch 0 val_mrr=" + detail::format_double(best.val_mrr));

  std::vector<MLPParams*> ptrs = model.params.pointers();
  AdamState adam = make_adam_state(std::span<const MLPParams* const>(ptrs.data(), ptrs.size()), AdamConfig{c.lr});
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= c.max_epochs; ++epoch) {
    Rng rng(mix_seed(c.seed, 0x65706f6368ULL + epoch));
    double loss_sum = 0.0;
    std::size_t steps = 0;
    if (is_metric(kind)) {
      auto batches = build_epoch_triplets(*sources, map, model, miner, rng);
      for (auto& b : batches) rng.shuffle(b.triplets);
      const std::size_t n_steps =
          std::max<std::size_t>(1, (batches.front().triplets.size() + c.batch_size - 1) / c.batch_size);
      for (std::size_t s = 0; s < n_steps; ++s) {
        std::vector<TripletBatch> slice;
        for (const auto& b : batches) {
          const std::size_t n = b.triplets.size();
          const auto lo = static_cast<std::ptrdiff_t>(n * s / n_steps);
          const auto hi = static_cast<std::ptrdiff_t>(n * (s + 1) / n_steps);
          slice.push_back({b.kind, {b.triplets.begin() + lo, b.triplets.begin() + hi}});
        }
        LossResult lr = strategy_loss(model, slice, *sources);
        if (!std::isfinite(lr.loss)) fail(ErrorKind::Numeric, "non-finite training loss at epoch " + std::to_string(epoch));
        detail::apply_adam(model, lr.grads, adam);
        loss_sum += lr.loss;
        ++steps;
      }
    } else {
      std::vector<const FeatureRecord*> items;
      for (const auto* t : {&d.text_train, &d.music_train})
        for (const auto& r : t->records()) items.push_back(&r);
      rng.shuffle(items);
      for (std::size_t lo = 0; lo < items.size(); lo += c.batch_size) {
        LabeledBatch batch;
        batch.items.assign(items.begin() + static_cast<std::ptrdiff_t>(lo),
                           items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), lo + c.batch_size)));
        LossResult lr = strategy_loss(model, batch, targets ? &*targets : nullptr);
        if (!std::isfinite(lr.loss)) fail(ErrorKind::Numeric, "non-finite training loss at epoch " + std::to_string(epoch));
        detail::apply_adam(model, lr.grads, adam);
        loss_sum += lr.loss;
        ++steps;
      }
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
    validation(e);
    e.improved = better(e, best);
    if (e.improved) {
      best = e;
      best_params = model.params;
      stale = 0;
    } else {
      ++stale;
    }
    res.log.push_back(e);
    log_msg(LogLevel::Info, std::string(to_string(kind)) + " epoch " + std::to_string(epoch) +
                                " loss=" + detail::format_double(e.train_loss) + " val_mrr=" + detail::format_double(e.val_mrr));
    if (stale >= c.patience && stale > 0) break;
  }
  model.params = std::move(best_params);
  res.best_epoch = best.epoch;
  res.best_val_mrr = best.val_mrr;
  res.test_report = evaluate(model, d.text_test, d.music_test, map);
  res.test_report.config_digest = res.config_digest;
  return res;
}

inline std::string format_train_log(const TrainResult& r) {
  std::string out = "# config_digest=" + r.config_digest + "\n";
  out += "epoch\ttrain_loss\tval_loss\tval_macro_p_at_5\tval_macro_mrr\timproved\n";
  auto num = [](double x) { return std::isfinite(x) ? detail::format_double(x) : std::string("-"); };
  for (const auto& e : r.log)
    out += std::to_string(e.epoch) + "\t" + num(e.train_loss) + "\t" + num(e.val_loss) + "\t" + num(e.val_p_at_k) +
           "\t" + num(e.val_mrr) + "\t" + (e.improved ? "1" : "0") + "\n";
  return out;
}

inline nlohmann::ordered_json train_report_json(const TrainResult& r) {
  nlohmann::ordered_json j = to_json(r.test_report);
  j["split"] = "test";
  j["best_epoch"] = r.best_epoch;
  j["epochs_run"] = r.log.size();
  j["initial_val_mrr"] = r.initial_val_mrr;
  j["best_val_mrr"] = r.best_val_mrr;
  return j;
}

/// Writes `content` next to `path` and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.parent_path() / ("." + path.filename().string() + ".tmp");
  write_text_file(tmp.string(), content);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Data, "cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kTrainLogFile = "train_log.tsv";
inline constexpr const char* kReportFile = "eval_report.json";

inline void write_train_outputs(const std::string& dir, const TrainResult& r) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::Config, "cannot create output_dir '" + dir + "'");
  write_atomic(fs::path(dir) / kCheckpointFile, format_checkpoint(r.model, r.config_digest));
  write_atomic(fs::path(dir) / kTrainLogFile, format_train_log(r));
  write_atomic(fs::path(dir) / kReportFile, train_report_json(r).dump(2) + "\n");
}

inline void check_output_dir(const ExperimentConfig& c) {
  if (c.output_dir.empty()) return;
  const auto dir = c.resolve(c.output_dir);
  if (std::filesystem::exists(dir) && !std::filesystem::is_directory(dir))
    fail(ErrorKind::Config, "output_dir '" + dir + "' exists and is not a directory");
}

/// Loads, validates, trains and (when output_dir is set) writes the checkpoint,
/// training log and test-split report.
inline TrainResult train(const ExperimentConfig& c) {
  check_output_dir(c);
  const ExperimentData d = load_experiment_data(c);
  TrainResult r = train(c, d);
  if (!c.output_dir.empty()) write_train_outputs(c.resolve(c.output_dir), r);
  return r;
}

// ---------------------------------------------------------------------------
// Strategy comparison grid

inline constexpr std::array<Scheme, 3> kSuiteSchemes{Scheme::VA, Scheme::W2V, Scheme::Manual};

struct SuiteCell {
  double p_at_k = 0.0;
  double mrr = 0.0;
};

struct SuiteRow {
  StrategyKind kind = StrategyKind::Classifier;
  std::string config_digest;
  std::array<std::optional<SuiteCell>, 3> cells;  // VA, W2V, MANUAL; empty when the map is unavailable
};

struct SuiteTable {
  std::vector<SuiteRow> rows;
};

/// Configs must share feature files, mapping sources and split ratios.
inline void check_compatible(const std::vector<ExperimentConfig>& configs) {
  if (configs.empty()) fail(ErrorKind::Config, "suite: no configs");
  const auto& a = configs.front();
  for (std::size_t i = 1; i < configs.size(); ++i) {
    const auto& b = configs[i];
    auto same = [&](const std::string& x, const std::string& y, const char* what) {
      if (a.resolve(x) != b.resolve(y))
        fail(ErrorKind::Config, "suite: config " + std::to_string(i + 1) + " uses a different " + what);
    };
    same(a.text_features, b.text_features, "text_features");
    same(a.music_features, b.music_features, "music_features");
    same(a.lexicon, b.lexicon, "lexicon");
    same(a.embeddings, b.embeddings, "embeddings");
    same(a.taxonomy_map, b.taxonomy_map, "taxonomy_map");
    if (a.manual_dataset != b.manual_dataset)
      fail(ErrorKind::Config, "suite: config " + std::to_string(i + 1) + " uses a different manual_dataset");
    if (a.split_ratios.train != b.split_ratios.train || a.split_ratios.val != b.split_ratios.val ||
        a.split_ratios.test != b.split_ratios.test || a.seed != b.seed)
      fail(ErrorKind::Config, "suite: config " + std::to_string(i + 1) + " uses a different split");
  }
}

/// One row per config: its best model scored on the test split under every
/// available relevance map.
inline SuiteTable run_suite(const std::vector<ExperimentConfig>& configs) {
  check_compatible(configs);
  for (const auto& c : configs) {
    validate_config(c);
    check_output_dir(c);
  }
  const ExperimentData d = load_experiment_data(configs.front());
  std::array<std::optional<TaxonomyMap>, 3> maps;
  for (std::size_t s = 0; s < 3; ++s) maps[s] = find_map(d, kSuiteSchemes[s]);
  for (const auto& c : configs) {
    resolve_strategy(c, d);
    require_map(d, c.scheme);
  }
  SuiteTable table;
  for (const auto& c : configs) {
    TrainResult r = train(c, d);
    if (!c.output_dir.empty()) write_train_outputs(c.resolve(c.output_dir), r);
    SuiteRow row{r.model.config.kind, r.config_digest, {}};
    for (std::size_t s = 0; s < 3; ++s) {
      if (!maps[s]) continue;
      const EvalReport e = evaluate(r.model, d.text_test, d.music_test, *maps[s]);
      row.cells[s] = SuiteCell{e.macro_p_at_k, e.macro_mrr};
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string format_suite(const SuiteTable& t) {
  std::string out = "strategy";
  for (Scheme s : kSuiteSchemes) {
    const std::string n(to_string(s));
    out += "\t" + n + "_P@5\t" + n + "_MRR";
  }
  out += "\tconfig_digest\n";
  char buf[32];
  for (const auto& r : t.rows) {
    out += std::string(to_string(r.kind));
    for (const auto& cell : r.cells) {
      if (!cell) {
        out += "\t-\t-";
        continue;
      }
      std::snprintf(buf, sizeof buf, "\t%.4f", cell->p_at_k);
      out += buf;
      std::snprintf(buf, sizeof buf, "\t%.4f", cell->mrr);
      out += buf;
    }
    out += "\t" + r.config_digest + "\n";
  }
  return out;
}

}  // namespace moodbridge
