#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "moodbridge/checkpoint.hpp"
#include "moodbridge/eval.hpp"
#include "moodbridge/experiment.hpp"
#include "moodbridge/features.hpp"
#include "moodbridge/pca.hpp"
#include "moodbridge/retrieval.hpp"
#include "moodbridge/synth.hpp"
#include "moodbridge/taxonomy.hpp"

namespace mb = moodbridge;
namespace fs = std::filesystem;

namespace {

std::string default_config_text() {
  mb::ExperimentConfig c;
  c.text_features = "text.features";
  c.music_features = "music.features";
  c.lexicon = "lexicon.tsv";
  c.embeddings = "embeddings.txt";
  c.taxonomy_map = "ground_truth.tsv";
  c.output_dir = "run";
  return "# moodbridge experiment config (key = value; paths relative to this file)\n" + mb::format_config(c);
}

int cmd_synth(const std::string& out_dir, std::uint64_t seed, double std_dev, std::size_t text_per_tag,
              std::size_t music_per_tag) {
  mb::SynthSpec spec;
  spec.cluster_std = std_dev;
  spec.text_per_tag = text_per_tag;
  spec.music_per_tag = music_per_tag;
  const mb::SynthCorpus corpus = mb::synth_generate(spec, seed);
  mb::TaxonomyMap truth(mb::Scheme::Manual, "synthetic ground truth");
  for (const auto& [t, m] : corpus.mapping) truth.set(t, {m});

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) mb::fail(mb::ErrorKind::Config, "cannot create '" + out_dir + "'");
  const fs::path dir(out_dir);
  mb::write_atomic(dir / "text.features", mb::format_features(corpus.text));
  mb::write_atomic(dir / "music.features", mb::format_features(corpus.music));
  mb::write_atomic(dir / "lexicon.tsv", mb::format_vad_lexicon(corpus.lexicon));
  mb::write_atomic(dir / "embeddings.txt", mb::format_word_embeddings(corpus.embeddings));
  mb::write_atomic(dir / "ground_truth.tsv", mb::format_taxonomy(truth));
  mb::write_atomic(dir / "experiment.cfg", default_config_text());
  std::cout << "wrote " << corpus.text.size() << " text and " << corpus.music.size() << " music records to "
            << out_dir << "\n";
  return 0;
}

int cmd_ingest(const std::string& path, std::optional<std::size_t> dim, bool show_split, std::uint64_t seed) {
  const mb::FeatureTable t = mb::load_features(path, dim);
  std::map<std::string, std::size_t> counts;
  for (const auto& r : t.records()) ++counts[r.tag];
  std::cout << "modality\t" << mb::to_string(t.modality()) << "\n"
            << "dim\t" << t.dim() << "\n"
            << "records\t" << t.size() << "\n";
  std::optional<mb::SplitAssignment> split;
  if (show_split) split = mb::stratified_split(t, {}, seed);
  for (const auto& [tag, n] : counts) {
    std::cout << "tag\t" << tag << "\t" << n;
    if (split) {
      std::size_t c[3] = {0, 0, 0};
      for (const auto& r : t.records())
        if (r.tag == tag) ++c[static_cast<int>(split->at(r.id))];
      std::cout << "\t" << c[0] << "/" << c[1] << "/" << c[2];
    }
    std::cout << "\n";
  }
  return 0;
}

struct MapArgs {
  std::string scheme = "W2V";
  std::string dataset;
  std::string text_features;
  std::string music_features;
  std::string lexicon;
  std::string embeddings;
  std::string compare;
};

int cmd_map(const MapArgs& a) {
  const mb::Scheme scheme = mb::parse_scheme(mb::detail::upper(a.scheme));
  const std::string dataset_name = !a.compare.empty() ? a.compare : a.dataset;
  std::optional<mb::Dataset> dataset;
  if (!dataset_name.empty()) dataset = mb::parse_dataset(mb::detail::upper(dataset_name));

  mb::Vocabulary text_vocab, music_vocab;
  if (dataset) {
    text_vocab = mb::reference_text_vocabulary(*dataset);
    music_vocab = mb::audioset_mood_vocabulary();
  } else {
    if (a.text_features.empty() || a.music_features.empty())
      mb::fail(mb::ErrorKind::Config, "map-taxonomy needs --dataset or both --text-features and --music-features");
    text_vocab = mb::Vocabulary::from_table(mb::load_features(a.text_features));
    music_vocab = mb::Vocabulary::from_table(mb::load_features(a.music_features));
  }

  mb::TaxonomyMap map;
  switch (scheme) {
    case mb::Scheme::VA:
      if (a.lexicon.empty()) mb::fail(mb::ErrorKind::Config, "VA mapping needs --lexicon");
      map = mb::map_va(text_vocab, music_vocab, mb::load_vad_lexicon(a.lexicon), a.lexicon);
      break;
    case mb::Scheme::W2V:
      if (a.embeddings.empty()) mb::fail(mb::ErrorKind::Config, "W2V mapping needs --embeddings");
      map = mb::map_w2v(text_vocab, music_vocab, mb::load_word_embeddings(a.embeddings), a.embeddings);
      break;
    case mb::Scheme::Manual:
      if (!dataset) mb::fail(mb::ErrorKind::Config, "MANUAL mapping needs --dataset");
      map = mb::manual_map(*dataset);
      break;
  }
  if (a.compare.empty()) {
    std::cout << mb::format_taxonomy(map);
    return 0;
  }
  const auto expected = mb::reference_map(*dataset, scheme);
  const auto diffs = mb::diff_maps(map, expected);
  std::cout << "# diff-report " << mb::to_string(scheme) << " vs " << mb::reference_provenance() << "\n";
  std::cout << "text_tag\tcomputed\treference\tstatus\n";
  for (const auto& t : expected.text_tags()) {
    const auto& want = expected.at(t);
    const auto got = map.contains(t) ? map.at(t) : std::vector<std::string>{};
    std::cout << t << "\t" << mb::detail::format_list(got) << "\t" << mb::detail::format_list(want) << "\t"
              << (got == want ? "match" : "MISMATCH") << "\n";
  }
  std::cout << "# mismatches: " << diffs.size() << " of " << expected.text_tags().size() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& output_dir) {
  mb::ExperimentConfig c = mb::load_config(config_path);
  if (!output_dir.empty()) {
    c.output_dir = fs::absolute(output_dir).string();
  }
  const mb::TrainResult r = mb::train(c);
  std::cout << mb::train_report_json(r).dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& model_path, const std::string& split_name,
             const std::string& scheme_name, const std::string& out) {
  mb::ExperimentConfig c = mb::load_config(config_path);
  const mb::ExperimentData d = mb::load_experiment_data(c);
  const mb::Checkpoint ck = mb::load_checkpoint(model_path);
  if (!(ck.model.text_vocab == d.text_vocab) || !(ck.model.music_vocab == d.music_vocab))
    mb::fail(mb::ErrorKind::Data, "checkpoint vocabularies do not match the configured data");
  if (ck.model.dims.text_features != d.text.dim() || ck.model.dims.music_features != d.music.dim())
    mb::fail(mb::ErrorKind::Dimension, "checkpoint feature dims do not match the configured data");
  const std::string s = mb::detail::upper(split_name);
  const mb::Split split = s == "TRAIN" ? mb::Split::Train : s == "VAL" ? mb::Split::Val : s == "TEST" ? mb::Split::Test
      : (mb::fail(mb::ErrorKind::Config, "unknown split '" + split_name + "'"), mb::Split::Test);
  const mb::Scheme scheme = scheme_name.empty() ? c.scheme : mb::parse_scheme(mb::detail::upper(scheme_name));
  mb::EvalReport r = mb::evaluate(ck.model, d.text_split(split), d.music_split(split), mb::require_map(d, scheme));
  r.config_digest = ck.config_digest;
  auto j = mb::to_json(r);
  j["split"] = mb::detail::upper(split_name);
  j["eval_config_digest"] = mb::config_digest(c);
  const std::string text = j.dump(2) + "\n";
  if (!out.empty())
    mb::write_atomic(out, text);
  else
    std::cout << text;
  return 0;
}

int cmd_suite(const std::vector<std::string>& configs, const std::string& strategies, const std::string& out) {
  std::vector<mb::ExperimentConfig> cs;
  for (const auto& p : configs) cs.push_back(mb::load_config(p));
  if (!strategies.empty()) {
    if (cs.size() != 1) mb::fail(mb::ErrorKind::Config, "--strategies takes exactly one base --config");
    std::vector<mb::StrategyKind> kinds;
    if (mb::detail::upper(strategies) == "ALL")
      kinds.assign(mb::kAllStrategies.begin(), mb::kAllStrategies.end());
    else
      for (const auto& s : mb::detail::split(strategies, ',')) kinds.push_back(mb::parse_strategy(mb::detail::upper(s)));
    const mb::ExperimentConfig base = cs.front();
    cs.clear();
    for (auto k : kinds) {
      mb::ExperimentConfig c = base;
      c.strategy.kind = k;
      if (!c.output_dir.empty()) c.output_dir = (fs::path(c.output_dir) / std::string(mb::to_string(k))).string();
      cs.push_back(c);
    }
  }
  const std::string table = mb::format_suite(mb::run_suite(cs));
  if (!out.empty()) mb::write_atomic(out, table);
  std::cout << table;
  return 0;
}

void print_hits(const mb::RankedResult& r, bool with_header) {
  if (with_header) std::cout << "# query=" << r.query_id << "\n";
  char buf[40];
  for (std::size_t i = 0; i < r.hits.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", r.hits[i].distance);
    std::cout << (i + 1) << "\t" << r.hits[i].id << "\t" << buf << "\t" << r.hits[i].tag << "\n";
  }
}

int cmd_retrieve(const std::string& model_path, const std::string& music_path, const std::string& query_id,
                 const std::string& text_path, const std::string& query_file, std::size_t k) {
  const mb::Checkpoint ck = mb::load_checkpoint(model_path);
  const mb::FeatureTable music = mb::load_features(music_path, ck.model.dims.music_features);
  std::vector<mb::FeatureRecord> queries;
  if (!query_id.empty()) {
    if (text_path.empty()) mb::fail(mb::ErrorKind::Config, "--query-id needs --text-features");
    const mb::FeatureTable text = mb::load_features(text_path, ck.model.dims.text_features);
    const auto idx = text.find(query_id);
    if (!idx) mb::fail(mb::ErrorKind::Data, "query id '" + query_id + "' not found in " + text_path);
    queries.push_back(text[*idx]);
  } else if (!query_file.empty()) {
    const mb::FeatureTable text = mb::load_features(query_file, ck.model.dims.text_features);
    queries = text.records();
  } else {
    mb::fail(mb::ErrorKind::Config, "retrieve needs --query-id or --query-text-file");
  }
  if (mb::is_classifier(ck.model.config.kind)) {
    const mb::ClassificationRanker ranker(ck.model, music);
    for (const auto& q : queries) {
      mb::RankedResult r = ranker.rank(q);
      if (r.hits.size() > k) r.hits.resize(k);
      print_hits(r, queries.size() > 1);
    }
    return 0;
  }
  const mb::EmbeddingIndex index = mb::music_index(ck.model, music);
  for (const auto& q : queries) print_hits(mb::query(index, mb::embed(ck.model, q), k, q.id), queries.size() > 1);
  return 0;
}

int cmd_project(const std::string& model_path, const std::string& text_path, const std::string& music_path,
                const std::string& fit, const std::string& embeddings_path, const std::string& out,
                const std::string& raw_out) {
  const mb::Checkpoint ck = mb::load_checkpoint(model_path);
  const mb::Model& model = ck.model;
  std::vector<mb::LabeledPoint> text_pts, music_pts, tag_pts;
  auto collect = [&](const std::string& path, std::size_t dim, const char* kind, std::vector<mb::LabeledPoint>& dst) {
    if (path.empty()) return;
    const mb::FeatureTable t = mb::load_features(path, dim);
    const mb::Matrix e = mb::embed_table(model, t);
    for (std::size_t i = 0; i < t.size(); ++i)
      dst.push_back({t[i].id, kind, mb::Vector(e.row(i).begin(), e.row(i).end())});
  };
  collect(text_path, model.dims.text_features, "text", text_pts);
  collect(music_path, model.dims.music_features, "music", music_pts);
  if (!embeddings_path.empty() && model.config.kind == mb::StrategyKind::Metric3Branch) {
    const mb::WordEmbeddingTable words = mb::load_word_embeddings(embeddings_path);
    for (const auto* vocab : {&model.text_vocab, &model.music_vocab})
      for (const auto& tag : vocab->tags()) {
        const mb::Vector* v = words.resolve(tag);
        if (!v) mb::fail(mb::ErrorKind::Data, "tag '" + tag + "' is not in the embedding table");
        bool seen = false;
        for (const auto& p : tag_pts) seen = seen || p.id == tag;
        if (!seen) tag_pts.push_back({tag, "tag", mb::embed_tag(model, *v).values});
      }
  }
  const std::string f = mb::detail::upper(fit);
  std::vector<mb::LabeledPoint>* fit_set = f == "TEXT" ? &text_pts : f == "MUSIC" ? &music_pts : nullptr;
  if (!fit_set) mb::fail(mb::ErrorKind::Config, "--fit must be text or music");
  if (fit_set->empty()) mb::fail(mb::ErrorKind::Config, "no " + fit + " features given to fit the projection");
  std::vector<mb::LabeledPoint> others;
  for (auto* set : {&text_pts, &music_pts, &tag_pts})
    if (set != fit_set) others.insert(others.end(), set->begin(), set->end());
  const std::string csv = mb::format_projection_csv(mb::pca_project(*fit_set, others));
  if (!raw_out.empty()) {
    std::vector<mb::LabeledPoint> all;
    for (auto* set : {&text_pts, &music_pts, &tag_pts}) all.insert(all.end(), set->begin(), set->end());
    mb::write_atomic(raw_out, mb::format_embeddings_csv(all));
  }
  if (!out.empty())
    mb::write_atomic(out, csv);
  else
    std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moodbridge: cross-modal text-to-music emotion retrieval"};
  app.require_subcommand(1);

  std::string out_dir, config, model, output_dir, features, text_features, music_features, query_id, query_file,
      split = "test", scheme_name, out, strategies, fit = "music", embeddings, raw_out;
  std::uint64_t seed = 0;
  double std_dev = 0.1;
  std::size_t text_per_tag = 400, music_per_tag = 286, k = 10;
  std::optional<std::size_t> dim;
  bool show_split = false;
  std::vector<std::string> configs;
  MapArgs map_args;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with a known tag mapping");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--std", std_dev, "Cluster standard deviation in latent space");
  synth->add_option("--text-per-tag", text_per_tag);
  synth->add_option("--music-per-tag", music_per_tag);

  auto* ingest = app.add_subcommand("ingest", "Validate a feature file and summarize it");
  ingest->add_option("--features", features)->required();
  ingest->add_option("--dim", dim, "Expected feature dimension");
  ingest->add_flag("--split", show_split, "Show the default stratified split per tag");
  ingest->add_option("--seed", seed);

  auto* map = app.add_subcommand("map-taxonomy", "Map text tags onto music tags");
  map->add_option("--scheme", map_args.scheme, "VA, W2V or MANUAL");
  map->add_option("--dataset", map_args.dataset, "Built-in vocabulary: ALM or ISEAR");
  map->add_option("--text-features", map_args.text_features);
  map->add_option("--music-features", map_args.music_features);
  map->add_option("--lexicon", map_args.lexicon, "VAD lexicon (TSV)");
  map->add_option("--embeddings", map_args.embeddings, "Word embeddings (text format)");
  map->add_option("--compare-reference", map_args.compare,
                  "Diff the mapping for dataset ALM or ISEAR against the built-in reference table");

  auto* train = app.add_subcommand("train", "Train one strategy from a config file");
  train->add_option("--config", config)->required();
  train->add_option("--output-dir", output_dir, "Overrides output_dir from the config");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--config", config)->required();
  eval->add_option("--model", model)->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--scheme", scheme_name, "Relevance mapping; defaults to the config's scheme");
  eval->add_option("--out", out, "Write the JSON report here instead of stdout");

  auto* suite = app.add_subcommand("suite", "Train several configs and print the comparison grid");
  suite->add_option("--config", configs)->required();
  suite->add_option("--strategies", strategies, "Comma list or 'all'; clones a single base config per strategy");
  suite->add_option("--out", out);

  auto* retrieve = app.add_subcommand("retrieve", "Rank music for a text query");
  retrieve->add_option("--model", model)->required();
  retrieve->add_option("--features", features, "Music feature file to search")->required();
  retrieve->add_option("--query-id", query_id, "Id of a record in --text-features");
  retrieve->add_option("--text-features", text_features);
  retrieve->add_option("--query-text-file", query_file, "Pre-featurized text queries (interchange format)");
  retrieve->add_option("--k", k)->check(CLI::PositiveNumber);

  auto* project = app.add_subcommand("project", "Export a 2-D PCA projection of embeddings");
  project->add_option("--model", model)->required();
  project->add_option("--text-features", text_features);
  project->add_option("--music-features", music_features);
  project->add_option("--embeddings", embeddings, "Word embeddings; adds tag points for three-branch models");
  project->add_option("--fit", fit, "Modality the projection is fitted on: text or music");
  project->add_option("--out", out);
  project->add_option("--raw-out", raw_out, "Also write the unprojected embeddings as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(out_dir, seed, std_dev, text_per_tag, music_per_tag);
    if (*ingest) return cmd_ingest(features, dim, show_split, seed);
    if (*map) return cmd_map(map_args);
    if (*train) return cmd_train(config, output_dir);
    if (*eval) return cmd_eval(config, model, split, scheme_name, out);
    if (*suite) return cmd_suite(configs, strategies, out);
    if (*retrieve) return cmd_retrieve(model, features, query_id, text_features, query_file, k);
    if (*project) return cmd_project(model, text_features, music_features, fit, embeddings, out, raw_out);
  } catch (const mb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mb::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
