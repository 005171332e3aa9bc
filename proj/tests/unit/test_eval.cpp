#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "moodbridge/eval.hpp"
#include "test_util.hpp"

using namespace moodbridge;

namespace {

using Tags = std::vector<std::string>;

void set_layer(Layer& l, std::initializer_list<std::initializer_list<double>> w, Vector b) {
  l.weight = Matrix::from_rows(w);
  l.bias = std::move(b);
}

// Identity through one ReLU layer: x -> (x, -x)_+ -> x.
void make_identity_trunk(MLPParams& p) {
  ASSERT_EQ(p.layers.size(), 2u);
  set_layer(p.layers[0], {{1, 0}, {0, 1}, {-1, 0}, {0, -1}}, {0, 0, 0, 0});
  set_layer(p.layers[1], {{1, 0, -1, 0}, {0, 1, 0, -1}}, {0, 0});
}

}  // namespace

TEST(PrecisionAtK, Examples) {
  const Tags rel{"happy"};
  EXPECT_EQ(precision_at_k(Tags{"happy", "happy", "happy", "happy", "happy", "sad"}, rel), 1.0);
  EXPECT_EQ(precision_at_k(Tags{}, rel), 0.0);
  EXPECT_DOUBLE_EQ(precision_at_k(Tags{"happy", "sad", "happy", "sad", "sad"}, rel), 0.4);
  EXPECT_DOUBLE_EQ(precision_at_k(Tags{"happy", "happy"}, rel), 0.4);  // short ranking padded
  EXPECT_THROW(precision_at_k(Tags{"happy"}, rel, 0), Error);
}

TEST(ReciprocalRank, Examples) {
  const Tags rel{"happy", "funny"};
  EXPECT_EQ(reciprocal_rank(Tags{"funny", "sad"}, rel), 1.0);
  EXPECT_DOUBLE_EQ(reciprocal_rank(Tags{"sad", "scary", "happy"}, rel), 1.0 / 3.0);
  EXPECT_EQ(reciprocal_rank(Tags{"sad", "scary"}, rel), 0.0);
  EXPECT_EQ(reciprocal_rank(Tags{}, rel), 0.0);
}

TEST(Metrics, MatchBruteForceRecount) {
  Rng rng(1);
  const Tags vocab{"a", "b", "c", "d", "e", "f", "g"};
  for (int trial = 0; trial < 1000; ++trial) {
    Tags ranking(rng.below(12));
    for (auto& t : ranking) t = vocab[rng.below(vocab.size())];
    std::set<std::string> rel_set;
    const std::size_t nrel = 1 + rng.below(3);
    while (rel_set.size() < nrel) rel_set.insert(vocab[rng.below(vocab.size())]);
    const Tags rel(rel_set.begin(), rel_set.end());
    const std::size_t k = 1 + rng.below(8);

    int count = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (i < ranking.size() && rel_set.count(ranking[i])) ++count;
    double rr = 0.0;
    for (std::size_t i = ranking.size(); i-- > 0;)
      if (rel_set.count(ranking[i])) rr = 1.0 / static_cast<double>(i + 1);

    const double p = precision_at_k(ranking, rel, k);
    EXPECT_EQ(p, static_cast<double>(count) / static_cast<double>(k));
    EXPECT_EQ(reciprocal_rank(ranking, rel), rr);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Aggregate, MacroDiffersFromMicroUnderImbalance) {
  // Four "joy" queries with P@5 = 1, one "guilt" query with P@5 = 0.
  std::vector<QueryOutcome> outcomes;
  for (int i = 0; i < 4; ++i) outcomes.push_back({"joy", 1.0, 1.0});
  outcomes.push_back({"guilt", 0.0, 0.0});
  const EvalReport r = aggregate(outcomes, {"guilt", "joy", "shame"});
  EXPECT_DOUBLE_EQ(r.macro_p_at_k, 0.5);
  EXPECT_DOUBLE_EQ(r.micro_p_at_k, 0.8);
  EXPECT_GT(r.micro_p_at_k, r.macro_p_at_k);
  EXPECT_EQ(r.excluded_classes, (Tags{"shame"}));
  ASSERT_EQ(r.per_class.size(), 2u);
  EXPECT_EQ(r.per_class[0].tag, "guilt");
  EXPECT_EQ(r.per_class[1].queries, 4u);
  EXPECT_EQ(r.queries, 5u);
}

TEST(Aggregate, MonteCarloChanceLevel) {
  // Random cosine embeddings, 7 balanced music tags, one relevant tag per query.
  Rng rng(2);
  const EmbeddingSpaceSpec space{16, Metric::Cosine};
  const Tags music_tags{"angry", "exciting", "funny", "happy", "sad", "scary", "tender"};
  std::vector<IndexEntry> entries;
  for (std::size_t i = 0; i < 700; ++i)
    entries.push_back({"m" + std::to_string(i), music_tags[i % 7], {space, normalized(mbtest::random_vector(16, rng))}});
  const EmbeddingIndex index = build_index(entries);
  std::vector<QueryOutcome> outcomes;
  for (int q = 0; q < 1000; ++q) {
    const std::string& tag = music_tags[static_cast<std::size_t>(q) % 7];
    const RankedResult r = query(index, {space, normalized(mbtest::random_vector(16, rng))}, 700);
    const Tags ranked = tags_of(r);
    outcomes.push_back({"t_" + tag, precision_at_k(ranked, {tag}), reciprocal_rank(ranked, {tag})});
  }
  Tags classes;
  for (const auto& t : music_tags) classes.push_back("t_" + t);
  const EvalReport rep = aggregate(outcomes, classes);
  ASSERT_EQ(rep.per_class.size(), 7u);
  for (const auto& c : rep.per_class) EXPECT_NEAR(c.p_at_k, 1.0 / 7.0, 0.05) << c.tag;
}

namespace {

struct OracleSetup {
  Model model;
  FeatureTable text{Modality::Text, 2}, music{Modality::Music, 2};
  TaxonomyMap map{Scheme::VA, "test"};
};

OracleSetup oracle_setup() {
  OracleSetup s;
  const std::map<std::string, Vector> va{{"happy", {0.9, 0.7}}, {"sad", {0.1, 0.2}}, {"scary", {0.2, 0.9}}};
  const std::map<std::string, std::string> mapping{{"joy", "happy"}, {"grief", "sad"}, {"fear", "scary"}};
  for (const auto& [tag, p] : va)
    for (int i = 0; i < 6; ++i) s.music.add({"m_" + tag + std::to_string(i), Modality::Music, tag, p});
  for (const auto& [text_tag, music_tag] : mapping) {
    s.map.set(text_tag, {music_tag});
    for (int i = 0; i < 4; ++i) s.text.add({"t_" + text_tag + std::to_string(i), Modality::Text, text_tag, va.at(music_tag)});
  }
  StrategyConfig c;
  c.kind = StrategyKind::VaRegression;
  c.embedding_dim = 2;
  c.hidden = {4};
  s.model = make_model(c, Vocabulary::from_table(s.text), Vocabulary::from_table(s.music), {2, 2, 0});
  make_identity_trunk(s.model.params.get(Part::TextTrunk));
  make_identity_trunk(s.model.params.get(Part::MusicTrunk));
  return s;
}

}  // namespace

TEST(Evaluate, OracleEmbeddingsArePerfect) {
  const OracleSetup s = oracle_setup();
  const EvalReport r = evaluate(s.model, s.text, s.music, s.map);
  EXPECT_DOUBLE_EQ(r.macro_p_at_k, 1.0);
  EXPECT_DOUBLE_EQ(r.macro_mrr, 1.0);
  EXPECT_EQ(r.per_class.size(), 3u);
  EXPECT_TRUE(r.excluded_classes.empty());
  EXPECT_EQ(r.scheme, Scheme::VA);
  EXPECT_EQ(r.kind, StrategyKind::VaRegression);
}

TEST(Evaluate, MissingClassExcludedAndReported) {
  OracleSetup s = oracle_setup();
  FeatureTable partial(Modality::Text, 2);
  for (const auto& r : s.text.records())
    if (r.tag != "fear") partial.add(r);
  const EvalReport r = evaluate(s.model, partial, s.music, s.map);
  EXPECT_EQ(r.excluded_classes, (Tags{"fear"}));
  EXPECT_EQ(r.per_class.size(), 2u);
  EXPECT_THROW(evaluate(s.model, FeatureTable(Modality::Text, 2), s.music, s.map), Error);
}

TEST(Evaluate, WrongMappingScoresZero) {
  OracleSetup s = oracle_setup();
  TaxonomyMap wrong(Scheme::VA, "test");
  wrong.set("joy", {"sad"});
  wrong.set("grief", {"scary"});
  wrong.set("fear", {"happy"});
  const EvalReport r = evaluate(s.model, s.text, s.music, wrong);
  EXPECT_EQ(r.macro_p_at_k, 0.0);
  // Hand distances from each query's own tag point:
  //   joy   (at happy): scary 0.728 < sad 0.943   -> relevant "sad" starts at rank 13
  //   grief (at sad):   scary 0.707 < happy 0.943 -> relevant "scary" starts at rank 7
  //   fear  (at scary): sad 0.707 < happy 0.728   -> relevant "happy" starts at rank 13
  EXPECT_DOUBLE_EQ(r.macro_mrr, (1.0 / 13.0 + 1.0 / 7.0 + 1.0 / 13.0) / 3.0);
}

TEST(Evaluate, DeterministicAndBounded) {
  Rng rng(3);
  FeatureTable text(Modality::Text, 5), music(Modality::Music, 6);
  for (int i = 0; i < 30; ++i) text.add({"t" + std::to_string(i), Modality::Text, i % 2 ? "joy" : "grief", mbtest::random_vector(5, rng)});
  for (int i = 0; i < 40; ++i) music.add({"m" + std::to_string(i), Modality::Music, i % 3 ? "happy" : "sad", mbtest::random_vector(6, rng)});
  TaxonomyMap map(Scheme::Manual, "test");
  map.set("joy", {"happy"});
  map.set("grief", {"sad", "happy"});
  StrategyConfig c;
  c.kind = StrategyKind::Metric2Branch;
  c.hidden = {16};
  c.embedding_dim = 8;
  const Model m = make_model(c, Vocabulary::from_table(text), Vocabulary::from_table(music), {5, 6, 0});
  const EvalReport a = evaluate(m, text, music, map), b = evaluate(m, text, music, map);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  for (const auto& cm : a.per_class) {
    EXPECT_GE(cm.p_at_k, 0.0);
    EXPECT_LE(cm.p_at_k, 1.0);
    EXPECT_GE(cm.mrr, 0.0);
    EXPECT_LE(cm.mrr, 1.0);
  }
  // grief's relevant set covers every tag, so its first hit is always relevant.
  for (const auto& cm : a.per_class) {
    if (cm.tag == "grief") {
      EXPECT_EQ(cm.mrr, 1.0);
    }
  }
}

TEST(Evaluate, ClassifierWithDisjointVocabulariesScoresZero) {
  Rng rng(4);
  FeatureTable text(Modality::Text, 3), music(Modality::Music, 3);
  for (int i = 0; i < 10; ++i) text.add({"t" + std::to_string(i), Modality::Text, i % 2 ? "joy" : "guilt", mbtest::random_vector(3, rng)});
  for (int i = 0; i < 10; ++i) music.add({"m" + std::to_string(i), Modality::Music, i % 2 ? "happy" : "sad", mbtest::random_vector(3, rng)});
  TaxonomyMap map(Scheme::Manual, "test");
  map.set("joy", {"happy"});
  map.set("guilt", {"sad"});
  StrategyConfig c;
  c.kind = StrategyKind::Classifier;
  c.hidden = {8};
  c.embedding_dim = 4;
  const Model m = make_model(c, Vocabulary::from_table(text), Vocabulary::from_table(music), {3, 3, 0});
  const EvalReport r = evaluate(m, text, music, map);
  EXPECT_EQ(r.macro_p_at_k, 0.0);
  EXPECT_EQ(r.macro_mrr, 0.0);
}

namespace {

Model three_class_classifier() {
  const Vocabulary v(Modality::Text, {"a", "b", "c"});
  StrategyConfig c;
  c.kind = StrategyKind::Classifier;
  c.hidden = {3};
  c.embedding_dim = 3;
  Model m = make_model(c, v, Vocabulary(Modality::Music, {"x", "y"}), {3, 3, 0});
  for (Part p : {Part::TextTrunk, Part::TextHead})
    for (auto& l : m.params.get(p).layers) set_layer(l, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {0, 0, 0});
  return m;
}

FeatureTable one_hot_table(const std::vector<std::size_t>& classes) {
  const Tags names{"a", "b", "c"};
  FeatureTable t(Modality::Text, 3);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    Vector v(3, 0.0);
    v[classes[i]] = 1.0;
    t.add({"r" + std::to_string(i), Modality::Text, names[classes[i]], v});
  }
  return t;
}

}  // namespace

TEST(ConfusionMatrix, PerfectClassifierIsDiagonal) {
  const Model m = three_class_classifier();
  const FeatureTable t = one_hot_table({0, 1, 2, 2, 1, 2});
  const Matrix cm = confusion_matrix(m, t);
  const std::vector<double> counts{1, 2, 3};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(cm(i, j), i == j ? counts[i] : 0.0);
}

TEST(ConfusionMatrix, ConstantPredictorFillsOneColumn) {
  Model m = three_class_classifier();
  set_layer(m.params.get(Part::TextHead).layers[0], {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}, {0.0, 5.0, 0.0});
  const FeatureTable t = one_hot_table({0, 0, 1, 2, 2, 2, 2});
  const Matrix cm = confusion_matrix(m, t);
  const std::vector<double> class_counts{2, 1, 4};
  for (std::size_t i = 0; i < 3; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      row += cm(i, j);
      if (j != 1) {
        EXPECT_EQ(cm(i, j), 0.0);
      }
    }
    EXPECT_EQ(row, class_counts[i]);
  }
}

TEST(ConfusionMatrix, RejectsEmbeddingModels) {
  const OracleSetup s = oracle_setup();
  EXPECT_THROW(confusion_matrix(s.model, s.text), Error);
}

TEST(EvalJson, StableKeyOrder) {
  const OracleSetup s = oracle_setup();
  EvalReport r = evaluate(s.model, s.text, s.music, s.map);
  r.config_digest = "00ff";
  const auto j = to_json(r);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (Tags{"scheme", "mapping_provenance", "model_kind", "seed", "config_digest", "k", "queries",
                        "macro_p_at_k", "macro_mrr", "micro_p_at_k", "micro_mrr", "per_class", "excluded_classes"}));
  std::vector<std::string> classes;
  for (auto it = j["per_class"].begin(); it != j["per_class"].end(); ++it) classes.push_back(it.key());
  EXPECT_EQ(classes, s.model.text_vocab.tags());
  EXPECT_EQ(j["model_kind"], "VA_REGRESSION");
  EXPECT_EQ(j["config_digest"], "00ff");
}
