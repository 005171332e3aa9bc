#include <gtest/gtest.h>

#include <cmath>

#include "moodbridge/checkpoint.hpp"
#include "test_util.hpp"

using namespace moodbridge;

namespace {

Model model_of(StrategyKind kind, std::uint64_t seed) {
  StrategyConfig c;
  c.kind = kind;
  c.hidden = {7, 5};
  c.embedding_dim = kind == StrategyKind::VaRegression ? 2 : (kind == StrategyKind::W2vRegression ? 4 : 6);
  c.margin = 0.1 + 0.01 * static_cast<double>(seed);
  c.loss_weights = {0.5, 1.0 / 3.0, 2.0};
  c.seed = seed;
  return make_model(c, Vocabulary(Modality::Text, {"joy", "guilt", "shame"}),
                    Vocabulary(Modality::Music, {"happy", "sad"}), {5, 9, 4});
}

}  // namespace

TEST(Checkpoint, RoundTripIsExactForEveryKind) {
  for (StrategyKind kind : kAllStrategies) {
    Model m = model_of(kind, 3);
    // Values that do not survive decimal printing at low precision.
    Rng rng(1);
    for_each_value(m.params, [&](double& x) { x = rng.normal() * std::pow(10.0, rng.uniform(-30.0, 30.0)); });
    const std::string text = format_checkpoint(m, "0123456789abcdef");
    const Checkpoint back = parse_checkpoint(text, "mem");
    EXPECT_TRUE(back.model.params == m.params) << to_string(kind);
    EXPECT_EQ(back.model.config.kind, kind);
    EXPECT_EQ(back.model.config.seed, 3u);
    EXPECT_EQ(back.model.config.margin, m.config.margin);
    EXPECT_EQ(back.model.config.loss_weights, m.config.loss_weights);
    EXPECT_EQ(back.model.config.hidden, m.config.hidden);
    EXPECT_EQ(back.model.dims, m.dims);
    EXPECT_EQ(back.model.text_vocab.tags(), m.text_vocab.tags());
    EXPECT_EQ(back.model.music_vocab.tags(), m.music_vocab.tags());
    EXPECT_EQ(back.config_digest, "0123456789abcdef");
    EXPECT_EQ(format_checkpoint(back.model, back.config_digest), text);
  }
}

TEST(Checkpoint, FileRoundTripAndEmptyDigest) {
  const Model m = model_of(StrategyKind::Metric3Branch, 9);
  const auto dir = mbtest::scratch_dir("checkpoint");
  const std::string path = (dir / "m.ckpt").string();
  write_checkpoint(path, m, "");
  const Checkpoint back = load_checkpoint(path);
  EXPECT_TRUE(back.model.params == m.params);
  EXPECT_EQ(back.config_digest, "");
}

TEST(Checkpoint, BadVersionRejected) {
  std::string text = format_checkpoint(model_of(StrategyKind::Metric2Branch, 1), "x");
  text.replace(text.find("moodbridge-checkpoint 1"), 23, "moodbridge-checkpoint 2");
  try {
    parse_checkpoint(text, "mem");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(parse_checkpoint("hello world\n", "mem"), Error);
  EXPECT_THROW(parse_checkpoint("", "mem"), Error);
}

TEST(Checkpoint, ShapeMismatchIsDimensionError) {
  std::string text = format_checkpoint(model_of(StrategyKind::Metric2Branch, 1), "x");
  // Declare a wider text input than the stored tensors.
  text.replace(text.find("text_features 5"), 15, "text_features 6");
  try {
    parse_checkpoint(text, "mem");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Dimension);
  }
}

TEST(Checkpoint, TruncatedAndCorruptRejected) {
  const std::string text = format_checkpoint(model_of(StrategyKind::Classifier, 1), "x");
  EXPECT_THROW(parse_checkpoint(text.substr(0, text.size() / 2), "mem"), Error);
  std::string corrupt = text;
  const auto pos = corrupt.find("tensor text_trunk.0.weight");
  ASSERT_NE(pos, std::string::npos);
  const auto row = corrupt.find('\n', pos) + 1;
  corrupt.replace(row, 1, "z");
  EXPECT_THROW(parse_checkpoint(corrupt, "mem"), Error);
  std::string no_end = text.substr(0, text.rfind("end"));
  EXPECT_THROW(parse_checkpoint(no_end, "mem"), Error);
}
