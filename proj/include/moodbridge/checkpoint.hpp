#pragma once

// Text checkpoint: a versioned key/value header followed by every parameter
// tensor as hex floats, so a write/read round trip is bit-exact.
//
//   moodbridge-checkpoint 1
//   kind METRIC_3BRANCH
//   ...
//   tensor text_trunk.0.weight 256 32
//   <one line of space-separated hex floats per row>
//   end

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "moodbridge/error.hpp"
#include "moodbridge/features.hpp"
#include "moodbridge/models.hpp"

namespace moodbridge {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::string config_digest;
};

namespace detail {

inline std::string hex_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hex_double(const std::string& s, const std::string& origin, std::size_t line) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') parse_error(origin, line, "bad number '" + s + "'");
  return v;
}

template <class Seq, class Fn>
std::string join(const Seq& items, const char* sep, Fn&& fmt) {
  std::string out;
  bool first = true;
  for (const auto& x : items) {
    if (!first) out += sep;
    out += fmt(x);
    first = false;
  }
  return out;
}

inline void append_tensor(std::string& out, const std::string& name, std::size_t rows, std::size_t cols,
                          std::span<const double> values) {
  out += "tensor " + name + " " + std::to_string(rows) + " " + std::to_string(cols) + "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out += ' ';
      out += hex_double(values[r * cols + c]);
    }
    out += '\n';
  }
}

}  // namespace detail

inline std::string format_checkpoint(const Model& model, const std::string& config_digest) {
  const auto& c = model.config;
  auto num = [](auto x) { return std::to_string(x); };
  std::string out = "moodbridge-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
  out += "kind " + std::string(to_string(c.kind)) + "\n";
  out += "seed " + std::to_string(c.seed) + "\n";
  out += "config_digest " + (config_digest.empty() ? std::string("-") : config_digest) + "\n";
  out += "text_features " + num(model.dims.text_features) + "\n";
  out += "music_features " + num(model.dims.music_features) + "\n";
  out += "word_dim " + num(model.dims.word_dim) + "\n";
  out += "embedding_dim " + num(c.embedding_dim) + "\n";
  out += "margin " + detail::hex_double(c.margin) + "\n";
  out += "hidden " + detail::join(c.hidden, ",", num) + "\n";
  out += "loss_weights " + detail::join(c.loss_weights, ",", detail::hex_double) + "\n";
  auto same = [](const std::string& s) { return s; };
  out += "text_vocab " + detail::join(model.text_vocab.tags(), ",", same) + "\n";
  out += "music_vocab " + detail::join(model.music_vocab.tags(), ",", same) + "\n";
  for (Part part : model.params.present()) {
    const MLPParams& p = model.params.get(part);
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      const std::string base = std::string(to_string(part)) + "." + std::to_string(k);
      const Layer& l = p.layers[k];
      detail::append_tensor(out, base + ".weight", l.weight.rows(), l.weight.cols(), l.weight.values());
      detail::append_tensor(out, base + ".bias", 1, l.bias.size(), l.bias);
    }
  }
  out += "end\n";
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& text, const std::string& origin) {
  const auto lines = detail::lines_of(text);
  std::size_t ln = 0;
  auto next = [&]() -> std::vector<std::string> {
    if (ln >= lines.size()) fail(ErrorKind::Data, origin + ": truncated checkpoint");
    return detail::split_ws(lines[ln++]);
  };
  auto header = [&](const char* key) -> std::string {
    const auto f = next();
    if (f.size() != 2 || f[0] != key) detail::parse_error(origin, ln, std::string("expected '") + key + " <value>'");
    return f[1];
  };
  auto to_size = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      detail::parse_error(origin, ln, "bad count '" + s + "'");
    return static_cast<std::size_t>(std::stoull(s));
  };

  const auto magic = next();
  if (magic.size() != 2 || magic[0] != "moodbridge-checkpoint")
    detail::parse_error(origin, ln, "not a moodbridge checkpoint");
  if (magic[1] != std::to_string(kCheckpointVersion))
    detail::parse_error(origin, ln, "unsupported checkpoint version " + magic[1]);

  StrategyConfig cfg;
  ModelDims dims;
  Checkpoint ck;
  try {
    cfg.kind = parse_strategy(header("kind"));
  } catch (const Error& e) {
    detail::parse_error(origin, ln, e.what());
  }
  cfg.seed = to_size(header("seed"));
  ck.config_digest = header("config_digest");
  if (ck.config_digest == "-") ck.config_digest.clear();
  dims.text_features = to_size(header("text_features"));
  dims.music_features = to_size(header("music_features"));
  dims.word_dim = to_size(header("word_dim"));
  cfg.embedding_dim = to_size(header("embedding_dim"));
  cfg.margin = detail::parse_hex_double(header("margin"), origin, ln);
  cfg.hidden.clear();
  for (const auto& h : detail::split(header("hidden"), ',')) cfg.hidden.push_back(to_size(h));
  const auto weights = detail::split(header("loss_weights"), ',');
  if (weights.size() != 3) detail::parse_error(origin, ln, "loss_weights needs 3 values");
  for (std::size_t i = 0; i < 3; ++i) cfg.loss_weights[i] = detail::parse_hex_double(weights[i], origin, ln);
  Vocabulary text_vocab(Modality::Text, detail::split(header("text_vocab"), ','));
  Vocabulary music_vocab(Modality::Music, detail::split(header("music_vocab"), ','));

  // The skeleton fixes the expected tensor list and shapes.
  ck.model = make_model(cfg, std::move(text_vocab), std::move(music_vocab), dims);
  for (Part part : ck.model.params.present()) {
    MLPParams& p = ck.model.params.get(part);
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      const std::string base = std::string(to_string(part)) + "." + std::to_string(k);
      auto read_tensor = [&](const std::string& name, std::size_t rows, std::size_t cols, std::span<double> dst) {
        const auto f = next();
        if (f.size() != 4 || f[0] != "tensor" || f[1] != name)
          detail::parse_error(origin, ln, "expected tensor '" + name + "'");
        if (to_size(f[2]) != rows || to_size(f[3]) != cols)
          fail(ErrorKind::Dimension, origin + ":" + std::to_string(ln) + ": tensor '" + name + "' has shape " + f[2] +
                                         "x" + f[3] + ", expected " + std::to_string(rows) + "x" +
                                         std::to_string(cols));
        for (std::size_t r = 0; r < rows; ++r) {
          const auto vals = next();
          if (vals.size() != cols) detail::parse_error(origin, ln, "row of '" + name + "' has the wrong length");
          for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] = detail::parse_hex_double(vals[c], origin, ln);
        }
      };
      Layer& l = p.layers[k];
      read_tensor(base + ".weight", l.weight.rows(), l.weight.cols(), l.weight.values());
      read_tensor(base + ".bias", 1, l.bias.size(), l.bias);
    }
  }
  const auto tail = next();
  if (tail.size() != 1 || tail[0] != "end") detail::parse_error(origin, ln, "expected 'end'");
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(detail::read_file(path), path); }

inline void write_checkpoint(const std::string& path, const Model& model, const std::string& config_digest) {
  write_text_file(path, format_checkpoint(model, config_digest));
}

}  // namespace moodbridge
