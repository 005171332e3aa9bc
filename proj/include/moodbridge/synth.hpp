#pragma once

// Synthetic two-modality corpus for desk-scale experiments.
//
// Each music tag owns a latent center on the unit sphere; each text tag sits
// near the center of the music tag it is mapped to. Items are latent
// center + Gaussian noise pushed through a fixed random affine map per
// modality. A matching VA lexicon and word-embedding table are emitted so
// that VA and word-embedding nearest-tag mappings agree with the ground truth.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "moodbridge/error.hpp"
#include "moodbridge/features.hpp"
#include "moodbridge/numcore.hpp"
#include "moodbridge/rng.hpp"

namespace moodbridge {

struct SynthTextTag {
  std::string tag;
  std::string music_tag;
};

struct SynthSpec {
  std::size_t latent_dim = 8;
  std::size_t text_dim = 32;
  std::size_t music_dim = 48;
  std::size_t word_dim = 16;
  std::vector<std::string> music_tags{"happy", "funny", "sad", "tender", "exciting", "angry", "scary"};
  std::vector<SynthTextTag> text_tags{
      {"anger", "angry"}, {"fearful", "scary"}, {"joy", "happy"}, {"sadness", "sad"}, {"surprised", "exciting"}};
  double cluster_std = 0.1;
  double text_offset = 0.15;
  double min_center_separation = 0.9;
  std::size_t text_per_tag = 400;
  std::size_t music_per_tag = 286;
};

struct SynthCorpus {
  FeatureTable text;
  FeatureTable music;
  std::map<std::string, std::string> mapping;  // text tag -> music tag
  VadLexicon lexicon;
  WordEmbeddingTable embeddings;
  std::map<std::string, Vector> latent_centers;  // every text and music tag
  std::vector<Vector> text_latent;                // per text record, noisy latent point
  std::vector<Vector> music_latent;
};

namespace detail {

inline Vector random_unit(std::size_t dim, Rng& rng) {
  Vector v(dim);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = norm(v);
  } while (n < 1e-12);
  for (double& x : v) x /= n;
  return v;
}

struct AffineMap {
  Matrix a;  // out x latent
  Vector b;

  Vector apply(const Vector& z) const {
    Vector out = b;
    for (std::size_t r = 0; r < a.rows(); ++r) out[r] += dot(a.row(r), z);
    return out;
  }
};

inline AffineMap random_affine(std::size_t out, std::size_t latent, Rng& rng) {
  AffineMap m{Matrix(out, latent), Vector(out)};
  const double s = 1.0 / std::sqrt(static_cast<double>(latent));
  for (double& x : m.a.values()) x = s * rng.normal();
  for (double& x : m.b) x = 0.5 * rng.normal();
  return m;
}

}  // namespace detail

inline SynthCorpus synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.cluster_std < 0.0) fail(ErrorKind::InvalidArgument, "synth: cluster_std must be >= 0");
  if (spec.text_per_tag == 0 || spec.music_per_tag == 0)
    fail(ErrorKind::InvalidArgument, "synth: per-tag counts must be positive");
  if (spec.latent_dim < 2 || spec.text_dim == 0 || spec.music_dim == 0 || spec.word_dim < 2)
    fail(ErrorKind::InvalidArgument, "synth: dimensions too small");
  if (spec.music_tags.empty() || spec.text_tags.empty()) fail(ErrorKind::InvalidArgument, "synth: empty tag list");
  const Vocabulary music_vocab(Modality::Music, spec.music_tags);
  for (const auto& t : spec.text_tags)
    if (!music_vocab.contains(normalize_tag(t.music_tag)))
      fail(ErrorKind::InvalidArgument, "synth: text tag '" + t.tag + "' maps to unknown music tag '" + t.music_tag + "'");

  Rng rng(mix_seed(seed, 0));
  SynthCorpus c;

  // Music centers with rejection sampling on pairwise separation.
  std::vector<Vector> music_centers;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 10000) fail(ErrorKind::InvalidArgument, "synth: cannot place centers with the requested separation");
    music_centers.clear();
    bool ok = true;
    for (std::size_t i = 0; i < spec.music_tags.size() && ok; ++i) {
      Vector v = detail::random_unit(spec.latent_dim, rng);
      for (const auto& other : music_centers)
        if (euclidean_distance(v, other) < spec.min_center_separation) ok = false;
      music_centers.push_back(std::move(v));
    }
    if (ok) break;
  }
  for (std::size_t i = 0; i < spec.music_tags.size(); ++i)
    c.latent_centers[normalize_tag(spec.music_tags[i])] = music_centers[i];
  for (const auto& t : spec.text_tags) {
    const std::string music_tag = normalize_tag(t.music_tag);
    Vector center = c.latent_centers.at(music_tag);
    axpy(center, spec.text_offset, detail::random_unit(spec.latent_dim, rng));
    c.latent_centers[normalize_tag(t.tag)] = normalized(center);
    c.mapping[normalize_tag(t.tag)] = music_tag;
  }

  const auto text_map = detail::random_affine(spec.text_dim, spec.latent_dim, rng);
  const auto music_map = detail::random_affine(spec.music_dim, spec.latent_dim, rng);

  auto fill = [&](FeatureTable& table, std::vector<Vector>& latents, const std::vector<std::string>& tags,
                  std::size_t per_tag, const detail::AffineMap& map, const char* prefix) {
    for (const auto& raw : tags) {
      const std::string tag = normalize_tag(raw);
      const Vector& center = c.latent_centers.at(tag);
      for (std::size_t k = 0; k < per_tag; ++k) {
        Vector z = center;
        for (double& x : z) x += spec.cluster_std * rng.normal();
        FeatureRecord r{std::string(prefix) + "_" + tag + "_" + std::to_string(k), table.modality(), tag, map.apply(z)};
        table.add(std::move(r));
        latents.push_back(std::move(z));
      }
    }
  };
  std::vector<std::string> text_tag_names;
  for (const auto& t : spec.text_tags) text_tag_names.push_back(t.tag);
  c.text = FeatureTable(Modality::Text, spec.text_dim);
  c.music = FeatureTable(Modality::Music, spec.music_dim);
  fill(c.text, c.text_latent, text_tag_names, spec.text_per_tag, text_map, "t");
  fill(c.music, c.music_latent, spec.music_tags, spec.music_per_tag, music_map, "m");

  // VA: music tags on a circle, each text tag within 0.05 of its mapped tag.
  const double pi = 3.14159265358979323846;
  std::map<std::string, std::pair<double, double>> va;
  for (std::size_t i = 0; i < spec.music_tags.size(); ++i) {
    const double ang = 2.0 * pi * static_cast<double>(i) / static_cast<double>(spec.music_tags.size());
    va[normalize_tag(spec.music_tags[i])] = {0.5 + 0.35 * std::cos(ang), 0.5 + 0.35 * std::sin(ang)};
  }
  for (const auto& t : spec.text_tags) {
    const auto base = va.at(normalize_tag(t.music_tag));
    const double ang = 2.0 * pi * rng.uniform();
    va[normalize_tag(t.tag)] = {base.first + 0.05 * std::cos(ang), base.second + 0.05 * std::sin(ang)};
  }
  for (const auto& [tag, p] : va) c.lexicon.add(tag, {p.first, p.second, 0.5});

  // Word vectors: random music directions, text = perturbed copy of the mapped
  // music vector; redraw until every text tag's nearest music tag is its mapping.
  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) fail(ErrorKind::InvalidArgument, "synth: cannot build a consistent word-embedding table");
    std::map<std::string, Vector> words;
    for (const auto& m : spec.music_tags) words[normalize_tag(m)] = detail::random_unit(spec.word_dim, rng);
    for (const auto& t : spec.text_tags) {
      Vector v = words.at(normalize_tag(t.music_tag));
      axpy(v, 0.3, detail::random_unit(spec.word_dim, rng));
      words[normalize_tag(t.tag)] = normalized(v);
    }
    bool consistent = true;
    for (const auto& t : spec.text_tags) {
      const Vector& q = words.at(normalize_tag(t.tag));
      std::string best;
      double best_d = 1e300;
      for (const auto& m : spec.music_tags) {
        const double d = cosine_distance(q, words.at(normalize_tag(m)));
        if (d < best_d) {
          best_d = d;
          best = normalize_tag(m);
        }
      }
      if (best != normalize_tag(t.music_tag)) consistent = false;
    }
    if (!consistent) continue;
    c.embeddings = WordEmbeddingTable(spec.word_dim);
    for (const auto& t : spec.text_tags) c.embeddings.add(t.tag, words.at(normalize_tag(t.tag)));
    for (const auto& m : spec.music_tags) c.embeddings.add(m, words.at(normalize_tag(m)));
    break;
  }
  return c;
}

}  // namespace moodbridge
