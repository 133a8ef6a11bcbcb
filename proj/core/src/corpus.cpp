// Copyright 2026 The eskmeans Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "eskm/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "eskm/error.hpp"
#include "eskm/rng.hpp"

namespace eskm {

namespace fs = std::filesystem;

namespace {

// Shortest round-trip decimal form, the canonical on-disk number format.
std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_real(const std::string& token, const std::string& where) {
  double out = 0.0;
  const auto res =
      std::from_chars(token.data(), token.data() + token.size(), out);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw DataError(where + ": bad real value: " + token);
  }
  return out;
}

long long parse_int(const std::string& token, const std::string& where) {
  long long out = 0;
  const auto res =
      std::from_chars(token.data(), token.data() + token.size(), out);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw DataError(where + ": bad integer value: " + token);
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string loc(const fs::path& file, int lineno) {
  return file.string() + ":" + std::to_string(lineno);
}

void check_tier_tiles(const std::vector<AlignedSpan>& tier, int m,
                      const std::string& id, const char* tier_name) {
  if (tier.empty()) {
    throw DataError("utterance " + id + ": empty " + tier_name + " tier");
  }
  int cursor = 0;
  for (const auto& span : tier) {
    if (span.start != cursor || span.end <= span.start) {
      throw DataError("utterance " + id + ": " + tier_name +
                      " tier does not tile [0, M] at frame " +
                      std::to_string(span.start));
    }
    cursor = span.end;
  }
  if (cursor != m) {
    throw DataError("utterance " + id + ": " + tier_name +
                    " tier ends at " + std::to_string(cursor) +
                    ", expected M = " + std::to_string(m));
  }
}

}  // namespace

int Corpus::feature_dim() const {
  return utterances.empty() ? 0 : utterances.front().dim();
}

int Corpus::total_frames() const {
  int total = 0;
  for (const auto& u : utterances) total += u.num_frames();
  return total;
}

int Corpus::index_of(const std::string& id) const {
  for (int i = 0; i < size(); ++i) {
    if (utterances[i].id == id) return i;
  }
  return -1;
}

void Corpus::validate() const {
  if (utterances.empty()) throw DataError("corpus has no utterances");
  if (landmarks.size() != utterances.size()) {
    throw DataError("corpus has " + std::to_string(landmarks.size()) +
                    " landmark sets for " + std::to_string(utterances.size()) +
                    " utterances");
  }
  if (!alignments.empty() && alignments.size() != utterances.size()) {
    throw DataError("corpus has partial alignments: " +
                    std::to_string(alignments.size()) + " of " +
                    std::to_string(utterances.size()));
  }
  const int d = feature_dim();
  std::set<std::string> seen;
  for (size_t i = 0; i < utterances.size(); ++i) {
    const auto& u = utterances[i];
    if (!seen.insert(u.id).second) {
      throw DataError("duplicate utterance id: " + u.id);
    }
    if (u.num_frames() < 1 || u.dim() < 1) {
      throw DataError("utterance " + u.id + ": empty feature matrix");
    }
    if (u.dim() != d) {
      throw DataError("utterance " + u.id + ": feature dimension " +
                      std::to_string(u.dim()) + " != corpus dimension " +
                      std::to_string(d));
    }
    if (!u.frames.allFinite()) {
      throw DataError("utterance " + u.id + ": non-finite feature value");
    }
    if (u.frame_period_s <= 0.0) {
      throw DataError("utterance " + u.id + ": non-positive frame period");
    }

    const auto& lm = landmarks[i];
    if (lm.utterance_id != u.id) {
      throw DataError("landmark set " + lm.utterance_id +
                      " out of order with utterance " + u.id);
    }
    if (lm.positions.empty()) {
      throw DataError("utterance " + u.id + ": no landmarks");
    }
    int prev = 0;
    for (int pos : lm.positions) {
      if (pos <= prev) {
        throw DataError("utterance " + u.id +
                        ": landmarks not strictly increasing at " +
                        std::to_string(pos));
      }
      prev = pos;
    }
    if (lm.positions.back() != u.num_frames()) {
      throw DataError("utterance " + u.id + ": final landmark " +
                      std::to_string(lm.positions.back()) +
                      " != M = " + std::to_string(u.num_frames()));
    }

    if (!alignments.empty()) {
      const auto& al = alignments[i];
      if (al.utterance_id != u.id) {
        throw DataError("alignment " + al.utterance_id +
                        " out of order with utterance " + u.id);
      }
      check_tier_tiles(al.words, u.num_frames(), u.id, "word");
      check_tier_tiles(al.phones, u.num_frames(), u.id, "phone");
    }
  }
}

Corpus load_corpus(const fs::path& dir) {
  const fs::path feat_dir = dir / "features";
  const fs::path lm_dir = dir / "landmarks";
  const fs::path align_dir = dir / "alignments";
  if (!fs::is_directory(feat_dir)) {
    throw DataError("corpus directory has no features/: " + dir.string());
  }
  if (!fs::is_directory(lm_dir)) {
    throw DataError("corpus directory has no landmarks/: " + dir.string());
  }

  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(feat_dir)) {
    if (entry.path().extension() == ".txt") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) {
    throw DataError("no feature files in " + feat_dir.string());
  }

  const bool have_alignments = fs::is_directory(align_dir);
  Corpus corpus;
  for (const auto& id : ids) {
    const fs::path feat_file = feat_dir / (id + ".txt");
    std::ifstream in(feat_file);
    if (!in) throw DataError("cannot open " + feat_file.string());

    std::string line;
    if (!std::getline(in, line)) {
      throw DataError(loc(feat_file, 1) + ": missing header line");
    }
    const auto header = split_ws(line);
    if (header.size() != 3) {
      throw DataError(loc(feat_file, 1) +
                      ": header must be `M D frame_period_s`");
    }
    const int m = static_cast<int>(parse_int(header[0], loc(feat_file, 1)));
    const int d = static_cast<int>(parse_int(header[1], loc(feat_file, 1)));
    if (m < 1 || d < 1) {
      throw DataError(loc(feat_file, 1) + ": M and D must be >= 1");
    }

    Utterance utt;
    utt.id = id;
    utt.frame_period_s = parse_real(header[2], loc(feat_file, 1));
    utt.frames.resize(m, d);
    for (int r = 0; r < m; ++r) {
      if (!std::getline(in, line)) {
        throw DataError(feat_file.string() + ": expected " +
                        std::to_string(m) + " frame rows, got " +
                        std::to_string(r));
      }
      const auto toks = split_ws(line);
      if (static_cast<int>(toks.size()) != d) {
        throw DataError(loc(feat_file, r + 2) + ": expected " +
                        std::to_string(d) + " values, got " +
                        std::to_string(toks.size()));
      }
      for (int c = 0; c < d; ++c) {
        const double v = parse_real(toks[c], loc(feat_file, r + 2));
        if (!std::isfinite(v)) {
          throw DataError(loc(feat_file, r + 2) +
                          ": non-finite feature value in utterance " + id);
        }
        utt.frames(r, c) = v;
      }
    }

    const fs::path lm_file = lm_dir / (id + ".txt");
    std::ifstream lm_in(lm_file);
    if (!lm_in) {
      throw DataError("utterance " + id + ": missing landmark file " +
                      lm_file.string());
    }
    Landmarks lm;
    lm.utterance_id = id;
    int lineno = 0;
    while (std::getline(lm_in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const int pos =
          static_cast<int>(parse_int(line, loc(lm_file, lineno)));
      if (pos < 1 || pos > m) {
        throw DataError(loc(lm_file, lineno) + ": landmark " +
                        std::to_string(pos) + " outside (0, M] for utterance " +
                        id + " (M = " + std::to_string(m) + ")");
      }
      lm.positions.push_back(pos);
    }

    corpus.utterances.push_back(std::move(utt));
    corpus.landmarks.push_back(std::move(lm));

    if (have_alignments) {
      const fs::path align_file = align_dir / (id + ".txt");
      std::ifstream al_in(align_file);
      if (!al_in) {
        throw DataError("utterance " + id + ": missing alignment file " +
                        align_file.string());
      }
      Alignment al;
      al.utterance_id = id;
      lineno = 0;
      while (std::getline(al_in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto toks = split_ws(line);
        if (toks.size() != 4 || (toks[0] != "W" && toks[0] != "P")) {
          throw DataError(loc(align_file, lineno) +
                          ": expected `W|P start end label`");
        }
        AlignedSpan span;
        span.start =
            static_cast<int>(parse_int(toks[1], loc(align_file, lineno)));
        span.end =
            static_cast<int>(parse_int(toks[2], loc(align_file, lineno)));
        span.label = toks[3];
        (toks[0] == "W" ? al.words : al.phones).push_back(std::move(span));
      }
      corpus.alignments.push_back(std::move(al));
    }
  }

  corpus.validate();
  return corpus;
}

void write_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "landmarks");
  if (corpus.has_alignments()) fs::create_directories(dir / "alignments");

  for (int i = 0; i < corpus.size(); ++i) {
    const auto& u = corpus.utterances[i];
    {
      std::ofstream out(dir / "features" / (u.id + ".txt"));
      out << u.num_frames() << ' ' << u.dim() << ' '
          << format_real(u.frame_period_s) << '\n';
      for (int r = 0; r < u.num_frames(); ++r) {
        for (int c = 0; c < u.dim(); ++c) {
          if (c) out << ' ';
          out << format_real(u.frames(r, c));
        }
        out << '\n';
      }
    }
    {
      std::ofstream out(dir / "landmarks" / (u.id + ".txt"));
      for (int pos : corpus.landmarks[i].positions) out << pos << '\n';
    }
    if (corpus.has_alignments()) {
      std::ofstream out(dir / "alignments" / (u.id + ".txt"));
      for (const auto& span : corpus.alignments[i].words) {
        out << "W " << span.start << ' ' << span.end << ' ' << span.label
            << '\n';
      }
      for (const auto& span : corpus.alignments[i].phones) {
        out << "P " << span.start << ' ' << span.end << ' ' << span.label
            << '\n';
      }
    }
  }
}

void SynthConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (frames_per_word_min < 1 || frames_per_word_max < frames_per_word_min) {
    throw ConfigError("frames_per_word range is empty");
  }
  if (words_per_utterance_min < 1 ||
      words_per_utterance_max < words_per_utterance_min) {
    throw ConfigError("words_per_utterance range is empty");
  }
  if (n_utterances < 1) throw ConfigError("n_utterances must be >= 1");
  if (noise_sigma <= 0.0) throw ConfigError("noise_sigma must be > 0");
  if (prototype_separation < 0.0) {
    throw ConfigError("prototype_separation must be >= 0");
  }
  if (distractor_landmark_rate < 0.0 || distractor_landmark_rate > 1.0) {
    throw ConfigError("distractor_landmark_rate must lie in [0, 1]");
  }
  if (frame_period_s <= 0.0) throw ConfigError("frame_period_s must be > 0");
}

SynthConfig parse_synth_config(KeyValueConfig& cfg, const std::string& p) {
  SynthConfig out;
  out.vocab_size = static_cast<int>(cfg.get_int(p + "vocab_size", out.vocab_size));
  out.feature_dim = static_cast<int>(cfg.get_int(p + "feature_dim", out.feature_dim));
  out.frames_per_word_min = static_cast<int>(
      cfg.get_int(p + "frames_per_word_min", out.frames_per_word_min));
  out.frames_per_word_max = static_cast<int>(
      cfg.get_int(p + "frames_per_word_max", out.frames_per_word_max));
  out.words_per_utterance_min = static_cast<int>(
      cfg.get_int(p + "words_per_utterance_min", out.words_per_utterance_min));
  out.words_per_utterance_max = static_cast<int>(
      cfg.get_int(p + "words_per_utterance_max", out.words_per_utterance_max));
  out.n_utterances =
      static_cast<int>(cfg.get_int(p + "n_utterances", out.n_utterances));
  out.prototype_separation =
      cfg.get_real(p + "prototype_separation", out.prototype_separation);
  out.noise_sigma = cfg.get_real(p + "noise_sigma", out.noise_sigma);
  out.distractor_landmark_rate = cfg.get_real(p + "distractor_landmark_rate",
                                              out.distractor_landmark_rate);
  out.frame_period_s = cfg.get_real(p + "frame_period_s", out.frame_period_s);
  out.seed = cfg.get_seed(p + "seed", out.seed);
  out.validate();
  return out;
}

namespace {

struct WordPrototype {
  Matrix frames;                    // L_v x D, the Gaussian-mean sequence
  std::vector<std::string> phones;  // pseudo phone labels
};

std::vector<WordPrototype> draw_vocabulary(const SynthConfig& cfg, Rng& rng) {
  const double min_dist = cfg.prototype_separation * cfg.noise_sigma;
  // Scale keeps the requested separation feasible for small vocabularies;
  // the retry loop below enforces it exactly.
  const double scale = std::max(1.0, min_dist);
  constexpr int kMaxAttempts = 1000;

  std::vector<Vector> base_means;
  for (int v = 0; v < cfg.vocab_size; ++v) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      Vector mean(cfg.feature_dim);
      for (int d = 0; d < cfg.feature_dim; ++d) mean[d] = scale * rng.normal();
      placed = true;
      for (const auto& other : base_means) {
        if ((mean - other).norm() < min_dist) {
          placed = false;
          break;
        }
      }
      if (placed) base_means.push_back(std::move(mean));
    }
    if (!placed) {
      throw ConfigError(
          "could not place word prototypes at the requested separation (" +
          std::to_string(cfg.prototype_separation) + " noise-sigma units)");
    }
  }

  // Phone inventory shared across words; sequences deduplicated so that the
  // true lexicon has one phone sequence per word type.
  const int inventory = std::max(4, cfg.vocab_size + 2);
  std::set<std::vector<std::string>> used_sequences;
  std::vector<WordPrototype> vocab(cfg.vocab_size);
  for (int v = 0; v < cfg.vocab_size; ++v) {
    const int length = rng.uniform_int(cfg.frames_per_word_min,
                                       cfg.frames_per_word_max);
    vocab[v].frames.resize(length, cfg.feature_dim);
    for (int r = 0; r < length; ++r) {
      for (int c = 0; c < cfg.feature_dim; ++c) {
        vocab[v].frames(r, c) = base_means[v][c] + cfg.noise_sigma * rng.normal();
      }
    }

    std::vector<std::string> phones;
    for (int attempt = 0; attempt < 100; ++attempt) {
      phones.clear();
      const int n_phones = std::min(length, rng.uniform_int(2, 4));
      for (int k = 0; k < n_phones; ++k) {
        phones.push_back("p" + std::to_string(rng.uniform_int(inventory)));
      }
      if (used_sequences.insert(phones).second) break;
      phones.clear();
    }
    if (phones.empty()) {
      phones.push_back("q" + std::to_string(v));  // forced-unique fallback
      used_sequences.insert(phones);
    }
    vocab[v].phones = std::move(phones);
  }
  return vocab;
}

}  // namespace

Corpus generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto vocab = draw_vocabulary(cfg, rng);

  Corpus corpus;
  for (int i = 0; i < cfg.n_utterances; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "utt%04d", i);

    const int n_words = rng.uniform_int(cfg.words_per_utterance_min,
                                        cfg.words_per_utterance_max);
    std::vector<int> word_ids(n_words);
    int total_frames = 0;
    for (int w = 0; w < n_words; ++w) {
      word_ids[w] = rng.uniform_int(cfg.vocab_size);
      total_frames += static_cast<int>(vocab[word_ids[w]].frames.rows());
    }

    Utterance utt;
    utt.id = name;
    utt.frame_period_s = cfg.frame_period_s;
    utt.frames.resize(total_frames, cfg.feature_dim);

    Alignment align;
    align.utterance_id = name;
    Landmarks lm;
    lm.utterance_id = name;

    int cursor = 0;
    for (int w = 0; w < n_words; ++w) {
      const auto& proto = vocab[word_ids[w]];
      const int len = static_cast<int>(proto.frames.rows());
      for (int r = 0; r < len; ++r) {
        for (int c = 0; c < cfg.feature_dim; ++c) {
          utt.frames(cursor + r, c) =
              proto.frames(r, c) + cfg.noise_sigma * rng.normal();
        }
      }
      align.words.push_back(
          {cursor, cursor + len, "w" + std::to_string(word_ids[w])});
      const int n_phones = static_cast<int>(proto.phones.size());
      for (int k = 0; k < n_phones; ++k) {
        const int ps = cursor + k * len / n_phones;
        const int pe = cursor + (k + 1) * len / n_phones;
        align.phones.push_back({ps, pe, proto.phones[k]});
      }
      cursor += len;
      lm.positions.push_back(cursor);
    }

    // Distractor landmarks: at most one per true word, strictly inside the
    // word and at least 2 frames away from existing landmarks.
    std::vector<int> distractors;
    for (const auto& word : align.words) {
      if (!rng.bernoulli(cfg.distractor_landmark_rate)) continue;
      const int lo = word.start + 2;
      const int hi = word.end - 2;
      if (lo > hi) continue;
      distractors.push_back(rng.uniform_int(lo, hi));
    }
    lm.positions.insert(lm.positions.end(), distractors.begin(),
                        distractors.end());
    std::sort(lm.positions.begin(), lm.positions.end());
    lm.positions.erase(
        std::unique(lm.positions.begin(), lm.positions.end()),
        lm.positions.end());

    corpus.utterances.push_back(std::move(utt));
    corpus.landmarks.push_back(std::move(lm));
    corpus.alignments.push_back(std::move(align));
  }

  corpus.validate();
  return corpus;
}

Boundaries init_boundaries(const Landmarks& landmarks, double p,
                           std::uint64_t seed) {
  if (landmarks.positions.empty()) {
    throw DataError("utterance " + landmarks.utterance_id + ": no landmarks");
  }
  Rng rng(seed);
  Boundaries out;
  const int n = static_cast<int>(landmarks.positions.size());
  for (int i = 0; i < n - 1; ++i) {
    if (rng.bernoulli(p)) out.push_back(landmarks.positions[i]);
  }
  out.push_back(landmarks.positions.back());
  return out;
}

}  // namespace eskm
