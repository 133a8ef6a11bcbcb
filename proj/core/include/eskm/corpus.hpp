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

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "eskm/config.hpp"

namespace eskm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One utterance: M feature frames of dimension D.
struct Utterance {
  std::string id;
  Matrix frames;  // M x D
  double frame_period_s = 0.01;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

// Candidate word-boundary frame positions for one utterance. Positions are
// strictly increasing in (0, M] and the last entry is always M. Position 0
// is an implicit boundary and never stored.
struct Landmarks {
  std::string utterance_id;
  std::vector<int> positions;
};

struct AlignedSpan {
  int start = 0;  // frame, inclusive
  int end = 0;    // frame, exclusive
  std::string label;
};

// Ground-truth word and phone tiers; each tier tiles [0, M].
struct Alignment {
  std::string utterance_id;
  std::vector<AlignedSpan> words;
  std::vector<AlignedSpan> phones;
};

struct Corpus {
  std::vector<Utterance> utterances;
  std::vector<Landmarks> landmarks;    // parallel to utterances
  std::vector<Alignment> alignments;   // empty, or parallel to utterances

  int size() const { return static_cast<int>(utterances.size()); }
  bool has_alignments() const { return !alignments.empty(); }
  int feature_dim() const;
  int total_frames() const;
  int index_of(const std::string& id) const;  // -1 if unknown

  // Checks every type invariant; throws DataError naming the utterance.
  void validate() const;
};

struct SynthConfig {
  int vocab_size = 5;
  int feature_dim = 13;
  int frames_per_word_min = 15;
  int frames_per_word_max = 30;
  int words_per_utterance_min = 3;
  int words_per_utterance_max = 6;
  int n_utterances = 50;
  double prototype_separation = 10.0;  // min pairwise prototype-mean distance, in noise-sigma units
  double noise_sigma = 1.0;
  double distractor_landmark_rate = 0.0;
  double frame_period_s = 0.01;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// Reads SynthConfig fields from `<prefix>vocab_size` etc.
SynthConfig parse_synth_config(KeyValueConfig& cfg,
                               const std::string& prefix = "");

// Directory layout: features/<id>.txt, landmarks/<id>.txt and optionally
// alignments/<id>.txt. See the README for the exact line formats.
Corpus load_corpus(const std::filesystem::path& dir);

// Canonical formatting: write_corpus(load_corpus(dir)) is byte-identical
// for directories that were produced by write_corpus.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

// Draws a vocabulary of word prototypes with enforced pairwise separation,
// concatenates sampled words into utterances with additive Gaussian noise,
// and records ground-truth word/phone tiers. Landmarks are the true word
// boundaries plus distractors inserted strictly inside words.
Corpus generate_synthetic(const SynthConfig& cfg);

// Sorted boundary frame positions for one utterance; last element is M.
using Boundaries = std::vector<int>;

// Selects each non-final landmark independently with probability p; the
// final landmark (position M) is always a boundary.
Boundaries init_boundaries(const Landmarks& landmarks, double p,
                           std::uint64_t seed);

}  // namespace eskm
