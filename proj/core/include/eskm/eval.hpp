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

#include <cstdint>
#include <string>
#include <vector>

#include "eskm/corpus.hpp"

namespace eskm {

struct DiscoveredToken {
  std::string utterance_id;
  int start_frame = 0;
  int end_frame = 0;
  int cluster_id = 0;
  // Filled by map_tokens.
  std::string mapped_word;
  std::vector<std::string> mapped_phones;
};

struct PrfResult {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  long long n_hits = 0;
  long long n_proposed = 0;
  long long n_reference = 0;
};

struct PurityResult {
  double purity = 0.0;
  long long n_majority = 0;  // tokens matching their cluster majority word
  long long n_tokens = 0;
};

struct WerResult {
  double wer = 0.0;
  long long n_substitutions = 0;
  long long n_deletions = 0;
  long long n_insertions = 0;
  long long n_reference = 0;
};

struct NedResult {
  double ned = 0.0;
  long long n_pairs = 0;
  bool capped = false;
};

struct CoverageResult {
  double coverage = 0.0;
  long long covered_frames = 0;
  long long total_frames = 0;
};

struct EvalOptions {
  // Boundary and token matching slack (frames).
  int tolerance_frames = 2;
  // NED pair cap; 0 scores every same-cluster pair. When the cap binds,
  // pairs are reservoir-sampled with `seed`.
  long long max_pairs = 0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

EvalOptions parse_eval_options(KeyValueConfig& cfg,
                               const std::string& prefix = "");

// Fills mapped_word (word-tier label with maximal frame overlap, ties to the
// earlier word) and mapped_phones (phone-tier labels overlapping the token
// for more than half the phone's duration, in order; if none qualifies, the
// single maximal-overlap phone). Throws DataError for tokens outside their
// utterance or unknown utterance ids; requires alignments.
void map_tokens(std::vector<DiscoveredToken>& tokens, const Corpus& corpus);

// Token-weighted fraction of tokens whose mapped word is their cluster's
// majority word. Throws DataError on an empty token list.
PurityResult cluster_purity(const std::vector<DiscoveredToken>& tokens);

// Per utterance, the hypothesis transcript is the cluster-majority word of
// each token in time order; edit-distance counts are aggregated over the
// corpus and divided by the total reference length.
WerResult unsupervised_wer(const std::vector<DiscoveredToken>& tokens,
                           const Corpus& corpus);

// Mean over all unordered same-cluster token pairs, pooled corpus-wide, of
// levenshtein(phones_a, phones_b) / max(|phones_a|, |phones_b|). Throws
// DataError when no pair exists.
NedResult ned(const std::vector<DiscoveredToken>& tokens,
              long long max_pairs = 0, std::uint64_t seed = 0);

// Word-boundary hits under greedy left-to-right matching within
// +-tolerance_frames. Both sides follow the Boundaries convention (sorted,
// final element M); the final boundary and any 0 entries are excluded from
// scoring. The vectors are parallel per utterance.
PrfResult boundary_prf(const std::vector<Boundaries>& proposed,
                       const std::vector<Boundaries>& reference,
                       int tolerance_frames);

// A token is a hit when both its endpoints lie within +-tolerance_frames of
// the endpoints of a reference word, matched greedily one-to-one in time
// order.
PrfResult token_prf(const std::vector<DiscoveredToken>& tokens,
                    const Corpus& corpus, int tolerance_frames);

// Set overlap between unique mapped phone sequences and the reference
// lexicon (unique phone sequences of all true word tokens).
PrfResult type_prf(const std::vector<DiscoveredToken>& tokens,
                   const Corpus& corpus);

// Fraction of corpus frames covered by at least one token.
CoverageResult coverage(const std::vector<DiscoveredToken>& tokens,
                        const Corpus& corpus);

// Reference word boundaries per utterance (word-tier end positions).
std::vector<Boundaries> reference_boundaries(const Corpus& corpus);

struct EvalReport {
  PurityResult purity;
  WerResult wer;
  NedResult ned;
  PrfResult boundary;
  PrfResult token;
  PrfResult type;
  CoverageResult coverage;
};

// Runs every metric. `proposed` holds the hypothesis boundaries parallel to
// corpus order; tokens are mapped internally.
EvalReport evaluate(const Corpus& corpus,
                    const std::vector<Boundaries>& proposed,
                    std::vector<DiscoveredToken> tokens,
                    const EvalOptions& opts = {});

}  // namespace eskm
