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

#include <string>
#include <vector>

#include "eskm/corpus.hpp"

namespace eskm {

// Row-major so that individual embeddings are contiguous rows.
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Uniform downsampling embedding: n_samples frames are read off an
// endpoint-inclusive grid over [0, m-1] with linear interpolation between
// adjacent frames, then concatenated frame-major into one vector of length
// n_samples * D. A single-sample grid reads the segment midpoint; a
// single-frame segment repeats that frame. The Ref binds matrix blocks
// (row ranges of a feature matrix) without copying.
Vector downsample_embed(
    const Eigen::Ref<const Matrix, 0, Eigen::OuterStride<>>& segment,
    int n_samples);

struct EmbedConfig {
  int n_samples = 10;
  int max_landmark_span = 6;
  // 0 means derive from the frame period: ceil(0.2 s / frame_period_s).
  int min_frames = 0;
  // Divide each embedding by its Euclidean norm. Off by default; clustering
  // operates on raw flattened features.
  bool normalize = false;

  void validate() const;
};

EmbedConfig parse_embed_config(KeyValueConfig& cfg,
                               const std::string& prefix = "");

int default_min_frames(double frame_period_s);

// Candidate segment between two landmark positions. Landmark index 0 is the
// implicit utterance start; index i >= 1 is Landmarks::positions[i - 1].
struct CandidateSegment {
  int start_landmark = 0;
  int end_landmark = 0;
  int start_frame = 0;
  int end_frame = 0;

  int length_frames() const { return end_frame - start_frame; }
};

// All (i, j) pairs with 1 <= j - i <= max_landmark_span and frame length
// >= min_frames, ordered by end frame then start frame.
std::vector<CandidateSegment> candidate_segments(const Landmarks& landmarks,
                                                 int max_landmark_span,
                                                 int min_frames);

struct UtteranceCache {
  std::string utterance_id;
  // positions[i] = frame of landmark index i; positions[0] = 0,
  // positions.back() = M.
  std::vector<int> positions;
  std::vector<CandidateSegment> catalog;
  // One embedding per catalog entry, same order.
  RowMatrix embeddings;
  // Global id of catalog row 0; rows map to consecutive global ids.
  int first_entry_id = 0;
  // row_of[i * (B + 1) + j] = catalog row for the pair (i, j), -1 if absent,
  // where B + 1 = positions.size().
  std::vector<int> row_of;
  // Catalog rows with end landmark j occupy [end_row_begin[j],
  // end_row_begin[j + 1]).
  std::vector<int> end_row_begin;

  int n_positions() const { return static_cast<int>(positions.size()); }
  int n_entries() const { return static_cast<int>(catalog.size()); }
  // Catalog row for the landmark pair (i, j), or -1 if not admissible.
  int find_row(int start_landmark, int end_landmark) const;
  // Same, but throws DataError for pairs outside the catalog.
  int require_row(int start_landmark, int end_landmark) const;
};

struct EmbeddingCache {
  int n_samples = 0;
  int feature_dim = 0;
  int min_frames = 0;
  int max_landmark_span = 0;
  bool normalized = false;
  std::vector<UtteranceCache> utterances;
  // Global entry id -> (utterance index, catalog row).
  std::vector<int> entry_utterance;
  std::vector<int> entry_row;

  int dim() const { return n_samples * feature_dim; }
  int size() const { return static_cast<int>(entry_utterance.size()); }
  const CandidateSegment& segment(int entry) const {
    return utterances[entry_utterance[entry]].catalog[entry_row[entry]];
  }
  int entry_length(int entry) const { return segment(entry).length_frames(); }
  Eigen::Ref<const Eigen::RowVectorXd> embedding(int entry) const {
    return utterances[entry_utterance[entry]].embeddings.row(
        entry_row[entry]);
  }
};

// Embeds every admissible candidate segment of every utterance. Work is
// split over n_workers threads by utterance; the result does not depend on
// the worker count. Throws DataError if some utterance has no admissible
// candidate at all.
EmbeddingCache build_cache(const Corpus& corpus, const EmbedConfig& cfg,
                           int n_workers = 1);

}  // namespace eskm
