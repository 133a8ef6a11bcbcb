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

#include "eskm/embedding.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "eskm/error.hpp"

namespace eskm {

Vector downsample_embed(
    const Eigen::Ref<const Matrix, 0, Eigen::OuterStride<>>& segment,
    int n_samples) {
  const int m = static_cast<int>(segment.rows());
  const int d = static_cast<int>(segment.cols());
  if (m < 1 || d < 1) throw DataError("downsample_embed: empty segment");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");

  Vector out(static_cast<Eigen::Index>(n_samples) * d);
  for (int k = 0; k < n_samples; ++k) {
    const double p = n_samples == 1
                         ? 0.5 * (m - 1)
                         : static_cast<double>(k) * (m - 1) / (n_samples - 1);
    const int lo = static_cast<int>(std::floor(p));
    const double frac = p - lo;
    if (frac == 0.0) {
      out.segment(static_cast<Eigen::Index>(k) * d, d) =
          segment.row(lo).transpose();
    } else {
      out.segment(static_cast<Eigen::Index>(k) * d, d) =
          ((1.0 - frac) * segment.row(lo) + frac * segment.row(lo + 1))
              .transpose();
    }
  }
  return out;
}

void EmbedConfig::validate() const {
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (max_landmark_span < 1) throw ConfigError("max_landmark_span must be >= 1");
  if (min_frames < 0) throw ConfigError("min_frames must be >= 0");
}

EmbedConfig parse_embed_config(KeyValueConfig& cfg, const std::string& p) {
  EmbedConfig out;
  out.n_samples = static_cast<int>(cfg.get_int(p + "n_samples", out.n_samples));
  out.max_landmark_span = static_cast<int>(
      cfg.get_int(p + "max_landmark_span", out.max_landmark_span));
  out.min_frames = static_cast<int>(cfg.get_int(p + "min_frames", out.min_frames));
  out.normalize = cfg.get_bool(p + "normalize", out.normalize);
  out.validate();
  return out;
}

int default_min_frames(double frame_period_s) {
  if (frame_period_s <= 0.0) throw DataError("non-positive frame period");
  return static_cast<int>(std::ceil(0.2 / frame_period_s));
}

std::vector<CandidateSegment> candidate_segments(const Landmarks& landmarks,
                                                 int max_landmark_span,
                                                 int min_frames) {
  std::vector<int> positions;
  positions.reserve(landmarks.positions.size() + 1);
  positions.push_back(0);
  positions.insert(positions.end(), landmarks.positions.begin(),
                   landmarks.positions.end());

  std::vector<CandidateSegment> out;
  const int b = static_cast<int>(positions.size()) - 1;
  for (int j = 1; j <= b; ++j) {
    for (int i = std::max(0, j - max_landmark_span); i < j; ++i) {
      if (positions[j] - positions[i] < min_frames) continue;
      out.push_back({i, j, positions[i], positions[j]});
    }
  }
  return out;
}

int UtteranceCache::find_row(int start_landmark, int end_landmark) const {
  const int n = n_positions();
  if (start_landmark < 0 || end_landmark < 0 || start_landmark >= n ||
      end_landmark >= n) {
    return -1;
  }
  return row_of[static_cast<size_t>(start_landmark) * n + end_landmark];
}

int UtteranceCache::require_row(int start_landmark, int end_landmark) const {
  const int row = find_row(start_landmark, end_landmark);
  if (row < 0) {
    throw DataError("utterance " + utterance_id + ": segment (" +
                    std::to_string(start_landmark) + ", " +
                    std::to_string(end_landmark) + "] is not in the catalog");
  }
  return row;
}

EmbeddingCache build_cache(const Corpus& corpus, const EmbedConfig& cfg,
                           int n_workers) {
  cfg.validate();
  if (corpus.size() == 0) throw DataError("corpus has no utterances");

  EmbeddingCache cache;
  cache.n_samples = cfg.n_samples;
  cache.feature_dim = corpus.feature_dim();
  cache.max_landmark_span = cfg.max_landmark_span;
  cache.min_frames =
      cfg.min_frames > 0
          ? cfg.min_frames
          : default_min_frames(corpus.utterances.front().frame_period_s);
  cache.normalized = cfg.normalize;
  cache.utterances.resize(corpus.size());

  for (int u = 0; u < corpus.size(); ++u) {
    UtteranceCache& uc = cache.utterances[u];
    uc.utterance_id = corpus.utterances[u].id;
    uc.positions.push_back(0);
    uc.positions.insert(uc.positions.end(),
                        corpus.landmarks[u].positions.begin(),
                        corpus.landmarks[u].positions.end());
    uc.catalog = candidate_segments(corpus.landmarks[u],
                                    cache.max_landmark_span, cache.min_frames);
    if (uc.catalog.empty()) {
      throw DataError("utterance " + uc.utterance_id +
                      ": no admissible candidate segments (min_frames = " +
                      std::to_string(cache.min_frames) + ")");
    }
    const int n = uc.n_positions();
    uc.row_of.assign(static_cast<size_t>(n) * n, -1);
    uc.end_row_begin.assign(n + 1, 0);
    for (int r = 0; r < uc.n_entries(); ++r) {
      const auto& seg = uc.catalog[r];
      uc.row_of[static_cast<size_t>(seg.start_landmark) * n +
                seg.end_landmark] = r;
      uc.end_row_begin[seg.end_landmark + 1] = r + 1;
    }
    // Catalog rows are sorted by end landmark; landmarks with no admissible
    // candidate inherit the previous cumulative count.
    for (int j = 1; j <= n; ++j) {
      uc.end_row_begin[j] =
          std::max(uc.end_row_begin[j], uc.end_row_begin[j - 1]);
    }
  }

  const auto embed_one = [&](int u) {
    const Utterance& utt = corpus.utterances[u];
    UtteranceCache& uc = cache.utterances[u];
    uc.embeddings.resize(uc.n_entries(), cache.dim());
    for (int r = 0; r < uc.n_entries(); ++r) {
      const auto& seg = uc.catalog[r];
      Vector emb = downsample_embed(
          utt.frames.middleRows(seg.start_frame, seg.length_frames()),
          cache.n_samples);
      if (cfg.normalize) {
        const double norm = emb.norm();
        if (norm > 0.0) emb /= norm;
      }
      uc.embeddings.row(r) = emb.transpose();
    }
  };

  const int workers = std::max(1, std::min(n_workers, corpus.size()));
  if (workers == 1) {
    for (int u = 0; u < corpus.size(); ++u) embed_one(u);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int u = next.fetch_add(1); u < corpus.size();
             u = next.fetch_add(1)) {
          embed_one(u);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  int next_id = 0;
  for (int u = 0; u < corpus.size(); ++u) {
    UtteranceCache& uc = cache.utterances[u];
    uc.first_entry_id = next_id;
    for (int r = 0; r < uc.n_entries(); ++r) {
      cache.entry_utterance.push_back(u);
      cache.entry_row.push_back(r);
    }
    next_id += uc.n_entries();
  }
  return cache;
}

}  // namespace eskm
