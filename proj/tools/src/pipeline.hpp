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

#include <filesystem>
#include <string>
#include <vector>

#include "eskm/besgmm.hpp"
#include "eskm/corpus.hpp"
#include "eskm/eskmeans.hpp"
#include "eskm/eval.hpp"

namespace eskm {
namespace tools {

// Per-phase seed streams derived from the top-level `seed` key.
inline constexpr std::uint64_t kSeedSynthPhase = 11;
inline constexpr std::uint64_t kSeedSegmentPhase = 12;
inline constexpr std::uint64_t kSeedEvalPhase = 13;
inline constexpr std::uint64_t kSeedSweepPhase = 14;

// --- segment/eval file formats -------------------------------------------

void write_boundaries(const std::filesystem::path& dir, const Corpus& corpus,
                      const Segmentation& seg);
// Reads boundaries/<id>.txt for every corpus utterance; light validation
// (sorted, last entry = M).
std::vector<Boundaries> read_boundaries(const std::filesystem::path& dir,
                                        const Corpus& corpus);

// Lines `utt start end cluster_id`.
void write_clusters(const std::filesystem::path& file, const Corpus& corpus,
                    const std::vector<SegmentRecord>& segments);
std::vector<DiscoveredToken> read_clusters(const std::filesystem::path& file);

// Columns epoch,objective,n_boundary_changes,n_assignment_changes,
// wall_time_s; row 0 is the initialization.
void write_trace_csv(const std::filesystem::path& file,
                     const std::vector<EpochStats>& trace);

// cache/<id>.txt, one line per catalog entry: `start end dim v_1 ... v_nD`.
void write_cache_dump(const std::filesystem::path& dir,
                      const EmbeddingCache& cache);

void write_report_json(const std::filesystem::path& file,
                       const EvalReport& report);

// FNV-1a 64 over relative paths and file contents, hex encoded.
std::string corpus_fingerprint(const std::filesystem::path& dir);

// --- phases ---------------------------------------------------------------

struct PhaseTimings {
  double synth_s = 0.0;
  double segment_s = 0.0;
  double eval_s = 0.0;
};

// Generates the corpus described by the synth.* keys into corpus_dir.
void run_synth(KeyValueConfig& cfg, const std::filesystem::path& corpus_dir);

// Builds the cache from embed.* keys and runs the model selected by the
// `model` key (eskmeans | besgmm) with the segment.* keys; writes
// boundaries/, clusters.txt, trace.csv (and cache/ when dump_cache).
void run_segment(KeyValueConfig& cfg, const Corpus& corpus,
                 const std::filesystem::path& out_dir, int workers,
                 bool dump_cache);

// Scores the hypothesis files in hyp_dir against the corpus and writes
// report_file.
EvalReport run_eval(KeyValueConfig& cfg, const Corpus& corpus,
                    const std::filesystem::path& hyp_dir,
                    const std::filesystem::path& report_file);

struct PipelineOutcome {
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  bool has_report = false;
  EvalReport report;
  PhaseTimings timings;
};

// Runs the phases listed in the `phases` key (subset of synth segment eval,
// executed in that canonical order), then writes manifest.json atomically.
// Unknown config keys raise ConfigError.
PipelineOutcome run_pipeline(KeyValueConfig& cfg,
                             const std::filesystem::path& out_dir);

// One full pipeline per value of `sweep.values` applied to the numeric key
// `sweep.key`, each with a derived seed, collected into sweep.csv. The runs
// must include the eval phase.
void run_sweep(KeyValueConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace tools
}  // namespace eskm
