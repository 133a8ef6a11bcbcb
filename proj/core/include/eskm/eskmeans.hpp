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
#include <utility>
#include <vector>

#include "eskm/embedding.hpp"

namespace eskm {

// Named RNG streams. Every random choice inside fit/fit_parallel draws from
// a seed derived as derive_seed(cfg.seed, stream), so tests can replay any
// single stream without re-running the others.
inline constexpr std::uint64_t kSeedBoundaries = 1;   // + derive per utterance
inline constexpr std::uint64_t kSeedAssignments = 2;
inline constexpr std::uint64_t kSeedSweep = 3;
inline constexpr std::uint64_t kSeedRestart = 4;      // + derive per restart

enum class MeanMode { kExact, kApprox };
enum class EmptyClusterPolicy { kLeaveEmpty, kReseedFarthest };

// Per-utterance sorted boundary frame positions; the last entry is always M.
struct Segmentation {
  std::vector<Boundaries> per_utterance;
};

struct ClusterState {
  RowMatrix means;                        // K x (n_samples * D)
  std::vector<int> assignment;            // per global entry; -1 = inactive
  std::vector<std::vector<int>> members;  // per cluster, ascending entry ids
  std::vector<int> counts;                // N_c
  std::vector<double> weighted_counts;    // sum of len(x) over members

  int k() const { return static_cast<int>(means.rows()); }
  int dim() const { return static_cast<int>(means.cols()); }
  int n_active() const;
  // Checks member/count/assignment consistency; throws DataError.
  void check_consistent() const;
};

struct EskmConfig {
  // K. 0 selects the fraction rule: round(k_fraction * total number of
  // landmark-delimited intervals in the corpus), at least 1.
  int k = 0;
  double k_fraction = 0.2;
  int n_epochs = 100;
  double init_boundary_p = 0.5;
  MeanMode mean_mode = MeanMode::kApprox;
  EmptyClusterPolicy empty_cluster_policy = EmptyClusterPolicy::kLeaveEmpty;
  std::uint64_t seed = 0;
  // fit_parallel: utterances per barrier-synchronized batch; 0 = one batch
  // per epoch.
  int batch_size = 0;
  int n_workers = 1;

  void validate() const;  // throws ConfigError
};

EskmConfig parse_eskm_config(KeyValueConfig& cfg,
                             const std::string& prefix = "");

int resolve_k(const EskmConfig& cfg, const EmbeddingCache& cache);

// len_frames * |x - mean|^2.
double score(const Eigen::Ref<const Eigen::RowVectorXd>& x, double len_frames,
             const Eigen::Ref<const Eigen::RowVectorXd>& mean);

// Nearest mean in squared Euclidean distance; ties to the lowest index.
// The duration factor cannot change this argmin.
int assign(const Eigen::Ref<const Eigen::RowVectorXd>& x,
           const RowMatrix& means);

// min_c len_frames * |x - mu_c|^2; *best_cluster (optional) receives the
// minimizing index, ties to the lowest.
double best_cluster_score(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                          double len_frames, const RowMatrix& means,
                          int* best_cluster = nullptr);

struct ViterbiTable {
  // gamma[j] = optimal cumulative score of a segmentation of the first j
  // landmark intervals; gamma[0] = 0, unreachable positions are +inf.
  std::vector<double> gamma;
  // Start landmark index of the chosen final segment per position; -1 unset.
  // Score ties prefer the longest segment (smallest start index).
  std::vector<int> backpointer;
};

// Pure DP over precomputed per-catalog-row scores (row_scores[r] = d of
// catalog row r).
ViterbiTable viterbi_segment(const UtteranceCache& uc,
                             const std::vector<double>& row_scores);

// Boundary frame positions from the backpointers; throws DataError naming
// the utterance when the final position is unreachable.
Boundaries backtrace(const UtteranceCache& uc, const ViterbiTable& table);

// Optimal boundaries for one utterance under fixed means, and the path
// score. Per-candidate score is d(x) = min_c len(x) * |x - mu_c|^2. If
// row_best_cluster is given it receives, per catalog row, the minimizing
// cluster (the same id a subsequent reassignment would pick).
std::pair<Boundaries, double> segment_utterance(
    const UtteranceCache& uc, const RowMatrix& means,
    std::vector<int>* row_best_cluster = nullptr);

// Sum of score(x, len, mean of assigned cluster) over all segments of the
// segmentation. Throws DataError on a segment missing from the catalog or
// not assigned.
double objective(const EmbeddingCache& cache, const Segmentation& seg,
                 const ClusterState& state);

// Recomputes every cluster mean from its member list (ascending entry id
// order, so results do not depend on update history). Exact mode weights by
// len(x); approx mode is the unweighted mean. Empty clusters keep their
// previous mean (kLeaveEmpty) or jump to the active embedding with the worst
// current score (kReseedFarthest).
void update_means(ClusterState& state, const EmbeddingCache& cache,
                  MeanMode mode,
                  EmptyClusterPolicy policy = EmptyClusterPolicy::kLeaveEmpty);

// Random initial boundaries restricted to catalog-admissible segmentations:
// a left-to-right walk accepts each admissible continuation that can still
// reach the final landmark with probability p, and is forced onto the last
// such option. Coincides with the unconstrained per-landmark Bernoulli
// draw when the constraints permit every choice. Throws DataError when no
// admissible segmentation exists.
Boundaries init_admissible_boundaries(const UtteranceCache& uc, double p,
                                      std::uint64_t seed);

struct EpochStats {
  double objective = 0.0;
  int n_boundary_changes = 0;    // summed symmetric difference of boundaries
  int n_assignment_changes = 0;  // re-embedded segments with a new cluster
  double wall_time_s = 0.0;
};

struct FitResult {
  Segmentation segmentation;
  ClusterState state;
  // trace[0] describes the random initialization; trace[e] the state after
  // epoch e.
  std::vector<EpochStats> trace;
  bool converged = false;
  int n_epochs_run = 0;
};

// Serial reference: per epoch, a random permutation of utterances; per
// utterance, Viterbi re-segmentation, reassignment of the new segments, and
// a mean update. Stops when an epoch changes nothing, or at n_epochs.
FitResult fit(const EmbeddingCache& cache, const EskmConfig& cfg);

// Batch-parallel variant: within a batch all utterances are re-segmented and
// reassigned against frozen means (concurrently across cfg.n_workers);
// means update once at the batch barrier. Output depends on cfg.batch_size
// but not on the worker count; batch_size = 1 reproduces fit exactly.
FitResult fit_parallel(const EmbeddingCache& cache, const EskmConfig& cfg);

// Runs fit (or fit_parallel when cfg.batch_size > 0) n_restarts times with
// per-restart derived seeds and keeps the run with the lowest final
// objective; ties keep the earliest restart.
FitResult fit_restarts(const EmbeddingCache& cache, const EskmConfig& cfg,
                       int n_restarts);

// Active segments in (utterance, start frame) order, with their clusters.
struct SegmentRecord {
  int utterance = 0;
  int start_frame = 0;
  int end_frame = 0;
  int cluster = 0;
};

std::vector<SegmentRecord> active_segments(const EmbeddingCache& cache,
                                           const ClusterState& state);

}  // namespace eskm
