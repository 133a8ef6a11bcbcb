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

#include "eskm/eskmeans.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "eskm/error.hpp"
#include "eskm/rng.hpp"

namespace eskm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int landmark_index(const UtteranceCache& uc, int frame) {
  const auto it =
      std::lower_bound(uc.positions.begin(), uc.positions.end(), frame);
  if (it == uc.positions.end() || *it != frame) {
    throw DataError("utterance " + uc.utterance_id + ": frame " +
                    std::to_string(frame) + " is not a landmark position");
  }
  return static_cast<int>(it - uc.positions.begin());
}

// Catalog rows of the segments delimited by sorted boundary positions.
std::vector<int> rows_for_boundaries(const UtteranceCache& uc,
                                     const Boundaries& bounds) {
  std::vector<int> rows;
  rows.reserve(bounds.size());
  int prev = 0;
  for (int b : bounds) {
    const int j = landmark_index(uc, b);
    rows.push_back(uc.require_row(prev, j));
    prev = j;
  }
  return rows;
}

void remove_member(ClusterState& st, const EmbeddingCache& cache, int c,
                   int entry) {
  auto& m = st.members[c];
  const auto it = std::lower_bound(m.begin(), m.end(), entry);
  m.erase(it);
  --st.counts[c];
  st.weighted_counts[c] -= cache.entry_length(entry);
  st.assignment[entry] = -1;
}

void add_member(ClusterState& st, const EmbeddingCache& cache, int c,
                int entry) {
  auto& m = st.members[c];
  m.insert(std::lower_bound(m.begin(), m.end(), entry), entry);
  ++st.counts[c];
  st.weighted_counts[c] += cache.entry_length(entry);
  st.assignment[entry] = c;
}

// Recomputes one non-empty cluster mean from its member list. Members are
// kept in ascending entry-id order, so the summation order (and hence the
// floating-point result) is independent of update history.
void recompute_mean(ClusterState& st, const EmbeddingCache& cache, int c,
                    MeanMode mode) {
  if (st.members[c].empty()) return;  // leave-empty: mean stays frozen
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(st.dim());
  double denom = 0.0;
  for (int e : st.members[c]) {
    if (mode == MeanMode::kExact) {
      const double len = cache.entry_length(e);
      acc += len * cache.embedding(e);
      denom += len;
    } else {
      acc += cache.embedding(e);
      denom += 1.0;
    }
  }
  st.means.row(c) = acc / denom;
}

void reseed_empty_clusters(ClusterState& st, const EmbeddingCache& cache,
                           const std::vector<int>& empty_clusters) {
  if (empty_clusters.empty()) return;
  // Active embeddings by current score, worst first; ties keep the lower
  // entry id. Successive empty clusters take successive embeddings.
  std::vector<std::pair<double, int>> scored;
  for (int e = 0; e < cache.size(); ++e) {
    const int z = st.assignment[e];
    if (z < 0) continue;
    scored.emplace_back(
        score(cache.embedding(e), cache.entry_length(e), st.means.row(z)), e);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  size_t next = 0;
  for (int c : empty_clusters) {
    if (next >= scored.size()) break;
    st.means.row(c) = cache.embedding(scored[next++].second);
  }
}

// Recomputes the means of the given clusters (sorted, unique); applies the
// empty-cluster policy to those among them that lost all members.
void recompute_clusters(ClusterState& st, const EmbeddingCache& cache,
                        const std::vector<int>& clusters, MeanMode mode,
                        EmptyClusterPolicy policy) {
  std::vector<int> empties;
  for (int c : clusters) {
    if (st.counts[c] > 0) {
      recompute_mean(st, cache, c, mode);
    } else if (policy == EmptyClusterPolicy::kReseedFarthest) {
      empties.push_back(c);
    }
  }
  reseed_empty_clusters(st, cache, empties);
}

int count_symmetric_difference(const Boundaries& a, const Boundaries& b) {
  int diff = 0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++i, ++j;
    } else if (a[i] < b[j]) {
      ++diff, ++i;
    } else {
      ++diff, ++j;
    }
  }
  return diff + static_cast<int>(a.size() - i) + static_cast<int>(b.size() - j);
}

struct UtteranceProposal {
  Boundaries bounds;
  std::vector<int> rows;
  std::vector<int> clusters;  // per row
};

UtteranceProposal propose_utterance(const UtteranceCache& uc,
                                    const RowMatrix& means) {
  UtteranceProposal prop;
  std::vector<int> row_best;
  prop.bounds = segment_utterance(uc, means, &row_best).first;
  prop.rows = rows_for_boundaries(uc, prop.bounds);
  prop.clusters.reserve(prop.rows.size());
  for (int r : prop.rows) prop.clusters.push_back(row_best[r]);
  return prop;
}

// Swaps in the proposed segments for utterance u: retires the old entries,
// activates the new ones, and collects the clusters whose membership
// changed. Returns (boundary changes, assignment changes).
std::pair<int, int> apply_proposal(ClusterState& st,
                                   const EmbeddingCache& cache, int u,
                                   const UtteranceProposal& prop,
                                   Boundaries* bounds,
                                   std::vector<int>* current_rows,
                                   std::vector<int>* affected) {
  const UtteranceCache& uc = cache.utterances[u];
  const int bc = count_symmetric_difference(*bounds, prop.bounds);

  std::vector<int> prev(prop.rows.size());
  for (size_t i = 0; i < prop.rows.size(); ++i) {
    prev[i] = st.assignment[uc.first_entry_id + prop.rows[i]];
  }
  for (int r : *current_rows) {
    const int e = uc.first_entry_id + r;
    const int c = st.assignment[e];
    affected->push_back(c);
    remove_member(st, cache, c, e);
  }
  int ac = 0;
  for (size_t i = 0; i < prop.rows.size(); ++i) {
    const int e = uc.first_entry_id + prop.rows[i];
    add_member(st, cache, prop.clusters[i], e);
    affected->push_back(prop.clusters[i]);
    if (prop.clusters[i] != prev[i]) ++ac;
  }
  *bounds = prop.bounds;
  *current_rows = prop.rows;
  return {bc, ac};
}

void sort_unique(std::vector<int>* v) {
  std::sort(v->begin(), v->end());
  v->erase(std::unique(v->begin(), v->end()), v->end());
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Shared by fit and fit_parallel: random boundaries, random assignments,
// one mean update.
void initialize(const EmbeddingCache& cache, const EskmConfig& cfg, int k,
                FitResult* res, ClusterState* st,
                std::vector<std::vector<int>>* current_rows) {
  const int s = static_cast<int>(cache.utterances.size());
  res->segmentation.per_utterance.resize(s);
  current_rows->resize(s);

  st->means = RowMatrix::Zero(k, cache.dim());
  st->assignment.assign(cache.size(), -1);
  st->members.assign(k, {});
  st->counts.assign(k, 0);
  st->weighted_counts.assign(k, 0.0);

  const std::uint64_t bounds_seed = derive_seed(cfg.seed, kSeedBoundaries);
  Rng assign_rng(derive_seed(cfg.seed, kSeedAssignments));
  for (int u = 0; u < s; ++u) {
    const UtteranceCache& uc = cache.utterances[u];
    Boundaries bounds = init_admissible_boundaries(uc, cfg.init_boundary_p,
                                                   derive_seed(bounds_seed, u));
    (*current_rows)[u] = rows_for_boundaries(uc, bounds);
    for (int r : (*current_rows)[u]) {
      add_member(*st, cache, assign_rng.uniform_int(k), uc.first_entry_id + r);
    }
    res->segmentation.per_utterance[u] = std::move(bounds);
  }
  update_means(*st, cache, cfg.mean_mode, cfg.empty_cluster_policy);
  res->trace.push_back(
      {objective(cache, res->segmentation, *st), 0, 0, 0.0});
}

}  // namespace

int ClusterState::n_active() const {
  int n = 0;
  for (int c : counts) n += c;
  return n;
}

void ClusterState::check_consistent() const {
  std::vector<int> recount(k(), 0);
  for (int e = 0; e < static_cast<int>(assignment.size()); ++e) {
    const int z = assignment[e];
    if (z < 0) continue;
    if (z >= k()) throw DataError("assignment out of range");
    ++recount[z];
    const auto& m = members[z];
    if (!std::binary_search(m.begin(), m.end(), e)) {
      throw DataError("entry " + std::to_string(e) +
                      " missing from member list of cluster " +
                      std::to_string(z));
    }
  }
  for (int c = 0; c < k(); ++c) {
    if (recount[c] != counts[c] ||
        counts[c] != static_cast<int>(members[c].size())) {
      throw DataError("cluster " + std::to_string(c) +
                      " count disagrees with member list");
    }
  }
  if (!means.allFinite()) throw DataError("non-finite cluster mean");
}

void EskmConfig::validate() const {
  if (k < 0) throw ConfigError("k must be >= 0 (0 selects the fraction rule)");
  if (k == 0 && k_fraction <= 0.0) {
    throw ConfigError("k_fraction must be > 0");
  }
  if (n_epochs < 1) throw ConfigError("n_epochs must be >= 1");
  if (init_boundary_p < 0.0 || init_boundary_p > 1.0) {
    throw ConfigError("init_boundary_p must lie in [0, 1]");
  }
  if (batch_size < 0) throw ConfigError("batch_size must be >= 0");
  if (n_workers < 1) throw ConfigError("n_workers must be >= 1");
}

EskmConfig parse_eskm_config(KeyValueConfig& cfg, const std::string& p) {
  EskmConfig out;
  out.k = static_cast<int>(cfg.get_int(p + "k", out.k));
  out.k_fraction = cfg.get_real(p + "k_fraction", out.k_fraction);
  out.n_epochs = static_cast<int>(cfg.get_int(p + "n_epochs", out.n_epochs));
  out.init_boundary_p =
      cfg.get_real(p + "init_boundary_p", out.init_boundary_p);
  const std::string mode = cfg.get_string(p + "mean_mode", "approx");
  if (mode == "exact") {
    out.mean_mode = MeanMode::kExact;
  } else if (mode == "approx") {
    out.mean_mode = MeanMode::kApprox;
  } else {
    throw ConfigError(p + "mean_mode must be `exact` or `approx`, got `" +
                      mode + "`");
  }
  const std::string policy =
      cfg.get_string(p + "empty_cluster_policy", "leave-empty");
  if (policy == "leave-empty") {
    out.empty_cluster_policy = EmptyClusterPolicy::kLeaveEmpty;
  } else if (policy == "reseed-farthest") {
    out.empty_cluster_policy = EmptyClusterPolicy::kReseedFarthest;
  } else {
    throw ConfigError(p +
                      "empty_cluster_policy must be `leave-empty` or "
                      "`reseed-farthest`, got `" +
                      policy + "`");
  }
  out.seed = cfg.get_seed(p + "seed", out.seed);
  out.batch_size =
      static_cast<int>(cfg.get_int(p + "batch_size", out.batch_size));
  out.n_workers =
      static_cast<int>(cfg.get_int(p + "n_workers", out.n_workers));
  out.validate();
  return out;
}

int resolve_k(const EskmConfig& cfg, const EmbeddingCache& cache) {
  if (cfg.k > 0) return cfg.k;
  long long intervals = 0;
  for (const auto& uc : cache.utterances) intervals += uc.n_positions() - 1;
  const int k = static_cast<int>(std::lround(cfg.k_fraction * intervals));
  return std::max(1, k);
}

double score(const Eigen::Ref<const Eigen::RowVectorXd>& x, double len_frames,
             const Eigen::Ref<const Eigen::RowVectorXd>& mean) {
  if (x.size() != mean.size()) {
    throw DataError("score: dimension mismatch (" + std::to_string(x.size()) +
                    " vs " + std::to_string(mean.size()) + ")");
  }
  return len_frames * (x - mean).squaredNorm();
}

int assign(const Eigen::Ref<const Eigen::RowVectorXd>& x,
           const RowMatrix& means) {
  int best = 0;
  double best_dist = (x - means.row(0)).squaredNorm();
  for (int c = 1; c < means.rows(); ++c) {
    const double dist = (x - means.row(c)).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

double best_cluster_score(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                          double len_frames, const RowMatrix& means,
                          int* best_cluster) {
  const int best = assign(x, means);
  if (best_cluster != nullptr) *best_cluster = best;
  return len_frames * (x - means.row(best)).squaredNorm();
}

ViterbiTable viterbi_segment(const UtteranceCache& uc,
                             const std::vector<double>& row_scores) {
  const int b = uc.n_positions() - 1;
  ViterbiTable table;
  table.gamma.assign(b + 1, kInf);
  table.backpointer.assign(b + 1, -1);
  table.gamma[0] = 0.0;
  for (int j = 1; j <= b; ++j) {
    // Rows ending at j are ordered by start landmark; the strict comparison
    // keeps the first (longest-segment) minimizer on ties.
    for (int r = uc.end_row_begin[j]; r < uc.end_row_begin[j + 1]; ++r) {
      const int i = uc.catalog[r].start_landmark;
      const double val = row_scores[r] + table.gamma[i];
      if (val < table.gamma[j]) {
        table.gamma[j] = val;
        table.backpointer[j] = i;
      }
    }
  }
  return table;
}

Boundaries backtrace(const UtteranceCache& uc, const ViterbiTable& table) {
  const int b = uc.n_positions() - 1;
  if (!std::isfinite(table.gamma[b])) {
    throw DataError("utterance " + uc.utterance_id +
                    ": no admissible segmentation");
  }
  Boundaries out;
  for (int j = b; j > 0; j = table.backpointer[j]) {
    out.push_back(uc.positions[j]);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::pair<Boundaries, double> segment_utterance(
    const UtteranceCache& uc, const RowMatrix& means,
    std::vector<int>* row_best_cluster) {
  std::vector<double> scores(uc.n_entries());
  if (row_best_cluster != nullptr) row_best_cluster->resize(uc.n_entries());
  for (int r = 0; r < uc.n_entries(); ++r) {
    int best = 0;
    scores[r] = best_cluster_score(uc.embeddings.row(r),
                                   uc.catalog[r].length_frames(), means, &best);
    if (row_best_cluster != nullptr) (*row_best_cluster)[r] = best;
  }
  const ViterbiTable table = viterbi_segment(uc, scores);
  Boundaries bounds = backtrace(uc, table);
  const double path_score = table.gamma[uc.n_positions() - 1];
  return {std::move(bounds), path_score};
}

double objective(const EmbeddingCache& cache, const Segmentation& seg,
                 const ClusterState& state) {
  if (seg.per_utterance.size() != cache.utterances.size()) {
    throw DataError("segmentation covers " +
                    std::to_string(seg.per_utterance.size()) + " of " +
                    std::to_string(cache.utterances.size()) + " utterances");
  }
  double total = 0.0;
  for (size_t u = 0; u < cache.utterances.size(); ++u) {
    const UtteranceCache& uc = cache.utterances[u];
    for (int r : rows_for_boundaries(uc, seg.per_utterance[u])) {
      const int e = uc.first_entry_id + r;
      const int z = state.assignment[e];
      if (z < 0) {
        throw DataError("utterance " + uc.utterance_id +
                        ": active segment has no cluster assignment");
      }
      total += score(uc.embeddings.row(r), uc.catalog[r].length_frames(),
                     state.means.row(z));
    }
  }
  return total;
}

void update_means(ClusterState& state, const EmbeddingCache& cache,
                  MeanMode mode, EmptyClusterPolicy policy) {
  std::vector<int> all(state.k());
  for (int c = 0; c < state.k(); ++c) all[c] = c;
  recompute_clusters(state, cache, all, mode, policy);
}

Boundaries init_admissible_boundaries(const UtteranceCache& uc, double p,
                                      std::uint64_t seed) {
  const int b = uc.n_positions() - 1;
  const int span = b;  // find_row already encodes the span constraint
  std::vector<char> feasible(b + 1, 0);
  feasible[b] = 1;
  for (int j = b - 1; j >= 0; --j) {
    for (int j2 = j + 1; j2 <= std::min(b, j + span); ++j2) {
      if (feasible[j2] && uc.find_row(j, j2) >= 0) {
        feasible[j] = 1;
        break;
      }
    }
  }
  if (!feasible[0]) {
    throw DataError("utterance " + uc.utterance_id +
                    ": no admissible segmentation");
  }

  Rng rng(seed);
  Boundaries out;
  int cur = 0;
  std::vector<int> options;
  while (cur < b) {
    options.clear();
    for (int j2 = cur + 1; j2 <= b; ++j2) {
      if (feasible[j2] && uc.find_row(cur, j2) >= 0) options.push_back(j2);
    }
    int chosen = options.back();
    for (size_t t = 0; t + 1 < options.size(); ++t) {
      if (rng.bernoulli(p)) {
        chosen = options[t];
        break;
      }
    }
    cur = chosen;
    out.push_back(uc.positions[cur]);
  }
  return out;
}

FitResult fit(const EmbeddingCache& cache, const EskmConfig& cfg) {
  cfg.validate();
  const int s = static_cast<int>(cache.utterances.size());
  const int k = resolve_k(cfg, cache);

  FitResult res;
  ClusterState st;
  std::vector<std::vector<int>> current_rows;
  initialize(cache, cfg, k, &res, &st, &current_rows);

  Rng sweep_rng(derive_seed(cfg.seed, kSeedSweep));
  std::vector<int> affected;
  for (int epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> order = random_permutation(s, sweep_rng);
    int bc = 0, ac = 0;
    for (int u : order) {
      const UtteranceProposal prop =
          propose_utterance(cache.utterances[u], st.means);
      affected.clear();
      const auto [dbc, dac] =
          apply_proposal(st, cache, u, prop, &res.segmentation.per_utterance[u],
                         &current_rows[u], &affected);
      bc += dbc;
      ac += dac;
      sort_unique(&affected);
      recompute_clusters(st, cache, affected, cfg.mean_mode,
                         cfg.empty_cluster_policy);
    }
    res.trace.push_back({objective(cache, res.segmentation, st), bc, ac,
                         elapsed_s(t0)});
    res.n_epochs_run = epoch;
    if (bc == 0 && ac == 0) {
      res.converged = true;
      break;
    }
  }
  res.state = std::move(st);
  return res;
}

FitResult fit_parallel(const EmbeddingCache& cache, const EskmConfig& cfg) {
  cfg.validate();
  const int s = static_cast<int>(cache.utterances.size());
  const int k = resolve_k(cfg, cache);
  const int batch = cfg.batch_size == 0 ? s : std::min(cfg.batch_size, s);

  FitResult res;
  ClusterState st;
  std::vector<std::vector<int>> current_rows;
  initialize(cache, cfg, k, &res, &st, &current_rows);

  Rng sweep_rng(derive_seed(cfg.seed, kSeedSweep));
  std::vector<UtteranceProposal> proposals(s);
  std::vector<int> affected;
  for (int epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> order = random_permutation(s, sweep_rng);
    int bc = 0, ac = 0;
    for (int begin = 0; begin < s; begin += batch) {
      const int end = std::min(s, begin + batch);
      // Segment and assign every utterance of the batch against the means
      // frozen at the batch boundary.
      const auto work = [&](int idx) {
        const int u = order[idx];
        proposals[u] = propose_utterance(cache.utterances[u], st.means);
      };
      const int workers = std::max(1, std::min(cfg.n_workers, end - begin));
      if (workers == 1) {
        for (int idx = begin; idx < end; ++idx) work(idx);
      } else {
        std::atomic<int> next{begin};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
          pool.emplace_back([&] {
            for (int idx = next.fetch_add(1); idx < end;
                 idx = next.fetch_add(1)) {
              work(idx);
            }
          });
        }
        for (auto& t : pool) t.join();
      }
      affected.clear();
      for (int idx = begin; idx < end; ++idx) {
        const int u = order[idx];
        const auto [dbc, dac] = apply_proposal(
            st, cache, u, proposals[u], &res.segmentation.per_utterance[u],
            &current_rows[u], &affected);
        bc += dbc;
        ac += dac;
      }
      sort_unique(&affected);
      recompute_clusters(st, cache, affected, cfg.mean_mode,
                         cfg.empty_cluster_policy);
    }
    res.trace.push_back({objective(cache, res.segmentation, st), bc, ac,
                         elapsed_s(t0)});
    res.n_epochs_run = epoch;
    if (bc == 0 && ac == 0) {
      res.converged = true;
      break;
    }
  }
  res.state = std::move(st);
  return res;
}

FitResult fit_restarts(const EmbeddingCache& cache, const EskmConfig& cfg,
                       int n_restarts) {
  if (n_restarts < 1) throw ConfigError("n_restarts must be >= 1");
  const std::uint64_t restart_seed = derive_seed(cfg.seed, kSeedRestart);
  FitResult best;
  for (int r = 0; r < n_restarts; ++r) {
    EskmConfig run_cfg = cfg;
    run_cfg.seed = derive_seed(restart_seed, static_cast<std::uint64_t>(r));
    FitResult res =
        cfg.batch_size > 0 ? fit_parallel(cache, run_cfg) : fit(cache, run_cfg);
    if (r == 0 ||
        res.trace.back().objective < best.trace.back().objective) {
      best = std::move(res);
    }
  }
  return best;
}

std::vector<SegmentRecord> active_segments(const EmbeddingCache& cache,
                                           const ClusterState& state) {
  std::vector<SegmentRecord> out;
  for (size_t u = 0; u < cache.utterances.size(); ++u) {
    const UtteranceCache& uc = cache.utterances[u];
    const size_t before = out.size();
    for (int r = 0; r < uc.n_entries(); ++r) {
      const int z = state.assignment[uc.first_entry_id + r];
      if (z < 0) continue;
      out.push_back({static_cast<int>(u), uc.catalog[r].start_frame,
                     uc.catalog[r].end_frame, z});
    }
    std::sort(out.begin() + before, out.end(),
              [](const SegmentRecord& a, const SegmentRecord& b) {
                return a.start_frame < b.start_frame;
              });
  }
  return out;
}

}  // namespace eskm
