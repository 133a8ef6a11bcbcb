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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "eskm/corpus.hpp"
#include "eskm/embedding.hpp"
#include "eskm/error.hpp"
#include "eskm/eskmeans.hpp"
#include "eskm/eval.hpp"
#include "eskm/rng.hpp"
#include "oracles.hpp"

using namespace eskm;
using eskm::testing::enumerate_min_score;
using eskm::testing::count_admissible_paths;

namespace {

RowMatrix row_means(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = static_cast<int>(rows.begin()->size());
  RowMatrix m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Eigen::RowVectorXd rvec(std::initializer_list<double> vals) {
  Eigen::RowVectorXd v(static_cast<int>(vals.size()));
  int i = 0;
  for (double x : vals) v(i++) = x;
  return v;
}

// One utterance of constant frames per "word"; landmark every word end.
Corpus constant_word_corpus(const std::vector<double>& values, int word_frames,
                            int dim) {
  Corpus corpus;
  Utterance u;
  u.id = "u0";
  const int n = static_cast<int>(values.size());
  u.frames = Matrix::Zero(n * word_frames, dim);
  Landmarks lm;
  lm.utterance_id = "u0";
  for (int w = 0; w < n; ++w) {
    for (int f = 0; f < word_frames; ++f) {
      u.frames.row(w * word_frames + f).setConstant(values[w]);
    }
    lm.positions.push_back((w + 1) * word_frames);
  }
  corpus.utterances.push_back(u);
  corpus.landmarks.push_back(lm);
  return corpus;
}

}  // namespace

TEST_CASE("score is duration times squared distance") {
  CHECK(score(rvec({1.0}), 3.0, rvec({0.0})) == 3.0);
  CHECK(score(rvec({1.0, 1.0}), 7.0, rvec({1.0, 1.0})) == 0.0);
  CHECK(score(rvec({1.0, 1.0}), 2.0, rvec({0.0, 0.0})) == 4.0);
  CHECK_THROWS_AS(score(rvec({1.0}), 1.0, rvec({0.0, 0.0})), DataError);
}

TEST_CASE("assign picks the nearest mean with lowest-index ties") {
  const RowMatrix means = row_means({{0.0, 0.0}, {1.0, 1.0}});
  CHECK(assign(rvec({0.0, 0.0}), means) == 0);
  const RowMatrix line = row_means({{0.0}, {1.0}});
  CHECK(assign(rvec({0.5}), line) == 0);
  CHECK(assign(rvec({0.9}), line) == 1);
}

TEST_CASE("best_cluster_score scales the winning distance by duration") {
  const RowMatrix means = row_means({{0.0}, {1.0}});
  int c = -1;
  CHECK(best_cluster_score(rvec({0.9}), 5.0, means, &c) ==
        doctest::Approx(5.0 * 0.01 / 1.0).epsilon(1e-12));
  CHECK(c == 1);
  CHECK(best_cluster_score(rvec({0.5}), 2.0, means, &c) == 0.5);
  CHECK(c == 0);
}

TEST_CASE("duration factor never changes the argmin") {
  Rng rng(404);
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = 2 + rng.uniform_int(7);
    const int dim = 1 + rng.uniform_int(6);
    RowMatrix means(k, dim);
    for (int c = 0; c < k; ++c) {
      for (int d = 0; d < dim; ++d) means(c, d) = rng.normal();
    }
    Eigen::RowVectorXd x(dim);
    for (int d = 0; d < dim; ++d) x(d) = rng.normal();
    const double len = 1.0 + rng.uniform_int(30);
    int weighted = 0;
    double best = score(x, len, means.row(0));
    for (int c = 1; c < k; ++c) {
      const double s = score(x, len, means.row(c));
      if (s < best) {
        best = s;
        weighted = c;
      }
    }
    CHECK(assign(x, means) == weighted);
  }
}

TEST_CASE("the dp reproduces the worked two-landmark example") {
  const Corpus corpus = constant_word_corpus({0.0, 0.0}, 2, 1);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 2, 1, 1);
  const UtteranceCache& uc = cache.utterances[0];
  REQUIRE(uc.n_entries() == 3);
  // Rows ordered by end then start: (0,2], (0,4], (2,4].
  std::vector<double> row_scores(3);
  row_scores[uc.require_row(0, 1)] = 3.0;
  row_scores[uc.require_row(0, 2)] = 7.0;
  row_scores[uc.require_row(1, 2)] = 3.0;
  const ViterbiTable table = viterbi_segment(uc, row_scores);
  CHECK(table.gamma[0] == 0.0);
  CHECK(table.gamma[2] == 6.0);
  CHECK(backtrace(uc, table) == Boundaries{2, 4});
}

TEST_CASE("score ties choose the longer final segment") {
  const Corpus corpus = constant_word_corpus({0.0, 0.0}, 1, 1);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 2, 1, 1);
  const UtteranceCache& uc = cache.utterances[0];
  std::vector<double> row_scores(3);
  row_scores[uc.require_row(0, 1)] = 1.0;
  row_scores[uc.require_row(1, 2)] = 1.0;
  row_scores[uc.require_row(0, 2)] = 2.0;
  const ViterbiTable table = viterbi_segment(uc, row_scores);
  CHECK(table.gamma[2] == 2.0);
  CHECK(backtrace(uc, table) == Boundaries{2});
}

TEST_CASE("single landmark has exactly one path") {
  const Corpus corpus = constant_word_corpus({1.0}, 5, 1);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 1, 2);
  const RowMatrix means = row_means({{0.0, 0.0}});
  const auto [bounds, path_score] = segment_utterance(
      cache.utterances[0], means);
  CHECK(bounds == Boundaries{5});
  CHECK(path_score == 5.0 * 2.0);  // len 5, squared distance 1 per sample
}

TEST_CASE("gamma satisfies the relaxation inequalities") {
  SynthConfig scfg;
  scfg.vocab_size = 3;
  scfg.n_utterances = 4;
  scfg.distractor_landmark_rate = 0.7;
  scfg.seed = 21;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 3);
  Rng rng(99);
  RowMatrix means(4, cache.dim());
  for (int c = 0; c < 4; ++c) {
    for (int d = 0; d < cache.dim(); ++d) means(c, d) = rng.normal();
  }
  for (const auto& uc : cache.utterances) {
    std::vector<double> row_scores(uc.n_entries());
    for (int r = 0; r < uc.n_entries(); ++r) {
      row_scores[r] = best_cluster_score(
          uc.embeddings.row(r), uc.catalog[r].length_frames(), means);
      CHECK(row_scores[r] >= 0.0);
    }
    const ViterbiTable table = viterbi_segment(uc, row_scores);
    CHECK(table.gamma[0] == 0.0);
    for (int r = 0; r < uc.n_entries(); ++r) {
      const int i = uc.catalog[r].start_landmark;
      const int j = uc.catalog[r].end_landmark;
      if (std::isfinite(table.gamma[i])) {
        CHECK(table.gamma[j] <= table.gamma[i] + row_scores[r] + 1e-12);
      }
    }
  }
}

TEST_CASE("dp equals exhaustive enumeration on random utterances") {
  Rng rng(17);
  int multi_path_utterances = 0;
  for (int trial = 0; trial < 10; ++trial) {
    SynthConfig scfg;
    scfg.vocab_size = 3;
    scfg.n_utterances = 6;
    scfg.words_per_utterance_min = 2;
    scfg.words_per_utterance_max = 4;
    scfg.distractor_landmark_rate = 0.5;
    scfg.seed = 100 + trial;
    const Corpus corpus = generate_synthetic(scfg);
    const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 3);
    RowMatrix means(5, cache.dim());
    for (int c = 0; c < 5; ++c) {
      for (int d = 0; d < cache.dim(); ++d) means(c, d) = rng.normal();
    }
    for (const auto& uc : cache.utterances) {
      std::vector<double> row_scores(uc.n_entries());
      for (int r = 0; r < uc.n_entries(); ++r) {
        row_scores[r] = best_cluster_score(
            uc.embeddings.row(r), uc.catalog[r].length_frames(), means);
      }
      const auto [bounds, path_score] = segment_utterance(uc, means);
      CHECK(path_score == enumerate_min_score(uc, row_scores));
      if (count_admissible_paths(uc, 0) > 1) ++multi_path_utterances;
      CHECK(bounds.back() ==
            corpus.utterances[cache.entry_utterance[uc.first_entry_id]]
                .num_frames());
    }
  }
  CHECK(multi_path_utterances > 20);
}

TEST_CASE("backtrace reports utterances with no admissible path") {
  Corpus corpus;
  Utterance u;
  u.id = "stuck";
  u.frames = Matrix::Zero(20, 1);
  corpus.utterances.push_back(u);
  corpus.landmarks.push_back({"stuck", {2, 4, 20}});
  // min_frames 5 with span 1 leaves (4,20] as the only row; position 0 is
  // unreachable.
  EmbedConfig cfg;
  cfg.n_samples = 2;
  cfg.max_landmark_span = 1;
  cfg.min_frames = 5;
  const EmbeddingCache cache = build_cache(corpus, cfg);
  const RowMatrix means = RowMatrix::Zero(1, cache.dim());
  try {
    segment_utterance(cache.utterances[0], means);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("stuck") != std::string::npos);
  }
}

TEST_CASE("exact and approx means match the worked duration example") {
  Corpus corpus;
  Utterance a;
  a.id = "a";
  a.frames = Matrix::Zero(2, 2);
  Utterance b;
  b.id = "b";
  b.frames = Matrix::Constant(4, 2, 3.0);
  corpus.utterances = {a, b};
  corpus.landmarks = {{"a", {2}}, {"b", {4}}};
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 1, 1);
  REQUIRE(cache.size() == 2);

  ClusterState st;
  st.means = RowMatrix::Zero(1, cache.dim());
  st.assignment = {0, 0};
  st.members = {{0, 1}};
  st.counts = {2};
  st.weighted_counts = {6.0};
  update_means(st, cache, MeanMode::kExact, EmptyClusterPolicy::kLeaveEmpty);
  CHECK(st.means(0, 0) == 2.0);
  CHECK(st.means(0, 1) == 2.0);
  update_means(st, cache, MeanMode::kApprox, EmptyClusterPolicy::kLeaveEmpty);
  CHECK(st.means(0, 0) == 1.5);
  CHECK(st.means(0, 1) == 1.5);
}

TEST_CASE("equal segment lengths make exact and approx means coincide") {
  const Corpus corpus = eskm::testing::make_grid_corpus(6, 3, 20, 5, 31);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 1, 20);
  Rng rng(5);
  ClusterState exact;
  exact.means = RowMatrix::Zero(3, cache.dim());
  exact.assignment.resize(cache.size());
  exact.members.assign(3, {});
  exact.counts.assign(3, 0);
  exact.weighted_counts.assign(3, 0.0);
  for (int e = 0; e < cache.size(); ++e) {
    const int c = rng.uniform_int(3);
    exact.assignment[e] = c;
    exact.members[c].push_back(e);
    exact.counts[c] += 1;
    exact.weighted_counts[c] += cache.entry_length(e);
  }
  ClusterState approx = exact;
  update_means(exact, cache, MeanMode::kExact, EmptyClusterPolicy::kLeaveEmpty);
  update_means(approx, cache, MeanMode::kApprox,
               EmptyClusterPolicy::kLeaveEmpty);
  for (int c = 0; c < 3; ++c) {
    for (int d = 0; d < cache.dim(); ++d) {
      CHECK(exact.means(c, d) ==
            doctest::Approx(approx.means(c, d)).epsilon(1e-12));
    }
  }
}

TEST_CASE("reseed-farthest moves an empty cluster onto the worst embedding") {
  const Corpus corpus = constant_word_corpus({0.0, 1.0, 9.0}, 3, 1);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 1, 1, 1);
  REQUIRE(cache.size() == 3);
  ClusterState st;
  st.means = RowMatrix::Zero(2, cache.dim());
  st.means.row(1).setConstant(100.0);
  st.assignment = {0, 0, 0};
  st.members = {{0, 1, 2}, {}};
  st.counts = {3, 0};
  st.weighted_counts = {9.0, 0.0};
  update_means(st, cache, MeanMode::kApprox,
               EmptyClusterPolicy::kReseedFarthest);
  // Cluster 0's mean lands at 10/3; the 9-valued embedding scores worst and
  // seeds cluster 1.
  CHECK(st.means(0, 0) == doctest::Approx(10.0 / 3.0).epsilon(1e-15));
  CHECK(st.means(1, 0) == 9.0);
}

TEST_CASE("leave-empty freezes the mean of an empty cluster") {
  const Corpus corpus = constant_word_corpus({0.0, 1.0}, 3, 1);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 1, 1, 1);
  ClusterState st;
  st.means = RowMatrix::Zero(2, cache.dim());
  st.means.row(1).setConstant(42.0);
  st.assignment = {0, 0};
  st.members = {{0, 1}, {}};
  st.counts = {2, 0};
  st.weighted_counts = {6.0, 0.0};
  update_means(st, cache, MeanMode::kApprox, EmptyClusterPolicy::kLeaveEmpty);
  CHECK(st.means(1, 0) == 42.0);
}

TEST_CASE("objective sums duration-weighted scores of assigned segments") {
  const Corpus corpus = constant_word_corpus({1.0}, 3, 1);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 1, 1, 1);
  ClusterState st;
  st.means = RowMatrix::Zero(1, cache.dim());
  st.assignment = {0};
  st.members = {{0}};
  st.counts = {1};
  st.weighted_counts = {3.0};
  Segmentation seg;
  seg.per_utterance = {{3}};
  CHECK(objective(cache, seg, st) == 3.0);
}

TEST_CASE("resolve_k applies the interval fraction rule") {
  const Corpus corpus = eskm::testing::make_grid_corpus(10, 4, 10, 3, 77);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 1, 10);
  EskmConfig cfg;
  cfg.k = 0;
  cfg.k_fraction = 0.2;
  CHECK(resolve_k(cfg, cache) == 8);  // 40 intervals * 0.2
  cfg.k_fraction = 0.01;
  CHECK(resolve_k(cfg, cache) == 1);  // floor at one cluster
  cfg.k = 7;
  CHECK(resolve_k(cfg, cache) == 7);
}

TEST_CASE("constrained init matches the plain coin flips when unconstrained") {
  SynthConfig scfg;
  scfg.vocab_size = 3;
  scfg.n_utterances = 8;
  scfg.distractor_landmark_rate = 0.5;
  scfg.seed = 13;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 100, 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (size_t u = 0; u < cache.utterances.size(); ++u) {
      CHECK(init_admissible_boundaries(cache.utterances[u], 0.5, seed) ==
            init_boundaries(corpus.landmarks[u], 0.5, seed));
    }
  }
}

TEST_CASE("constrained init only produces admissible paths") {
  SynthConfig scfg;
  scfg.vocab_size = 3;
  scfg.n_utterances = 10;
  scfg.distractor_landmark_rate = 1.0;
  scfg.seed = 14;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& uc : cache.utterances) {
      const Boundaries bounds = init_admissible_boundaries(uc, 0.5, seed);
      int prev = 0;
      for (int b : bounds) {
        int pos = -1;
        for (int p = 0; p < uc.n_positions(); ++p) {
          if (uc.positions[p] == b) pos = p;
        }
        REQUIRE(pos >= 0);
        int prev_pos = -1;
        for (int p = 0; p < uc.n_positions(); ++p) {
          if (uc.positions[p] == prev) prev_pos = p;
        }
        CHECK(uc.find_row(prev_pos, pos) >= 0);
        prev = b;
      }
      CHECK(prev == uc.positions.back());
    }
  }
}

TEST_CASE("fit is deterministic and traces start at the init objective") {
  SynthConfig scfg;
  scfg.vocab_size = 4;
  scfg.n_utterances = 10;
  scfg.distractor_landmark_rate = 0.3;
  scfg.seed = 3;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 12);
  EskmConfig cfg;
  cfg.k = 4;
  cfg.n_epochs = 50;
  cfg.seed = 2024;
  const FitResult a = fit(cache, cfg);
  const FitResult b = fit(cache, cfg);
  CHECK(a.segmentation.per_utterance == b.segmentation.per_utterance);
  CHECK(a.state.assignment == b.state.assignment);
  CHECK(a.state.means == b.state.means);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t e = 0; e < a.trace.size(); ++e) {
    CHECK(a.trace[e].objective == b.trace[e].objective);
  }
  CHECK(a.trace[0].n_boundary_changes == 0);
  CHECK(a.trace[0].n_assignment_changes == 0);
  CHECK(a.converged);
  // The final epoch observed no changes.
  CHECK(a.trace.back().n_boundary_changes == 0);
  CHECK(a.trace.back().n_assignment_changes == 0);
}

TEST_CASE("exact-mean fit descends monotonically and terminates") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig scfg;
    scfg.vocab_size = 4;
    scfg.n_utterances = 12;
    scfg.distractor_landmark_rate = 0.5;
    scfg.seed = 500 + seed;
    const Corpus corpus = generate_synthetic(scfg);
    const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 12);
    EskmConfig cfg;
    cfg.k = 5;
    cfg.n_epochs = 200;
    cfg.mean_mode = MeanMode::kExact;
    cfg.seed = seed;
    const FitResult res = fit(cache, cfg);
    CHECK(res.converged);
    for (size_t e = 1; e < res.trace.size(); ++e) {
      const double prev = res.trace[e - 1].objective;
      const double cur = res.trace[e].objective;
      CHECK(cur <= prev + 1e-9 * std::max(1.0, std::abs(prev)));
    }
  }
}

TEST_CASE("segmentation and assignment steps never increase the objective") {
  SynthConfig scfg;
  scfg.vocab_size = 4;
  scfg.n_utterances = 8;
  scfg.distractor_landmark_rate = 0.5;
  scfg.seed = 71;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 12);
  EskmConfig cfg;
  cfg.k = 5;
  cfg.n_epochs = 3;  // deliberately unconverged
  cfg.seed = 9;
  const FitResult res = fit(cache, cfg);

  // Re-segment each utterance under the frozen final means: the optimal path
  // score cannot exceed the utterance's current contribution.
  for (size_t u = 0; u < cache.utterances.size(); ++u) {
    const UtteranceCache& uc = cache.utterances[u];
    double current = 0.0;
    int prev = 0;
    int prev_pos = 0;
    for (int b : res.segmentation.per_utterance[u]) {
      int pos = -1;
      for (int p = 0; p < uc.n_positions(); ++p) {
        if (uc.positions[p] == b) pos = p;
      }
      REQUIRE(pos >= 0);
      const int r = uc.require_row(prev_pos, pos);
      const int e = uc.first_entry_id + r;
      current += score(cache.embedding(e), cache.entry_length(e),
                       res.state.means.row(res.state.assignment[e]));
      prev = b;
      prev_pos = pos;
    }
    (void)prev;
    const auto [bounds, path_score] = segment_utterance(uc, res.state.means);
    CHECK(path_score <= current + 1e-9 * std::max(1.0, current));
    // Reassigning any segment to its nearest mean never increases its score.
    for (int r = 0; r < uc.n_entries(); ++r) {
      const int e = uc.first_entry_id + r;
      if (res.state.assignment[e] < 0) continue;
      const double assigned =
          score(cache.embedding(e), cache.entry_length(e),
                res.state.means.row(res.state.assignment[e]));
      const double best = best_cluster_score(
          cache.embedding(e), cache.entry_length(e), res.state.means);
      CHECK(best <= assigned + 1e-12 * std::max(1.0, assigned));
    }
  }
}

TEST_CASE("with a forced grid segmentation fit is online k-means exactly") {
  const Corpus corpus = eskm::testing::make_grid_corpus(8, 4, 12, 4, 88);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 1, 12);
  EskmConfig cfg;
  cfg.k = 5;
  cfg.seed = 1234;
  for (int horizon = 1; horizon <= 8; ++horizon) {
    cfg.n_epochs = horizon;
    const FitResult res = fit(cache, cfg);
    const eskm::testing::KmeansResult oracle =
        eskm::testing::online_kmeans(cache, 5, cfg.seed, horizon);
    REQUIRE(res.state.assignment.size() == oracle.assignment.size());
    CHECK(res.state.assignment == oracle.assignment);
    CHECK(res.state.means == oracle.means);
    CHECK(res.n_epochs_run == oracle.epochs_run);
    CHECK(res.converged == oracle.converged);
  }
}

TEST_CASE("single-batch parallel fit is batch k-means exactly") {
  const Corpus corpus = eskm::testing::make_grid_corpus(8, 4, 12, 4, 89);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 1, 12);
  EskmConfig cfg;
  cfg.k = 5;
  cfg.seed = 4321;
  cfg.batch_size = 8;
  for (int horizon = 1; horizon <= 8; ++horizon) {
    cfg.n_epochs = horizon;
    const FitResult res = fit_parallel(cache, cfg);
    const eskm::testing::KmeansResult oracle =
        eskm::testing::lloyd_kmeans(cache, 5, cfg.seed, horizon);
    CHECK(res.state.assignment == oracle.assignment);
    CHECK(res.state.means == oracle.means);
  }
}

TEST_CASE("batch size one reproduces the serial fit") {
  SynthConfig scfg;
  scfg.vocab_size = 4;
  scfg.n_utterances = 9;
  scfg.distractor_landmark_rate = 0.4;
  scfg.seed = 111;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 12);
  EskmConfig cfg;
  cfg.k = 4;
  cfg.n_epochs = 40;
  cfg.seed = 55;
  const FitResult serial = fit(cache, cfg);
  cfg.batch_size = 1;
  for (int workers : {1, 4}) {
    cfg.n_workers = workers;
    const FitResult par = fit_parallel(cache, cfg);
    CHECK(par.segmentation.per_utterance == serial.segmentation.per_utterance);
    CHECK(par.state.assignment == serial.state.assignment);
    CHECK(par.state.means == serial.state.means);
    REQUIRE(par.trace.size() == serial.trace.size());
    for (size_t e = 0; e < par.trace.size(); ++e) {
      CHECK(par.trace[e].objective == serial.trace[e].objective);
      CHECK(par.trace[e].n_boundary_changes ==
            serial.trace[e].n_boundary_changes);
      CHECK(par.trace[e].n_assignment_changes ==
            serial.trace[e].n_assignment_changes);
    }
  }
}

TEST_CASE("parallel fit does not depend on the worker count") {
  SynthConfig scfg;
  scfg.vocab_size = 4;
  scfg.n_utterances = 14;
  scfg.distractor_landmark_rate = 0.5;
  scfg.seed = 112;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 12);
  EskmConfig cfg;
  cfg.k = 5;
  cfg.n_epochs = 30;
  cfg.seed = 66;
  cfg.batch_size = 4;
  cfg.n_workers = 1;
  const FitResult base = fit_parallel(cache, cfg);
  for (int workers : {2, 8}) {
    cfg.n_workers = workers;
    const FitResult res = fit_parallel(cache, cfg);
    CHECK(res.state.assignment == base.state.assignment);
    CHECK(res.state.means == base.state.means);
    CHECK(res.segmentation.per_utterance == base.segmentation.per_utterance);
  }
}

TEST_CASE("restarts keep the lowest final objective") {
  SynthConfig scfg;
  scfg.vocab_size = 4;
  scfg.n_utterances = 10;
  scfg.distractor_landmark_rate = 0.5;
  scfg.seed = 115;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 12);
  EskmConfig cfg;
  cfg.k = 4;
  cfg.n_epochs = 30;
  cfg.seed = 77;
  const int n_restarts = 5;
  const FitResult best = fit_restarts(cache, cfg, n_restarts);
  double manual_best = std::numeric_limits<double>::infinity();
  const std::uint64_t restart_root = derive_seed(cfg.seed, kSeedRestart);
  for (int r = 0; r < n_restarts; ++r) {
    EskmConfig run = cfg;
    run.seed = derive_seed(restart_root, static_cast<std::uint64_t>(r));
    const FitResult res = fit(cache, run);
    manual_best = std::min(manual_best, res.trace.back().objective);
  }
  CHECK(best.trace.back().objective == manual_best);
}

TEST_CASE("active segments tile every utterance") {
  SynthConfig scfg;
  scfg.vocab_size = 4;
  scfg.n_utterances = 10;
  scfg.distractor_landmark_rate = 0.5;
  scfg.seed = 116;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 12);
  EskmConfig cfg;
  cfg.k = 4;
  cfg.n_epochs = 20;
  cfg.seed = 5;
  const FitResult res = fit(cache, cfg);
  const auto segments = active_segments(cache, res.state);
  std::vector<int> covered_until(corpus.size(), 0);
  for (const auto& s : segments) {
    CHECK(s.start_frame == covered_until[s.utterance]);
    CHECK(s.cluster >= 0);
    CHECK(s.cluster < 4);
    covered_until[s.utterance] = s.end_frame;
  }
  for (int u = 0; u < corpus.size(); ++u) {
    CHECK(covered_until[u] == corpus.utterances[u].num_frames());
  }
}

TEST_CASE("clean separated corpus is recovered exactly on a fixed seed") {
  SynthConfig scfg;
  scfg.vocab_size = 4;
  scfg.n_utterances = 20;
  scfg.prototype_separation = 10.0;
  scfg.distractor_landmark_rate = 0.0;
  scfg.seed = 7;
  const Corpus corpus = generate_synthetic(scfg);
  const EmbeddingCache cache = eskm::testing::make_cache(corpus, 6, 15);
  EskmConfig cfg;
  cfg.k = 4;
  cfg.n_epochs = 100;
  cfg.seed = 2;
  const FitResult res = fit(cache, cfg);
  for (int u = 0; u < corpus.size(); ++u) {
    Boundaries truth;
    for (const auto& w : corpus.alignments[u].words) truth.push_back(w.end);
    CHECK(res.segmentation.per_utterance[u] == truth);
  }
  std::vector<DiscoveredToken> tokens;
  for (const auto& s : active_segments(cache, res.state)) {
    DiscoveredToken t;
    t.utterance_id = corpus.utterances[s.utterance].id;
    t.start_frame = s.start_frame;
    t.end_frame = s.end_frame;
    t.cluster_id = s.cluster;
    tokens.push_back(t);
  }
  map_tokens(tokens, corpus);
  CHECK(cluster_purity(tokens).purity == 1.0);
}

TEST_CASE("eskm config parsing and validation") {
  auto cfg = KeyValueConfig::parse_string(
      "s.k = 6\ns.n_epochs = 12\ns.mean_mode = exact\n"
      "s.empty_cluster_policy = reseed-farthest\ns.init_boundary_p = 0.3\n"
      "s.seed = 99\ns.batch_size = 2\n");
  const EskmConfig parsed = parse_eskm_config(cfg, "s.");
  CHECK(parsed.k == 6);
  CHECK(parsed.n_epochs == 12);
  CHECK(parsed.mean_mode == MeanMode::kExact);
  CHECK(parsed.empty_cluster_policy == EmptyClusterPolicy::kReseedFarthest);
  CHECK(parsed.init_boundary_p == 0.3);
  CHECK(parsed.seed == 99);
  CHECK(parsed.batch_size == 2);

  auto bad = KeyValueConfig::parse_string("s.mean_mode = sometimes\n");
  CHECK_THROWS_AS(parse_eskm_config(bad, "s."), ConfigError);

  EskmConfig invalid;
  invalid.n_epochs = 0;
  CHECK_THROWS_AS(invalid.validate(), ConfigError);
  invalid = EskmConfig{};
  invalid.init_boundary_p = 1.5;
  CHECK_THROWS_AS(invalid.validate(), ConfigError);
  invalid = EskmConfig{};
  invalid.k = -1;
  CHECK_THROWS_AS(invalid.validate(), ConfigError);
}
