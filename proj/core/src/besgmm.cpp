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

#include "eskm/besgmm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "eskm/error.hpp"

namespace eskm {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

int landmark_index_of(const UtteranceCache& uc, int frame) {
  const auto it =
      std::lower_bound(uc.positions.begin(), uc.positions.end(), frame);
  if (it == uc.positions.end() || *it != frame) {
    throw DataError("utterance " + uc.utterance_id + ": frame " +
                    std::to_string(frame) + " is not a landmark position");
  }
  return static_cast<int>(it - uc.positions.begin());
}

std::vector<int> rows_of(const UtteranceCache& uc, const Boundaries& bounds) {
  std::vector<int> rows;
  rows.reserve(bounds.size());
  int prev = 0;
  for (int b : bounds) {
    const int j = landmark_index_of(uc, b);
    rows.push_back(uc.require_row(prev, j));
    prev = j;
  }
  return rows;
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

// Unnormalized log weights of the collapsed conditional at temperature 1.
Vector raw_log_weights(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                       const std::vector<int>& counts, const RowMatrix& sums,
                       const BesPrior& prior) {
  Vector logw(prior.k);
  for (int c = 0; c < prior.k; ++c) {
    logw[c] = std::log(counts[c] + prior.a / prior.k) +
              log_post_pred(x, counts[c], sums.row(c), prior);
  }
  return logw;
}

double logsumexp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Dirichlet-multinomial assignment prior plus per-component chain-rule data
// marginals; `active` yields embeddings in ascending index order.
template <typename EmbeddingAt>
double log_joint_impl(const std::vector<int>& assignments,
                      const EmbeddingAt& embedding_at, const BesPrior& prior) {
  std::vector<int> counts(prior.k, 0);
  RowMatrix sums = RowMatrix::Zero(prior.k, prior.dim());
  double ll = 0.0;
  int n = 0;
  for (size_t i = 0; i < assignments.size(); ++i) {
    const int z = assignments[i];
    if (z < 0) continue;
    const auto x = embedding_at(static_cast<int>(i));
    ll += log_post_pred(x, counts[z], sums.row(z), prior);
    ++counts[z];
    sums.row(z) += x;
    ++n;
  }
  ll += std::lgamma(prior.a) - std::lgamma(prior.a + n);
  for (int c = 0; c < prior.k; ++c) {
    ll += std::lgamma(counts[c] + prior.a / prior.k);
  }
  ll -= prior.k * std::lgamma(prior.a / prior.k);
  return ll;
}

double log_joint_cache(const EmbeddingCache& cache,
                       const std::vector<int>& assignments,
                       const BesPrior& prior) {
  return log_joint_impl(
      assignments, [&](int e) { return cache.embedding(e); }, prior);
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

void BesgmmConfig::validate() const {
  if (k < 0) throw ConfigError("k must be >= 0 (0 selects the fraction rule)");
  if (k == 0 && k_fraction <= 0.0) {
    throw ConfigError("k_fraction must be > 0");
  }
  if (a <= 0.0) throw ConfigError("a must be > 0");
  if (kappa0 <= 0.0) throw ConfigError("kappa0 must be > 0");
  if (sigma0_sq <= 0.0) throw ConfigError("sigma0_sq must be > 0");
  if (sigma_sq <= 0.0) throw ConfigError("sigma_sq must be > 0");
  if (n_sweeps < 1) throw ConfigError("n_sweeps must be >= 1");
  if (anneal_t_start < 1.0) throw ConfigError("anneal_t_start must be >= 1");
  if (init_boundary_p < 0.0 || init_boundary_p > 1.0) {
    throw ConfigError("init_boundary_p must lie in [0, 1]");
  }
}

BesgmmConfig parse_besgmm_config(KeyValueConfig& cfg, const std::string& p) {
  BesgmmConfig out;
  out.k = static_cast<int>(cfg.get_int(p + "k", out.k));
  out.k_fraction = cfg.get_real(p + "k_fraction", out.k_fraction);
  out.a = cfg.get_real(p + "a", out.a);
  out.mu0 = cfg.get_real(p + "mu0", out.mu0);
  out.tie_prior = cfg.get_bool(p + "tie_prior", out.tie_prior);
  out.kappa0 = cfg.get_real(p + "kappa0", out.kappa0);
  out.sigma0_sq = cfg.get_real(p + "sigma0_sq", out.sigma0_sq);
  out.sigma_sq = cfg.get_real(p + "sigma_sq", out.sigma_sq);
  out.n_sweeps = static_cast<int>(cfg.get_int(p + "n_sweeps", out.n_sweeps));
  out.anneal_t_start =
      cfg.get_real(p + "anneal_t_start", out.anneal_t_start);
  out.init_boundary_p =
      cfg.get_real(p + "init_boundary_p", out.init_boundary_p);
  out.seed = cfg.get_seed(p + "seed", out.seed);
  out.validate();
  return out;
}

int resolve_k(const BesgmmConfig& cfg, const EmbeddingCache& cache) {
  EskmConfig proxy;
  proxy.k = cfg.k;
  proxy.k_fraction = cfg.k_fraction;
  return resolve_k(proxy, cache);
}

BesPrior make_prior(const BesgmmConfig& cfg, int dim, int k) {
  BesPrior prior;
  prior.mu0 = Eigen::RowVectorXd::Constant(dim, cfg.mu0);
  prior.sigma0_sq = cfg.tie_prior ? cfg.sigma_sq / cfg.kappa0 : cfg.sigma0_sq;
  prior.sigma_sq = cfg.sigma_sq;
  prior.a = cfg.a;
  prior.k = k;
  return prior;
}

double log_post_pred(const Eigen::Ref<const Eigen::RowVectorXd>& x, int count,
                     const Eigen::Ref<const Eigen::RowVectorXd>& sum,
                     const BesPrior& prior) {
  const double lambda = 1.0 / prior.sigma0_sq + count / prior.sigma_sq;
  const double v = prior.sigma_sq + 1.0 / lambda;
  const Eigen::RowVectorXd m =
      (prior.mu0 / prior.sigma0_sq + sum / prior.sigma_sq) / lambda;
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(kTwoPi * v) - (x - m).squaredNorm() / (2.0 * v);
}

Vector component_log_probs(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                           const std::vector<int>& counts,
                           const RowMatrix& sums, const BesPrior& prior,
                           double temperature) {
  Vector logw = raw_log_weights(x, counts, sums, prior) / temperature;
  logw.array() -= logsumexp(logw);
  return logw;
}

int sample_component(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                     const std::vector<int>& counts, const RowMatrix& sums,
                     const BesPrior& prior, double temperature, Rng& rng) {
  const Vector logp = component_log_probs(x, counts, sums, prior, temperature);
  const double u = rng.uniform();
  double cum = 0.0;
  for (int c = 0; c < prior.k; ++c) {
    cum += std::exp(logp[c]);
    if (u < cum) return c;
  }
  return prior.k - 1;
}

int argmax_component(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                     const std::vector<int>& counts, const RowMatrix& sums,
                     const BesPrior& prior) {
  const Vector logw = raw_log_weights(x, counts, sums, prior);
  int best = 0;
  for (int c = 1; c < prior.k; ++c) {
    if (logw[c] > logw[best]) best = c;
  }
  return best;
}

double marginal_log_pred(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                         const std::vector<int>& counts, const RowMatrix& sums,
                         const BesPrior& prior) {
  int n = 0;
  for (int c : counts) n += c;
  return logsumexp(raw_log_weights(x, counts, sums, prior)) -
         std::log(n + prior.a);
}

GibbsState make_state(const RowMatrix& embeddings,
                      const std::vector<int>& assignments, int k) {
  GibbsState state;
  state.assignments = assignments;
  state.counts.assign(k, 0);
  state.sums = RowMatrix::Zero(k, embeddings.cols());
  for (int i = 0; i < embeddings.rows(); ++i) {
    const int z = assignments[i];
    if (z < 0) continue;
    ++state.counts[z];
    state.sums.row(z) += embeddings.row(i);
  }
  return state;
}

void gibbs_sweep(const RowMatrix& embeddings, GibbsState& state,
                 const BesPrior& prior, double temperature, Rng& rng) {
  for (int i = 0; i < embeddings.rows(); ++i) {
    const int old = state.assignments[i];
    --state.counts[old];
    state.sums.row(old) -= embeddings.row(i);
    const int z = sample_component(embeddings.row(i), state.counts, state.sums,
                                   prior, temperature, rng);
    ++state.counts[z];
    state.sums.row(z) += embeddings.row(i);
    state.assignments[i] = z;
  }
  state.loglik_trace.push_back(log_joint(embeddings, state, prior));
}

double log_joint(const RowMatrix& embeddings, const GibbsState& state,
                 const BesPrior& prior) {
  return log_joint_impl(
      state.assignments, [&](int i) { return embeddings.row(i); }, prior);
}

double anneal_temperature(int sweep, int n_sweeps, double t_start) {
  const int n_half = n_sweeps / 2;
  if (n_half <= 1 || sweep >= n_half || t_start <= 1.0) return 1.0;
  const double frac =
      static_cast<double>(n_half - sweep) / static_cast<double>(n_half - 1);
  return std::pow(t_start, frac);
}

std::pair<Boundaries, double> bayes_segment_utterance(
    const UtteranceCache& uc, const std::vector<int>& counts,
    const RowMatrix& sums, const BesPrior& prior) {
  std::vector<double> scores(uc.n_entries());
  for (int r = 0; r < uc.n_entries(); ++r) {
    scores[r] = -static_cast<double>(uc.catalog[r].length_frames()) *
                marginal_log_pred(uc.embeddings.row(r), counts, sums, prior);
  }
  const ViterbiTable table = viterbi_segment(uc, scores);
  Boundaries bounds = backtrace(uc, table);
  const double path_score = table.gamma[uc.n_positions() - 1];
  return {std::move(bounds), path_score};
}

RowMatrix BesFitResult::posterior_means(const BesPrior& prior) const {
  RowMatrix means(counts.size(), sums.cols());
  for (size_t c = 0; c < counts.size(); ++c) {
    const double lambda =
        1.0 / prior.sigma0_sq + counts[c] / prior.sigma_sq;
    means.row(c) =
        (prior.mu0 / prior.sigma0_sq + sums.row(c) / prior.sigma_sq) / lambda;
  }
  return means;
}

BesFitResult bes_fit(const EmbeddingCache& cache, const BesgmmConfig& cfg) {
  cfg.validate();
  const int s = static_cast<int>(cache.utterances.size());
  const int k = resolve_k(cfg, cache);
  const BesPrior prior = make_prior(cfg, cache.dim(), k);

  BesFitResult res;
  res.segmentation.per_utterance.resize(s);
  res.assignment.assign(cache.size(), -1);
  res.counts.assign(k, 0);
  res.sums = RowMatrix::Zero(k, cache.dim());

  std::vector<std::vector<int>> current_rows(s);
  const std::uint64_t bounds_seed = derive_seed(cfg.seed, kSeedBoundaries);
  Rng assign_rng(derive_seed(cfg.seed, kSeedAssignments));
  for (int u = 0; u < s; ++u) {
    const UtteranceCache& uc = cache.utterances[u];
    Boundaries bounds = init_admissible_boundaries(uc, cfg.init_boundary_p,
                                                   derive_seed(bounds_seed, u));
    current_rows[u] = rows_of(uc, bounds);
    for (int r : current_rows[u]) {
      const int e = uc.first_entry_id + r;
      const int z = assign_rng.uniform_int(k);
      res.assignment[e] = z;
      ++res.counts[z];
      res.sums.row(z) += cache.embedding(e);
    }
    res.segmentation.per_utterance[u] = std::move(bounds);
  }
  res.trace.push_back(
      {-log_joint_cache(cache, res.assignment, prior), 0, 0, 0.0});

  Rng sweep_rng(derive_seed(cfg.seed, kSeedSweep));
  Rng gibbs_rng(derive_seed(cfg.seed, kSeedGibbs));
  for (int sweep = 1; sweep <= cfg.n_sweeps; ++sweep) {
    const auto t0 = std::chrono::steady_clock::now();
    const double temperature =
        anneal_temperature(sweep, cfg.n_sweeps, cfg.anneal_t_start);
    const std::vector<int> order = random_permutation(s, sweep_rng);
    int bc = 0, ac = 0;
    for (int u : order) {
      const UtteranceCache& uc = cache.utterances[u];
      for (int r : current_rows[u]) {
        const int e = uc.first_entry_id + r;
        const int z = res.assignment[e];
        --res.counts[z];
        res.sums.row(z) -= cache.embedding(e);
      }

      Boundaries bounds =
          bayes_segment_utterance(uc, res.counts, res.sums, prior).first;
      const std::vector<int> new_rows = rows_of(uc, bounds);
      bc += count_symmetric_difference(res.segmentation.per_utterance[u],
                                       bounds);

      std::vector<int> prev(new_rows.size());
      for (size_t i = 0; i < new_rows.size(); ++i) {
        prev[i] = res.assignment[uc.first_entry_id + new_rows[i]];
      }
      for (int r : current_rows[u]) {
        res.assignment[uc.first_entry_id + r] = -1;
      }
      // New segments enter sequentially, each conditioning on the ones
      // already sampled.
      for (size_t i = 0; i < new_rows.size(); ++i) {
        const int e = uc.first_entry_id + new_rows[i];
        const int z = sample_component(cache.embedding(e), res.counts,
                                       res.sums, prior, temperature,
                                       gibbs_rng);
        res.assignment[e] = z;
        ++res.counts[z];
        res.sums.row(z) += cache.embedding(e);
        if (z != prev[i]) ++ac;
      }
      res.segmentation.per_utterance[u] = std::move(bounds);
      current_rows[u] = new_rows;
    }
    res.trace.push_back({-log_joint_cache(cache, res.assignment, prior), bc,
                         ac, elapsed_s(t0)});
    res.n_sweeps_run = sweep;
  }
  return res;
}

LimitReport limit_check(const RowMatrix& embeddings, const RowMatrix& means,
                        double a, double sigma0_sq,
                        const std::vector<double>& sigma_sq_seq) {
  const int n = static_cast<int>(embeddings.rows());
  const int k = static_cast<int>(means.rows());
  if (n == 0) throw DataError("limit_check: no embeddings");

  std::vector<int> z(n);
  for (int i = 0; i < n; ++i) z[i] = assign(embeddings.row(i), means);

  LimitReport report;
  report.sigma_sq = sigma_sq_seq;
  for (const double sigma_sq : sigma_sq_seq) {
    BesPrior prior;
    prior.mu0 = Eigen::RowVectorXd::Zero(embeddings.cols());
    prior.sigma0_sq = sigma0_sq;
    prior.sigma_sq = sigma_sq;
    prior.a = a;
    prior.k = k;

    GibbsState state = make_state(embeddings, z, k);
    int agree = 0;
    for (int i = 0; i < n; ++i) {
      --state.counts[z[i]];
      state.sums.row(z[i]) -= embeddings.row(i);
      if (argmax_component(embeddings.row(i), state.counts, state.sums,
                           prior) == z[i]) {
        ++agree;
      }
      ++state.counts[z[i]];
      state.sums.row(z[i]) += embeddings.row(i);
    }
    report.agreement.push_back(static_cast<double>(agree) / n);
  }
  report.nondecreasing = true;
  for (size_t j = 1; j < report.agreement.size(); ++j) {
    if (report.agreement[j] < report.agreement[j - 1]) {
      report.nondecreasing = false;
    }
  }
  return report;
}

}  // namespace eskm
