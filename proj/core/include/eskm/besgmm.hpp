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

#include "eskm/eskmeans.hpp"
#include "eskm/rng.hpp"

namespace eskm {

// Gibbs assignment sampling stream (segmentation init and sweep order reuse
// the eskmeans stream constants).
inline constexpr std::uint64_t kSeedGibbs = 5;

// Bayesian GMM over segment embeddings: mixture weights pi ~ Dir(a/K * 1),
// component means mu_c ~ N(mu0, sigma0_sq I), data x ~ N(mu_z, sigma_sq I).
// Weights and means are collapsed out; Gibbs sampling operates on
// assignments only.
struct BesgmmConfig {
  // K; 0 selects the same landmark-fraction rule as EskmConfig.
  int k = 0;
  double k_fraction = 0.2;
  double a = 1.0;
  double mu0 = 0.0;  // broadcast over all dimensions
  // Tied prior: sigma0_sq = sigma_sq / kappa0. When untied, sigma0_sq is
  // used directly.
  bool tie_prior = true;
  double kappa0 = 0.05;
  double sigma0_sq = 1.0;
  double sigma_sq = 0.001;
  int n_sweeps = 100;
  // Annealing: temperature decays geometrically from anneal_t_start to 1
  // over the first half of the sweeps, then stays at 1.
  double anneal_t_start = 5.0;
  double init_boundary_p = 0.5;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

BesgmmConfig parse_besgmm_config(KeyValueConfig& cfg,
                                 const std::string& prefix = "");

int resolve_k(const BesgmmConfig& cfg, const EmbeddingCache& cache);

// Hyperparameters with the tied rule and the broadcast prior mean resolved.
struct BesPrior {
  Eigen::RowVectorXd mu0;
  double sigma0_sq = 1.0;
  double sigma_sq = 1.0;
  double a = 1.0;
  int k = 1;

  int dim() const { return static_cast<int>(mu0.size()); }
};

BesPrior make_prior(const BesgmmConfig& cfg, int dim, int k);

// Collapsed posterior predictive of x under a component with the given
// sufficient statistics: spherical Gaussian with
//   mean m = (mu0 / sigma0_sq + sum / sigma_sq) / (1/sigma0_sq + n/sigma_sq)
//   variance v = sigma_sq + 1 / (1/sigma0_sq + n/sigma_sq)
// per dimension.
double log_post_pred(const Eigen::Ref<const Eigen::RowVectorXd>& x, int count,
                     const Eigen::Ref<const Eigen::RowVectorXd>& sum,
                     const BesPrior& prior);

// Normalized log sampling probabilities of the collapsed conditional
// z ~ [(N_c + a/K) exp(log_post_pred)]^(1/temperature) given the statistics
// of all other embeddings.
Vector component_log_probs(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                           const std::vector<int>& counts,
                           const RowMatrix& sums, const BesPrior& prior,
                           double temperature);

int sample_component(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                     const std::vector<int>& counts, const RowMatrix& sums,
                     const BesPrior& prior, double temperature, Rng& rng);

// Temperature-0 limit of sample_component; ties to the lowest index.
int argmax_component(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                     const std::vector<int>& counts, const RowMatrix& sums,
                     const BesPrior& prior);

// log p(x | all other embeddings): logsumexp over components of the
// collapsed mixture weight posterior plus log_post_pred.
double marginal_log_pred(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                         const std::vector<int>& counts, const RowMatrix& sums,
                         const BesPrior& prior);

struct GibbsState {
  std::vector<int> assignments;  // per embedding
  std::vector<int> counts;       // per component
  RowMatrix sums;                // K x dim, per-component sum of embeddings
  std::vector<double> loglik_trace;  // log joint after each sweep
};

// Builds consistent sufficient statistics from scratch.
GibbsState make_state(const RowMatrix& embeddings,
                      const std::vector<int>& assignments, int k);

// One sequential collapsed Gibbs sweep over all embeddings in index order;
// appends the resulting log joint to the trace.
void gibbs_sweep(const RowMatrix& embeddings, GibbsState& state,
                 const BesPrior& prior, double temperature, Rng& rng);

// log p(X, z): Dirichlet-multinomial assignment prior plus per-component
// chain-rule marginals, members taken in ascending index order.
double log_joint(const RowMatrix& embeddings, const GibbsState& state,
                 const BesPrior& prior);

// Temperature of 1-based sweep `sweep` out of n_sweeps.
double anneal_temperature(int sweep, int n_sweeps, double t_start);

// Viterbi over the marginal scores d(x) = -len(x) * marginal_log_pred(x),
// against statistics that must already exclude this utterance's segments.
std::pair<Boundaries, double> bayes_segment_utterance(
    const UtteranceCache& uc, const std::vector<int>& counts,
    const RowMatrix& sums, const BesPrior& prior);

struct BesFitResult {
  Segmentation segmentation;
  std::vector<int> assignment;  // per global entry; -1 inactive
  std::vector<int> counts;
  RowMatrix sums;
  // trace[0] describes the initialization; objective is the negative log
  // joint probability of the active embeddings and assignments.
  std::vector<EpochStats> trace;
  int n_sweeps_run = 0;

  // Posterior component means under the prior (rows for empty components
  // fall back to mu0).
  RowMatrix posterior_means(const BesPrior& prior) const;
};

// Joint segmentation and clustering: per sweep, each utterance in random
// order is deflated from the statistics, re-segmented by Viterbi over
// marginal scores, and its new segments are sequentially sampled back in at
// the sweep's annealing temperature. Runs exactly cfg.n_sweeps sweeps.
BesFitResult bes_fit(const EmbeddingCache& cache, const BesgmmConfig& cfg);

struct LimitReport {
  std::vector<double> sigma_sq;
  // Fraction of embeddings whose argmax collapsed assignment (statistics
  // built from the nearest-mean assignment, self excluded) matches the
  // nearest-mean assignment itself.
  std::vector<double> agreement;
  bool nondecreasing = false;
};

// Evaluates the sigma_sq -> 0 link to the K-means assignment rule on one
// embedding set for a decreasing sigma_sq sequence, holding sigma0_sq and a
// fixed (untied prior, mu0 = 0).
LimitReport limit_check(const RowMatrix& embeddings, const RowMatrix& means,
                        double a, double sigma0_sq,
                        const std::vector<double>& sigma_sq_seq);

}  // namespace eskm
