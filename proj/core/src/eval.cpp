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

#include "eskm/eval.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

#include "eskm/error.hpp"
#include "eskm/rng.hpp"

namespace eskm {

namespace {

double harmonic_f(double p, double r) {
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double ratio(long long num, long long den) {
  return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

int overlap(int s1, int e1, int s2, int e2) {
  return std::max(0, std::min(e1, e2) - std::max(s1, s2));
}

std::unordered_map<std::string, int> id_index(const Corpus& corpus) {
  std::unordered_map<std::string, int> idx;
  for (int u = 0; u < corpus.size(); ++u) idx[corpus.utterances[u].id] = u;
  return idx;
}

// Phone labels overlapping [start, end) for more than half the phone's
// duration, in tier order; falls back to the single maximal-overlap phone.
std::vector<std::string> map_phones(const std::vector<AlignedSpan>& phones,
                                    int start, int end) {
  std::vector<std::string> out;
  int best = -1;
  int best_overlap = 0;
  for (size_t i = 0; i < phones.size(); ++i) {
    const int ov = overlap(start, end, phones[i].start, phones[i].end);
    if (2 * ov > phones[i].end - phones[i].start) out.push_back(phones[i].label);
    if (ov > best_overlap) {
      best_overlap = ov;
      best = static_cast<int>(i);
    }
  }
  if (out.empty() && best >= 0) out.push_back(phones[best].label);
  return out;
}

// Majority mapped word per cluster; count ties prefer the smaller label.
std::map<int, std::string> majority_words(
    const std::vector<DiscoveredToken>& tokens) {
  std::map<int, std::map<std::string, long long>> votes;
  for (const auto& t : tokens) ++votes[t.cluster_id][t.mapped_word];
  std::map<int, std::string> out;
  for (const auto& [cluster, counts] : votes) {
    long long best = 0;
    const std::string* label = nullptr;
    for (const auto& [word, n] : counts) {
      if (n > best) {
        best = n;
        label = &word;
      }
    }
    out[cluster] = *label;
  }
  return out;
}

struct EditCounts {
  long long substitutions = 0;
  long long deletions = 0;
  long long insertions = 0;
};

// Minimum word edit distance with a deterministic S/D/I decomposition
// (substitution preferred over deletion over insertion on ties).
EditCounts edit_counts(const std::vector<std::string>& hyp,
                       const std::vector<std::string>& ref) {
  const int m = static_cast<int>(hyp.size());
  const int n = static_cast<int>(ref.size());
  std::vector<std::vector<int>> dp(m + 1, std::vector<int>(n + 1, 0));
  for (int i = 0; i <= m; ++i) dp[i][0] = i;
  for (int j = 0; j <= n; ++j) dp[0][j] = j;
  for (int i = 1; i <= m; ++i) {
    for (int j = 1; j <= n; ++j) {
      const int sub = dp[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1] ? 1 : 0);
      const int ins = dp[i - 1][j] + 1;
      const int del = dp[i][j - 1] + 1;
      dp[i][j] = std::min({sub, ins, del});
    }
  }
  EditCounts out;
  int i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dp[i][j] == dp[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1] ? 1 : 0)) {
      if (hyp[i - 1] != ref[j - 1]) ++out.substitutions;
      --i, --j;
    } else if (j > 0 && dp[i][j] == dp[i][j - 1] + 1) {
      ++out.deletions;
      --j;
    } else {
      ++out.insertions;
      --i;
    }
  }
  return out;
}

int levenshtein(const std::vector<std::string>& a,
                const std::vector<std::string>& b) {
  const int m = static_cast<int>(a.size());
  const int n = static_cast<int>(b.size());
  std::vector<int> prev(n + 1), cur(n + 1);
  for (int j = 0; j <= n; ++j) prev[j] = j;
  for (int i = 1; i <= m; ++i) {
    cur[0] = i;
    for (int j = 1; j <= n; ++j) {
      cur[j] = std::min({prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0),
                         prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

// Tokens grouped by utterance index, each group sorted by start frame.
std::vector<std::vector<const DiscoveredToken*>> by_utterance(
    const std::vector<DiscoveredToken>& tokens, const Corpus& corpus) {
  const auto idx = id_index(corpus);
  std::vector<std::vector<const DiscoveredToken*>> out(corpus.size());
  for (const auto& t : tokens) {
    const auto it = idx.find(t.utterance_id);
    if (it == idx.end()) {
      throw DataError("token references unknown utterance " + t.utterance_id);
    }
    out[it->second].push_back(&t);
  }
  for (auto& group : out) {
    std::sort(group.begin(), group.end(),
              [](const DiscoveredToken* a, const DiscoveredToken* b) {
                if (a->start_frame != b->start_frame) {
                  return a->start_frame < b->start_frame;
                }
                return a->end_frame < b->end_frame;
              });
  }
  return out;
}

void require_alignments(const Corpus& corpus, const char* op) {
  if (!corpus.has_alignments()) {
    throw DataError(std::string(op) + " requires corpus alignments");
  }
}

}  // namespace

void EvalOptions::validate() const {
  if (tolerance_frames < 0) throw ConfigError("tolerance_frames must be >= 0");
  if (max_pairs < 0) throw ConfigError("max_pairs must be >= 0");
}

EvalOptions parse_eval_options(KeyValueConfig& cfg, const std::string& p) {
  EvalOptions out;
  out.tolerance_frames = static_cast<int>(
      cfg.get_int(p + "tolerance_frames", out.tolerance_frames));
  out.max_pairs = cfg.get_int(p + "max_pairs", out.max_pairs);
  out.seed = cfg.get_seed(p + "seed", out.seed);
  out.validate();
  return out;
}

void map_tokens(std::vector<DiscoveredToken>& tokens, const Corpus& corpus) {
  require_alignments(corpus, "map_tokens");
  const auto idx = id_index(corpus);
  for (auto& t : tokens) {
    const auto it = idx.find(t.utterance_id);
    if (it == idx.end()) {
      throw DataError("token references unknown utterance " + t.utterance_id);
    }
    const int u = it->second;
    const int m = corpus.utterances[u].num_frames();
    if (t.start_frame < 0 || t.end_frame > m || t.start_frame >= t.end_frame) {
      throw DataError("utterance " + t.utterance_id + ": token [" +
                      std::to_string(t.start_frame) + ", " +
                      std::to_string(t.end_frame) +
                      ") outside utterance extent");
    }
    const Alignment& al = corpus.alignments[u];
    int best_overlap = -1;
    for (const auto& w : al.words) {
      const int ov = overlap(t.start_frame, t.end_frame, w.start, w.end);
      if (ov > best_overlap) {
        best_overlap = ov;
        t.mapped_word = w.label;
      }
    }
    t.mapped_phones = map_phones(al.phones, t.start_frame, t.end_frame);
  }
}

PurityResult cluster_purity(const std::vector<DiscoveredToken>& tokens) {
  if (tokens.empty()) throw DataError("cluster_purity: no tokens");
  const auto majority = majority_words(tokens);
  PurityResult res;
  res.n_tokens = static_cast<long long>(tokens.size());
  for (const auto& t : tokens) {
    if (t.mapped_word == majority.at(t.cluster_id)) ++res.n_majority;
  }
  res.purity = ratio(res.n_majority, res.n_tokens);
  return res;
}

WerResult unsupervised_wer(const std::vector<DiscoveredToken>& tokens,
                           const Corpus& corpus) {
  require_alignments(corpus, "unsupervised_wer");
  const auto majority = majority_words(tokens);
  const auto groups = by_utterance(tokens, corpus);

  WerResult res;
  for (int u = 0; u < corpus.size(); ++u) {
    std::vector<std::string> hyp;
    hyp.reserve(groups[u].size());
    for (const DiscoveredToken* t : groups[u]) {
      hyp.push_back(majority.at(t->cluster_id));
    }
    std::vector<std::string> ref;
    for (const auto& w : corpus.alignments[u].words) ref.push_back(w.label);
    if (ref.empty()) {
      throw DataError("utterance " + corpus.utterances[u].id +
                      ": empty reference transcript");
    }
    const EditCounts counts = edit_counts(hyp, ref);
    res.n_substitutions += counts.substitutions;
    res.n_deletions += counts.deletions;
    res.n_insertions += counts.insertions;
    res.n_reference += static_cast<long long>(ref.size());
  }
  res.wer = ratio(res.n_substitutions + res.n_deletions + res.n_insertions,
                  res.n_reference);
  return res;
}

NedResult ned(const std::vector<DiscoveredToken>& tokens, long long max_pairs,
              std::uint64_t seed) {
  std::map<int, std::vector<const DiscoveredToken*>> clusters;
  for (const auto& t : tokens) clusters[t.cluster_id].push_back(&t);

  // Same-cluster pairs pooled corpus-wide, reservoir-sampled if capped.
  std::vector<std::pair<const DiscoveredToken*, const DiscoveredToken*>> pairs;
  Rng rng(seed);
  long long seen = 0;
  bool capped = false;
  for (const auto& [cluster, members] : clusters) {
    for (size_t i = 0; i < members.size(); ++i) {
      for (size_t j = i + 1; j < members.size(); ++j) {
        if (max_pairs <= 0 ||
            static_cast<long long>(pairs.size()) < max_pairs) {
          pairs.emplace_back(members[i], members[j]);
        } else {
          capped = true;
          const long long slot = rng.uniform_int64(seen + 1);
          if (slot < max_pairs) {
            pairs[static_cast<size_t>(slot)] = {members[i], members[j]};
          }
        }
        ++seen;
      }
    }
  }
  if (pairs.empty()) throw DataError("ned: no same-cluster token pair exists");

  double total = 0.0;
  for (const auto& [a, b] : pairs) {
    const auto max_len =
        std::max(a->mapped_phones.size(), b->mapped_phones.size());
    total += static_cast<double>(levenshtein(a->mapped_phones,
                                             b->mapped_phones)) /
             static_cast<double>(max_len);
  }
  NedResult res;
  res.n_pairs = static_cast<long long>(pairs.size());
  res.capped = capped;
  res.ned = total / static_cast<double>(pairs.size());
  return res;
}

PrfResult boundary_prf(const std::vector<Boundaries>& proposed,
                       const std::vector<Boundaries>& reference,
                       int tolerance_frames) {
  if (proposed.size() != reference.size()) {
    throw DataError("boundary_prf: proposed and reference utterance counts "
                    "differ");
  }
  PrfResult res;
  for (size_t u = 0; u < proposed.size(); ++u) {
    // Internal boundaries only: strip the final (M) entry and any 0s.
    const auto internal = [](const Boundaries& b) {
      std::vector<int> out;
      for (size_t i = 0; i + 1 < b.size(); ++i) {
        if (b[i] > 0) out.push_back(b[i]);
      }
      return out;
    };
    const std::vector<int> prop = internal(proposed[u]);
    const std::vector<int> ref = internal(reference[u]);
    res.n_proposed += static_cast<long long>(prop.size());
    res.n_reference += static_cast<long long>(ref.size());
    size_t j = 0;
    for (int p : prop) {
      while (j < ref.size() && ref[j] < p - tolerance_frames) ++j;
      if (j < ref.size() && std::abs(ref[j] - p) <= tolerance_frames) {
        ++res.n_hits;
        ++j;
      }
    }
  }
  res.precision = ratio(res.n_hits, res.n_proposed);
  res.recall = ratio(res.n_hits, res.n_reference);
  res.f = harmonic_f(res.precision, res.recall);
  return res;
}

PrfResult token_prf(const std::vector<DiscoveredToken>& tokens,
                    const Corpus& corpus, int tolerance_frames) {
  require_alignments(corpus, "token_prf");
  const auto groups = by_utterance(tokens, corpus);
  PrfResult res;
  for (int u = 0; u < corpus.size(); ++u) {
    const auto& words = corpus.alignments[u].words;
    std::vector<char> matched(words.size(), 0);
    res.n_proposed += static_cast<long long>(groups[u].size());
    res.n_reference += static_cast<long long>(words.size());
    for (const DiscoveredToken* t : groups[u]) {
      for (size_t w = 0; w < words.size(); ++w) {
        if (matched[w]) continue;
        if (words[w].start > t->start_frame + tolerance_frames) break;
        if (std::abs(words[w].start - t->start_frame) <= tolerance_frames &&
            std::abs(words[w].end - t->end_frame) <= tolerance_frames) {
          matched[w] = 1;
          ++res.n_hits;
          break;
        }
      }
    }
  }
  res.precision = ratio(res.n_hits, res.n_proposed);
  res.recall = ratio(res.n_hits, res.n_reference);
  res.f = harmonic_f(res.precision, res.recall);
  return res;
}

PrfResult type_prf(const std::vector<DiscoveredToken>& tokens,
                   const Corpus& corpus) {
  require_alignments(corpus, "type_prf");
  std::set<std::vector<std::string>> discovered;
  for (const auto& t : tokens) discovered.insert(t.mapped_phones);

  std::set<std::vector<std::string>> lexicon;
  for (int u = 0; u < corpus.size(); ++u) {
    const Alignment& al = corpus.alignments[u];
    for (const auto& w : al.words) {
      lexicon.insert(map_phones(al.phones, w.start, w.end));
    }
  }

  PrfResult res;
  res.n_proposed = static_cast<long long>(discovered.size());
  res.n_reference = static_cast<long long>(lexicon.size());
  for (const auto& seq : discovered) {
    if (lexicon.count(seq)) ++res.n_hits;
  }
  res.precision = ratio(res.n_hits, res.n_proposed);
  res.recall = ratio(res.n_hits, res.n_reference);
  res.f = harmonic_f(res.precision, res.recall);
  return res;
}

CoverageResult coverage(const std::vector<DiscoveredToken>& tokens,
                        const Corpus& corpus) {
  const auto groups = by_utterance(tokens, corpus);
  CoverageResult res;
  res.total_frames = corpus.total_frames();
  for (int u = 0; u < corpus.size(); ++u) {
    int covered_until = 0;
    for (const DiscoveredToken* t : groups[u]) {
      const int start = std::max(t->start_frame, covered_until);
      if (t->end_frame > start) {
        res.covered_frames += t->end_frame - start;
        covered_until = t->end_frame;
      }
    }
  }
  res.coverage = ratio(res.covered_frames, res.total_frames);
  return res;
}

std::vector<Boundaries> reference_boundaries(const Corpus& corpus) {
  require_alignments(corpus, "reference_boundaries");
  std::vector<Boundaries> out(corpus.size());
  for (int u = 0; u < corpus.size(); ++u) {
    for (const auto& w : corpus.alignments[u].words) {
      out[u].push_back(w.end);
    }
  }
  return out;
}

EvalReport evaluate(const Corpus& corpus,
                    const std::vector<Boundaries>& proposed,
                    std::vector<DiscoveredToken> tokens,
                    const EvalOptions& opts) {
  opts.validate();
  require_alignments(corpus, "evaluate");
  map_tokens(tokens, corpus);

  EvalReport report;
  report.purity = cluster_purity(tokens);
  report.wer = unsupervised_wer(tokens, corpus);
  report.ned = ned(tokens, opts.max_pairs, opts.seed);
  report.boundary =
      boundary_prf(proposed, reference_boundaries(corpus), opts.tolerance_frames);
  report.token = token_prf(tokens, corpus, opts.tolerance_frames);
  report.type = type_prf(tokens, corpus);
  report.coverage = coverage(tokens, corpus);
  return report;
}

}  // namespace eskm
