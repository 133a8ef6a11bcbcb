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

#include "pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "eskm/error.hpp"
#include "eskm/rng.hpp"
#include "eskm/version.hpp"
#include "json.hpp"

namespace eskm {
namespace tools {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void write_atomic(const fs::path& file, const std::string& content) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, file);
}

// Sets `<prefix>seed` to a phase seed derived from the top-level seed unless
// the config pins it explicitly.
void default_phase_seed(KeyValueConfig& cfg, const std::string& key,
                        std::uint64_t top_seed, std::uint64_t stream) {
  if (!cfg.has(key)) {
    cfg.set(key, std::to_string(derive_seed(top_seed, stream)));
  }
}

struct SegmentPlan {
  EmbedConfig embed;
  std::string model = "eskmeans";
  EskmConfig eskm;
  BesgmmConfig besgmm;
  int n_restarts = 1;
  int workers = 1;
  bool dump_cache = false;
};

SegmentPlan parse_segment_plan(KeyValueConfig& cfg, int workers,
                               bool dump_cache) {
  const std::uint64_t top_seed = cfg.get_seed("seed", 0);
  default_phase_seed(cfg, "segment.seed", top_seed, kSeedSegmentPhase);

  SegmentPlan plan;
  plan.workers = workers;
  plan.dump_cache = dump_cache;
  plan.embed = parse_embed_config(cfg, "embed.");
  plan.model = cfg.get_string("model", "eskmeans");
  plan.n_restarts =
      static_cast<int>(cfg.get_int("segment.n_restarts", plan.n_restarts));
  if (plan.n_restarts < 1) throw ConfigError("segment.n_restarts must be >= 1");
  if (plan.model == "eskmeans") {
    plan.eskm = parse_eskm_config(cfg, "segment.");
    if (!cfg.has("segment.n_workers")) plan.eskm.n_workers = workers;
  } else if (plan.model == "besgmm") {
    plan.besgmm = parse_besgmm_config(cfg, "segment.");
  } else {
    throw ConfigError("model must be `eskmeans` or `besgmm`, got `" +
                      plan.model + "`");
  }
  return plan;
}

void execute_segment(const SegmentPlan& plan, const Corpus& corpus,
                     const fs::path& out_dir) {
  const EmbeddingCache cache = build_cache(corpus, plan.embed, plan.workers);
  fs::create_directories(out_dir);

  Segmentation seg;
  std::vector<SegmentRecord> segments;
  std::vector<EpochStats> trace;
  if (plan.model == "eskmeans") {
    FitResult res = fit_restarts(cache, plan.eskm, plan.n_restarts);
    seg = std::move(res.segmentation);
    segments = active_segments(cache, res.state);
    trace = std::move(res.trace);
  } else {
    if (plan.n_restarts != 1) {
      throw ConfigError("segment.n_restarts applies to model eskmeans only");
    }
    BesFitResult res = bes_fit(cache, plan.besgmm);
    seg = std::move(res.segmentation);
    segments.reserve(cache.size());
    for (size_t u = 0; u < cache.utterances.size(); ++u) {
      const UtteranceCache& uc = cache.utterances[u];
      for (int r = 0; r < uc.n_entries(); ++r) {
        const int z = res.assignment[uc.first_entry_id + r];
        if (z < 0) continue;
        segments.push_back({static_cast<int>(u), uc.catalog[r].start_frame,
                            uc.catalog[r].end_frame, z});
      }
    }
    trace = std::move(res.trace);
  }

  write_boundaries(out_dir / "boundaries", corpus, seg);
  write_clusters(out_dir / "clusters.txt", corpus, segments);
  write_trace_csv(out_dir / "trace.csv", trace);
  if (plan.dump_cache) write_cache_dump(out_dir / "cache", cache);
}

std::uint64_t fnv1a64(std::uint64_t hash, const char* data, size_t len) {
  for (size_t i = 0; i < len; ++i) {
    hash ^= static_cast<unsigned char>(data[i]);
    hash *= 1099511628211ULL;
  }
  return hash;
}

ordered_json prf_json(const PrfResult& r) {
  return ordered_json{{"precision", r.precision}, {"recall", r.recall},
                      {"f", r.f},                 {"n_hits", r.n_hits},
                      {"n_proposed", r.n_proposed},
                      {"n_reference", r.n_reference}};
}

void write_manifest(const fs::path& file, const KeyValueConfig& cfg,
                    std::uint64_t seed, const std::vector<std::string>& phases,
                    const std::string& fingerprint,
                    const PhaseTimings& timings,
                    const PipelineOutcome& outcome) {
  ordered_json j;
  j["artifact_version"] = kVersion;
  j["seed"] = seed;
  j["phases"] = phases;
  ordered_json cfg_json = ordered_json::object();
  for (const auto& [key, value] : cfg.entries()) cfg_json[key] = value;
  j["config"] = cfg_json;
  j["corpus_fingerprint"] = fingerprint;
  j["timings"] = ordered_json{{"synth_s", timings.synth_s},
                              {"segment_s", timings.segment_s},
                              {"eval_s", timings.eval_s}};
  j["outputs"] = ordered_json{{"corpus_dir", outcome.corpus_dir.string()},
                              {"out_dir", outcome.out_dir.string()}};
  write_atomic(file, j.dump(2) + "\n");
}

}  // namespace

void write_boundaries(const fs::path& dir, const Corpus& corpus,
                      const Segmentation& seg) {
  fs::create_directories(dir);
  for (int u = 0; u < corpus.size(); ++u) {
    std::ofstream out(dir / (corpus.utterances[u].id + ".txt"));
    for (int b : seg.per_utterance[u]) out << b << '\n';
  }
}

std::vector<Boundaries> read_boundaries(const fs::path& dir,
                                        const Corpus& corpus) {
  std::vector<Boundaries> out(corpus.size());
  for (int u = 0; u < corpus.size(); ++u) {
    const fs::path file = dir / (corpus.utterances[u].id + ".txt");
    std::ifstream in(file);
    if (!in) throw DataError("missing boundary file " + file.string());
    std::string line;
    int prev = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      int b = 0;
      const auto res = std::from_chars(line.data(), line.data() + line.size(), b);
      if (res.ec != std::errc() || res.ptr != line.data() + line.size()) {
        throw DataError(file.string() + ": bad boundary line: " + line);
      }
      if (b <= prev) {
        throw DataError(file.string() + ": boundaries not strictly increasing");
      }
      out[u].push_back(b);
      prev = b;
    }
    if (out[u].empty() ||
        out[u].back() != corpus.utterances[u].num_frames()) {
      throw DataError(file.string() + ": final boundary must equal M");
    }
  }
  return out;
}

void write_clusters(const fs::path& file, const Corpus& corpus,
                    const std::vector<SegmentRecord>& segments) {
  std::ofstream out(file);
  for (const auto& s : segments) {
    out << corpus.utterances[s.utterance].id << ' ' << s.start_frame << ' '
        << s.end_frame << ' ' << s.cluster << '\n';
  }
}

std::vector<DiscoveredToken> read_clusters(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("missing cluster file " + file.string());
  std::vector<DiscoveredToken> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto toks = split_ws(line);
    if (toks.size() != 4) {
      throw DataError(file.string() + ":" + std::to_string(lineno) +
                      ": expected `utt start end cluster_id`");
    }
    DiscoveredToken t;
    t.utterance_id = toks[0];
    try {
      t.start_frame = std::stoi(toks[1]);
      t.end_frame = std::stoi(toks[2]);
      t.cluster_id = std::stoi(toks[3]);
    } catch (const std::exception&) {
      throw DataError(file.string() + ":" + std::to_string(lineno) +
                      ": bad integer field");
    }
    out.push_back(std::move(t));
  }
  return out;
}

void write_trace_csv(const fs::path& file,
                     const std::vector<EpochStats>& trace) {
  std::ofstream out(file);
  out << "epoch,objective,n_boundary_changes,n_assignment_changes,"
         "wall_time_s\n";
  for (size_t e = 0; e < trace.size(); ++e) {
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.6f", trace[e].wall_time_s);
    out << e << ',' << format_real(trace[e].objective) << ','
        << trace[e].n_boundary_changes << ',' << trace[e].n_assignment_changes
        << ',' << wall << '\n';
  }
}

void write_cache_dump(const fs::path& dir, const EmbeddingCache& cache) {
  fs::create_directories(dir);
  for (const auto& uc : cache.utterances) {
    std::ofstream out(dir / (uc.utterance_id + ".txt"));
    for (int r = 0; r < uc.n_entries(); ++r) {
      out << uc.catalog[r].start_frame << ' ' << uc.catalog[r].end_frame << ' '
          << cache.dim();
      for (int d = 0; d < cache.dim(); ++d) {
        out << ' ' << format_real(uc.embeddings(r, d));
      }
      out << '\n';
    }
  }
}

void write_report_json(const fs::path& file, const EvalReport& report) {
  ordered_json j;
  j["purity"] = ordered_json{{"value", report.purity.purity},
                             {"n_majority", report.purity.n_majority},
                             {"n_tokens", report.purity.n_tokens}};
  j["wer"] = ordered_json{{"value", report.wer.wer},
                          {"n_substitutions", report.wer.n_substitutions},
                          {"n_deletions", report.wer.n_deletions},
                          {"n_insertions", report.wer.n_insertions},
                          {"n_reference", report.wer.n_reference}};
  j["ned"] = ordered_json{{"value", report.ned.ned},
                          {"n_pairs", report.ned.n_pairs},
                          {"capped", report.ned.capped}};
  j["boundary"] = prf_json(report.boundary);
  j["token"] = prf_json(report.token);
  j["type"] = prf_json(report.type);
  j["coverage"] = ordered_json{{"value", report.coverage.coverage},
                               {"covered_frames", report.coverage.covered_frames},
                               {"total_frames", report.coverage.total_frames}};
  write_atomic(file, j.dump(2) + "\n");
}

std::string corpus_fingerprint(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::vector<std::string> rels;
  rels.reserve(files.size());
  for (const auto& f : files) {
    rels.push_back(fs::relative(f, dir).generic_string());
  }
  std::sort(rels.begin(), rels.end());

  std::uint64_t hash = 14695981039346656037ULL;
  for (const auto& rel : rels) {
    hash = fnv1a64(hash, rel.data(), rel.size());
    hash = fnv1a64(hash, "\0", 1);
    std::ifstream in(dir / rel, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    hash = fnv1a64(hash, content.data(), content.size());
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(hash));
  return std::string(out);
}

void run_synth(KeyValueConfig& cfg, const fs::path& corpus_dir) {
  const std::uint64_t top_seed = cfg.get_seed("seed", 0);
  default_phase_seed(cfg, "synth.seed", top_seed, kSeedSynthPhase);
  const SynthConfig scfg = parse_synth_config(cfg, "synth.");
  cfg.require_all_consumed();
  const Corpus corpus = generate_synthetic(scfg);
  write_corpus(corpus, corpus_dir);
}

void run_segment(KeyValueConfig& cfg, const Corpus& corpus,
                 const fs::path& out_dir, int workers, bool dump_cache) {
  const SegmentPlan plan = parse_segment_plan(cfg, workers, dump_cache);
  cfg.require_all_consumed();
  execute_segment(plan, corpus, out_dir);
}

EvalReport run_eval(KeyValueConfig& cfg, const Corpus& corpus,
                    const fs::path& hyp_dir, const fs::path& report_file) {
  const std::uint64_t top_seed = cfg.get_seed("seed", 0);
  default_phase_seed(cfg, "eval.seed", top_seed, kSeedEvalPhase);
  const EvalOptions opts = parse_eval_options(cfg, "eval.");
  cfg.require_all_consumed();

  const std::vector<Boundaries> proposed =
      read_boundaries(hyp_dir / "boundaries", corpus);
  const std::vector<DiscoveredToken> tokens =
      read_clusters(hyp_dir / "clusters.txt");
  const EvalReport report = evaluate(corpus, proposed, tokens, opts);
  fs::create_directories(report_file.parent_path());
  write_report_json(report_file, report);
  return report;
}

PipelineOutcome run_pipeline(KeyValueConfig& cfg, const fs::path& out_dir) {
  const std::uint64_t seed = cfg.get_seed("seed", 0);
  const std::vector<std::string> phases =
      split_ws(cfg.get_string("phases", "synth segment eval"));
  std::set<std::string> phase_set;
  for (const auto& p : phases) {
    if (p != "synth" && p != "segment" && p != "eval") {
      throw ConfigError("unknown phase `" + p + "`");
    }
    phase_set.insert(p);
  }
  if (phase_set.empty()) throw ConfigError("phases is empty");

  PipelineOutcome outcome;
  outcome.out_dir = out_dir;
  outcome.corpus_dir =
      cfg.get_string("corpus_dir", (out_dir / "corpus").string());
  const int workers = static_cast<int>(cfg.get_int("workers", 1));
  const bool dump_cache = cfg.get_bool("dump_cache", false);
  const fs::path hyp_dir = cfg.get_string("hyp_dir", out_dir.string());

  // Parse every requested phase before touching the filesystem so that
  // unknown or malformed keys fail without side effects.
  SynthConfig synth_cfg;
  if (phase_set.count("synth")) {
    default_phase_seed(cfg, "synth.seed", seed, kSeedSynthPhase);
    synth_cfg = parse_synth_config(cfg, "synth.");
  }
  SegmentPlan segment_plan;
  if (phase_set.count("segment")) {
    segment_plan = parse_segment_plan(cfg, workers, dump_cache);
  }
  EvalOptions eval_opts;
  if (phase_set.count("eval")) {
    default_phase_seed(cfg, "eval.seed", seed, kSeedEvalPhase);
    eval_opts = parse_eval_options(cfg, "eval.");
  }
  cfg.require_all_consumed();

  fs::create_directories(out_dir);
  PhaseTimings timings;
  if (phase_set.count("synth")) {
    const auto t0 = std::chrono::steady_clock::now();
    write_corpus(generate_synthetic(synth_cfg), outcome.corpus_dir);
    timings.synth_s = elapsed_s(t0);
  }

  Corpus corpus;
  if (phase_set.count("segment") || phase_set.count("eval")) {
    corpus = load_corpus(outcome.corpus_dir);
  }
  if (phase_set.count("segment")) {
    const auto t0 = std::chrono::steady_clock::now();
    execute_segment(segment_plan, corpus, out_dir);
    timings.segment_s = elapsed_s(t0);
  }
  if (phase_set.count("eval")) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<Boundaries> proposed =
        read_boundaries(hyp_dir / "boundaries", corpus);
    std::vector<DiscoveredToken> tokens =
        read_clusters(hyp_dir / "clusters.txt");
    outcome.report =
        evaluate(corpus, proposed, std::move(tokens), eval_opts);
    write_report_json(out_dir / "report.json", outcome.report);
    outcome.has_report = true;
    timings.eval_s = elapsed_s(t0);
  }
  outcome.timings = timings;

  const std::string fingerprint = fs::is_directory(outcome.corpus_dir)
                                      ? corpus_fingerprint(outcome.corpus_dir)
                                      : std::string("none");
  write_manifest(out_dir / "manifest.json", cfg, seed, phases, fingerprint,
                 timings, outcome);
  return outcome;
}

void run_sweep(KeyValueConfig& cfg, const fs::path& out_dir) {
  const std::uint64_t seed = cfg.get_seed("seed", 0);
  const std::string key = cfg.get_string("sweep.key");
  const std::vector<double> values = cfg.get_real_list("sweep.values");
  if (values.empty()) throw ConfigError("sweep grid is empty");
  const std::uint64_t sweep_seed = derive_seed(seed, kSeedSweepPhase);

  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "index,key,value,purity,wer,ned,boundary_precision,boundary_recall,"
         "boundary_f,token_precision,token_recall,token_f,type_precision,"
         "type_recall,type_f,coverage,runtime_s\n";
  for (size_t r = 0; r < values.size(); ++r) {
    KeyValueConfig run_cfg;
    for (const auto& [k, v] : cfg.entries()) {
      if (k.rfind("sweep.", 0) == 0) continue;
      run_cfg.set(k, v);
    }
    run_cfg.set(key, format_real(values[r]));
    run_cfg.set("seed", std::to_string(
                            derive_seed(sweep_seed, static_cast<std::uint64_t>(r))));
    char name[32];
    std::snprintf(name, sizeof(name), "run_%03zu", r);
    const PipelineOutcome outcome = run_pipeline(run_cfg, out_dir / name);
    if (!outcome.has_report) {
      throw ConfigError("sweep requires the eval phase in `phases`");
    }
    const EvalReport& rep = outcome.report;
    char runtime[32];
    std::snprintf(runtime, sizeof(runtime), "%.6f",
                  outcome.timings.synth_s + outcome.timings.segment_s +
                      outcome.timings.eval_s);
    csv << r << ',' << key << ',' << format_real(values[r]) << ','
        << format_real(rep.purity.purity) << ',' << format_real(rep.wer.wer)
        << ',' << format_real(rep.ned.ned) << ','
        << format_real(rep.boundary.precision) << ','
        << format_real(rep.boundary.recall) << ','
        << format_real(rep.boundary.f) << ','
        << format_real(rep.token.precision) << ','
        << format_real(rep.token.recall) << ',' << format_real(rep.token.f)
        << ',' << format_real(rep.type.precision) << ','
        << format_real(rep.type.recall) << ',' << format_real(rep.type.f)
        << ',' << format_real(rep.coverage.coverage) << ',' << runtime
        << '\n';
  }
  write_atomic(out_dir / "sweep.csv", csv.str());
}

}  // namespace tools
}  // namespace eskm
