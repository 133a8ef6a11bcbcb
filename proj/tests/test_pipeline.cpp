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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "eskm/corpus.hpp"
#include "eskm/error.hpp"
#include "pipeline.hpp"

using namespace eskm;
using namespace eskm::tools;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  std::string tmpl =
      (fs::temp_directory_path() / "eskm_pipe_XXXXXX").string();
  char* made = mkdtemp(tmpl.data());
  REQUIRE(made != nullptr);
  return fs::path(made);
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spit(const fs::path& file, const std::string& content) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  out << content;
}

int run_binary(const std::string& args) {
  const std::string cmd =
      std::string(ESKM_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

Corpus tiny_corpus() {
  SynthConfig cfg;
  cfg.vocab_size = 3;
  cfg.feature_dim = 4;
  cfg.n_utterances = 5;
  cfg.seed = 17;
  return generate_synthetic(cfg);
}

const char* kPipelineConfig =
    "phases = synth segment eval\n"
    "seed = 42\n"
    "synth.vocab_size = 3\n"
    "synth.n_utterances = 10\n"
    "synth.feature_dim = 6\n"
    "synth.distractor_landmark_rate = 0.3\n"
    "embed.n_samples = 5\n"
    "embed.min_frames = 12\n"
    "model = eskmeans\n"
    "segment.k = 6\n"
    "segment.n_epochs = 6\n"
    "eval.tolerance_frames = 2\n";

// Recursively collects relative path -> file bytes, skipping names in skip.
std::map<std::string, std::string> tree_bytes(
    const fs::path& root, const std::vector<std::string>& skip) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
    out[fs::relative(entry.path(), root).generic_string()] =
        slurp(entry.path());
  }
  return out;
}

}  // namespace

TEST_CASE("boundary files round trip and are validated on read") {
  const Corpus corpus = tiny_corpus();
  const fs::path dir = temp_dir();
  Segmentation seg;
  for (const Landmarks& lm : corpus.landmarks) {
    seg.per_utterance.push_back(lm.positions);
  }
  write_boundaries(dir / "boundaries", corpus, seg);
  const std::vector<Boundaries> back =
      read_boundaries(dir / "boundaries", corpus);
  CHECK(back == seg.per_utterance);

  // Final entry must equal the frame count.
  spit(dir / "boundaries" / (corpus.utterances[0].id + ".txt"), "3\n7\n");
  CHECK_THROWS_AS(read_boundaries(dir / "boundaries", corpus), DataError);

  // Entries must increase.
  const int m = corpus.utterances[0].num_frames();
  spit(dir / "boundaries" / (corpus.utterances[0].id + ".txt"),
       "9\n5\n" + std::to_string(m) + "\n");
  CHECK_THROWS_AS(read_boundaries(dir / "boundaries", corpus), DataError);

  // Every utterance needs a file.
  fs::remove(dir / "boundaries" / (corpus.utterances[0].id + ".txt"));
  CHECK_THROWS_AS(read_boundaries(dir / "boundaries", corpus), DataError);
  fs::remove_all(dir);
}

TEST_CASE("cluster files round trip and malformed lines are rejected") {
  const Corpus corpus = tiny_corpus();
  const fs::path dir = temp_dir();
  std::vector<SegmentRecord> segments = {{0, 0, 15, 2}, {0, 15, 31, 0},
                                         {3, 0, 22, 1}};
  write_clusters(dir / "clusters.txt", corpus, segments);
  const std::vector<DiscoveredToken> tokens =
      read_clusters(dir / "clusters.txt");
  REQUIRE(tokens.size() == 3);
  CHECK(tokens[0].utterance_id == corpus.utterances[0].id);
  CHECK(tokens[0].start_frame == 0);
  CHECK(tokens[0].end_frame == 15);
  CHECK(tokens[0].cluster_id == 2);
  CHECK(tokens[2].utterance_id == corpus.utterances[3].id);

  spit(dir / "bad.txt", "u0 3 9\n");
  CHECK_THROWS_AS(read_clusters(dir / "bad.txt"), DataError);
  spit(dir / "bad.txt", "u0 3 nine 1\n");
  CHECK_THROWS_AS(read_clusters(dir / "bad.txt"), DataError);
  CHECK_THROWS_AS(read_clusters(dir / "nonexistent.txt"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("trace csv format is stable") {
  const fs::path dir = temp_dir();
  std::vector<EpochStats> trace = {{10.5, 0, 0, 0.0}, {8.25, 3, 2, 0.001}};
  write_trace_csv(dir / "trace.csv", trace);
  CHECK(slurp(dir / "trace.csv") ==
        "epoch,objective,n_boundary_changes,n_assignment_changes,"
        "wall_time_s\n"
        "0,10.5,0,0,0.000000\n"
        "1,8.25,3,2,0.001000\n");
  fs::remove_all(dir);
}

TEST_CASE("cache dumps carry one line per catalog entry") {
  const Corpus corpus = tiny_corpus();
  const EmbeddingCache cache = build_cache(corpus, {});
  const fs::path dir = temp_dir();
  write_cache_dump(dir / "cache", cache);
  for (int u = 0; u < corpus.size(); ++u) {
    const fs::path file = dir / "cache" / (corpus.utterances[u].id + ".txt");
    REQUIRE(fs::exists(file));
    std::ifstream in(file);
    std::string line;
    int n_lines = 0;
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      std::string tok;
      int n_fields = 0;
      while (fields >> tok) ++n_fields;
      CHECK(n_fields == 3 + cache.dim());
      ++n_lines;
    }
    CHECK(n_lines == cache.utterances[u].embeddings.rows());
  }
  fs::remove_all(dir);
}

TEST_CASE("report json carries every metric with its counts") {
  EvalReport report;
  report.purity = {0.75, 3, 4};
  report.wer = {0.5, 1, 1, 0, 4};
  report.ned = {0.25, 6, true};
  report.boundary = {1.0, 0.5, 2.0 / 3.0, 2, 2, 4};
  report.token = {0.4, 0.2, 0.25, 2, 5, 10};
  report.type = {0.1, 0.2, 0.15, 1, 10, 5};
  report.coverage = {1.0, 100, 100};
  const fs::path dir = temp_dir();
  write_report_json(dir / "report.json", report);
  const std::string text = slurp(dir / "report.json");
  REQUIRE_FALSE(text.empty());
  CHECK(text.back() == '\n');
  const nlohmann::json j = nlohmann::json::parse(text);
  CHECK(j["purity"]["value"] == 0.75);
  CHECK(j["purity"]["n_majority"] == 3);
  CHECK(j["wer"]["value"] == 0.5);
  CHECK(j["wer"]["n_deletions"] == 1);
  CHECK(j["ned"]["value"] == 0.25);
  CHECK(j["ned"]["capped"] == true);
  CHECK(j["boundary"]["precision"] == 1.0);
  CHECK(j["boundary"]["n_reference"] == 4);
  CHECK(j["token"]["f"] == 0.25);
  CHECK(j["type"]["recall"] == 0.2);
  CHECK(j["coverage"]["value"] == 1.0);
  CHECK(j["coverage"]["total_frames"] == 100);
  fs::remove_all(dir);
}

TEST_CASE("corpus fingerprints track content, not location") {
  const Corpus corpus = tiny_corpus();
  const fs::path a = temp_dir();
  const fs::path b = temp_dir();
  write_corpus(corpus, a / "corpus");
  write_corpus(corpus, b / "corpus");
  const std::string fp_a = corpus_fingerprint(a / "corpus");
  CHECK(fp_a == corpus_fingerprint(b / "corpus"));
  CHECK(fp_a == corpus_fingerprint(a / "corpus"));
  CHECK(fp_a.size() == 16);

  const fs::path victim =
      b / "corpus" / "features" / (corpus.utterances[0].id + ".txt");
  spit(victim, slurp(victim) + " ");
  CHECK(fp_a != corpus_fingerprint(b / "corpus"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("the pipeline writes every artifact and reruns byte-identically") {
  const fs::path first = temp_dir();
  auto cfg = KeyValueConfig::parse_string(kPipelineConfig);
  const PipelineOutcome outcome = run_pipeline(cfg, first / "out");
  REQUIRE(outcome.has_report);
  CHECK(outcome.report.coverage.coverage == 1.0);

  CHECK(fs::exists(first / "out" / "corpus" / "features"));
  CHECK(fs::exists(first / "out" / "clusters.txt"));
  CHECK(fs::exists(first / "out" / "trace.csv"));
  CHECK(fs::exists(first / "out" / "report.json"));
  REQUIRE(fs::exists(first / "out" / "manifest.json"));

  const nlohmann::json manifest =
      nlohmann::json::parse(slurp(first / "out" / "manifest.json"));
  CHECK(manifest.contains("artifact_version"));
  CHECK(manifest["seed"] == 42);
  CHECK(manifest["phases"] == std::vector<std::string>{"synth", "segment",
                                                       "eval"});
  CHECK(manifest.contains("config"));
  CHECK(manifest.contains("corpus_fingerprint"));
  CHECK(manifest["corpus_fingerprint"] != "none");
  CHECK(manifest.contains("timings"));
  CHECK(manifest.contains("outputs"));

  const fs::path second = temp_dir();
  auto cfg2 = KeyValueConfig::parse_string(kPipelineConfig);
  run_pipeline(cfg2, second / "out");

  // Wall-clock fields live only in trace.csv and manifest.json; everything
  // else must be reproduced byte for byte.
  const std::vector<std::string> skip = {"manifest.json", "trace.csv"};
  CHECK(tree_bytes(first / "out", skip) == tree_bytes(second / "out", skip));
  fs::remove_all(first);
  fs::remove_all(second);
}

TEST_CASE("unknown keys abort the pipeline before any side effects") {
  const fs::path dir = temp_dir();
  auto cfg = KeyValueConfig::parse_string(std::string(kPipelineConfig) +
                                          "bogus_knob = 1\n");
  CHECK_THROWS_AS(run_pipeline(cfg, dir / "out"), ConfigError);
  CHECK_FALSE(fs::exists(dir / "out"));
  fs::remove_all(dir);
}

TEST_CASE("sweeps run the grid with derived seeds") {
  const fs::path dir = temp_dir();
  auto cfg = KeyValueConfig::parse_string(
      std::string(kPipelineConfig) +
      "sweep.key = segment.init_boundary_p\nsweep.values = 0.4 0.6\n");
  run_sweep(cfg, dir / "sweep");

  const std::string csv = slurp(dir / "sweep" / "sweep.csv");
  std::istringstream lines(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] ==
        "index,key,value,purity,wer,ned,boundary_precision,boundary_recall,"
        "boundary_f,token_precision,token_recall,token_f,type_precision,"
        "type_recall,type_f,coverage,runtime_s");
  CHECK(rows[1].substr(0, 30) == "0,segment.init_boundary_p,0.4,");
  CHECK(rows[2].substr(0, 30) == "1,segment.init_boundary_p,0.6,");

  const nlohmann::json m0 = nlohmann::json::parse(
      slurp(dir / "sweep" / "run_000" / "manifest.json"));
  const nlohmann::json m1 = nlohmann::json::parse(
      slurp(dir / "sweep" / "run_001" / "manifest.json"));
  CHECK(m0["seed"] != m1["seed"]);
  fs::remove_all(dir);
}

TEST_CASE("a sweep without the eval phase is rejected") {
  const fs::path dir = temp_dir();
  auto cfg = KeyValueConfig::parse_string(
      "phases = synth segment\n"
      "synth.vocab_size = 3\nsynth.n_utterances = 4\n"
      "embed.min_frames = 12\nsegment.k = 3\nsegment.n_epochs = 2\n"
      "sweep.key = segment.init_boundary_p\nsweep.values = 0.5\n");
  CHECK_THROWS_AS(run_sweep(cfg, dir / "sweep"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("the binary maps error classes to exit codes") {
  const fs::path dir = temp_dir();

  CHECK(run_binary("--help") == 0);
  CHECK(run_binary("synth --help") == 0);

  spit(dir / "synth.cfg",
       "seed = 5\nsynth.vocab_size = 3\nsynth.n_utterances = 4\n");
  CHECK(run_binary("synth --config " + (dir / "synth.cfg").string() +
                   " --out " + (dir / "corpus").string()) == 0);
  CHECK(fs::exists(dir / "corpus" / "features"));
  CHECK(fs::exists(dir / "corpus" / "landmarks"));
  CHECK(fs::exists(dir / "corpus" / "alignments"));

  // Unknown config key: exit 1 before side effects.
  spit(dir / "bad.cfg", "bogus_key = 1\n");
  CHECK(run_binary("synth --config " + (dir / "bad.cfg").string() +
                   " --out " + (dir / "c2").string()) == 1);
  CHECK_FALSE(fs::exists(dir / "c2"));

  // Missing required option: exit 1.
  CHECK(run_binary("segment") == 1);

  // Missing corpus directory: exit 2.
  CHECK(run_binary("eval --corpus " + (dir / "nonexistent").string() +
                   " --hyp " + dir.string() + " --out " +
                   (dir / "r.json").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("the binary runs the full pipeline from a config file") {
  const fs::path dir = temp_dir();
  spit(dir / "pipe.cfg", kPipelineConfig);
  CHECK(run_binary("pipeline --config " + (dir / "pipe.cfg").string() +
                   " --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "report.json"));
  CHECK(fs::exists(dir / "out" / "manifest.json"));

  // --seed overrides the config seed and lands in the manifest.
  CHECK(run_binary("pipeline --config " + (dir / "pipe.cfg").string() +
                   " --seed 7 --out " + (dir / "out7").string()) == 0);
  const nlohmann::json manifest =
      nlohmann::json::parse(slurp(dir / "out7" / "manifest.json"));
  CHECK(manifest["seed"] == 7);
  fs::remove_all(dir);
}
