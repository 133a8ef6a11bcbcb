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

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "eskm/config.hpp"
#include "eskm/corpus.hpp"
#include "eskm/error.hpp"
#include "eskm/version.hpp"
#include "pipeline.hpp"

namespace {

using eskm::ConfigError;
using eskm::DataError;
using eskm::KeyValueConfig;

KeyValueConfig load_config(const std::string& path) {
  if (path.empty()) return KeyValueConfig();
  return KeyValueConfig::parse_file(path);
}

struct GlobalOpts {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
};

void apply_overrides(KeyValueConfig& cfg, const GlobalOpts& g,
                     bool uses_workers) {
  if (g.seed_set) cfg.set("seed", std::to_string(g.seed));
  if (uses_workers && g.workers > 0) {
    cfg.set("workers", std::to_string(g.workers));
  }
}

void add_common(CLI::App* cmd, GlobalOpts& g) {
  cmd->add_option("--config", g.config, "Flat key = value config file");
  cmd->add_option("--seed", g.seed, "Top-level seed (overrides config)")
      ->each([&g](const std::string&) { g.seed_set = true; });
  cmd->add_option("--workers", g.workers,
                  "Worker threads (overrides config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eskm " + std::string(eskm::kVersion) +
               ": embedded segmental K-means pipeline"};
  app.require_subcommand(1);

  GlobalOpts g;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_out = "corpus";
  add_common(synth, g);
  synth->add_option("--out", synth_out, "Corpus output directory");

  auto* segment =
      app.add_subcommand("segment", "Segment and cluster a corpus");
  std::string seg_corpus, seg_out = "out", seg_model;
  bool seg_dump_cache = false;
  add_common(segment, g);
  segment->add_option("--corpus", seg_corpus, "Corpus directory")->required();
  segment->add_option("--out", seg_out, "Output directory");
  segment->add_option("--model", seg_model, "eskmeans or besgmm");
  segment->add_flag("--dump-cache", seg_dump_cache,
                    "Also write the embedding cache as text");

  auto* eval = app.add_subcommand("eval", "Score a hypothesis against a corpus");
  std::string eval_corpus, eval_hyp, eval_out = "report.json";
  long long eval_max_pairs = -1;
  add_common(eval, g);
  eval->add_option("--corpus", eval_corpus, "Corpus directory")->required();
  eval->add_option("--hyp", eval_hyp,
                   "Hypothesis directory (boundaries/ + clusters.txt)")
      ->required();
  eval->add_option("--out", eval_out, "Report JSON file");
  eval->add_option("--max-pairs", eval_max_pairs,
                   "Reservoir cap for NED pair sampling (0 = exact)");

  auto* pipeline =
      app.add_subcommand("pipeline", "Run synth, segment, and eval phases");
  std::string pipe_out = "out";
  add_common(pipeline, g);
  pipeline->add_option("--out", pipe_out, "Run output directory");

  auto* sweep = app.add_subcommand("sweep", "Grid over one numeric config key");
  std::string sweep_out = "sweep";
  add_common(sweep, g);
  sweep->add_option("--out", sweep_out, "Sweep output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    KeyValueConfig cfg = load_config(g.config);
    const bool uses_workers = segment->parsed() || pipeline->parsed() ||
                              sweep->parsed();
    apply_overrides(cfg, g, uses_workers);
    if (synth->parsed()) {
      eskm::tools::run_synth(cfg, synth_out);
      std::cout << "wrote corpus to " << synth_out << "\n";
    } else if (segment->parsed()) {
      if (!seg_model.empty()) cfg.set("model", seg_model);
      const int workers = static_cast<int>(cfg.get_int("workers", 1));
      const bool dump = seg_dump_cache || cfg.get_bool("dump_cache", false);
      const eskm::Corpus corpus = eskm::load_corpus(seg_corpus);
      eskm::tools::run_segment(cfg, corpus, seg_out, workers, dump);
      std::cout << "wrote segmentation to " << seg_out << "\n";
    } else if (eval->parsed()) {
      if (eval_max_pairs >= 0) {
        cfg.set("eval.max_pairs", std::to_string(eval_max_pairs));
      }
      const eskm::Corpus corpus = eskm::load_corpus(eval_corpus);
      const eskm::EvalReport report =
          eskm::tools::run_eval(cfg, corpus, eval_hyp, eval_out);
      std::cout << "boundary_f " << report.boundary.f << " purity "
                << report.purity.purity << " coverage "
                << report.coverage.coverage << "\n"
                << "wrote " << eval_out << "\n";
    } else if (pipeline->parsed()) {
      const eskm::tools::PipelineOutcome outcome =
          eskm::tools::run_pipeline(cfg, pipe_out);
      std::cout << "wrote run to " << outcome.out_dir.string() << "\n";
    } else if (sweep->parsed()) {
      eskm::tools::run_sweep(cfg, sweep_out);
      std::cout << "wrote sweep to " << sweep_out << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
