/*
 * Copyright 2026 The langpref Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// langpref command-line interface.
//
//   langpref <verb> [--config FILE] [overrides...]
//
// Verbs: translate, generate-reports, filter, probe, analyze, run, plot.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "langpref/langpref.hpp"

namespace {

using langpref::runner::ExperimentConfig;

struct Overrides {
  std::string config;
  std::optional<std::string> dataset, dataset_format, model, languages, experiment, cache_dir,
      workdir, backend, translator, qe, generator, judges, nli, test;
  std::optional<std::uint64_t> seed;
  std::optional<int> family_size, mask_count, workers, total_words;
  std::optional<double> lambda;
  bool resume = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Config file of key = value lines");
  cmd->add_option("--dataset", o.dataset, "Dataset JSONL path");
  cmd->add_option("--dataset-format", o.dataset_format, "eli5_webgpt or miracl");
  cmd->add_option("--model", o.model, "Model id (names the run directory)");
  cmd->add_option("--languages", o.languages, "Comma-separated target languages");
  cmd->add_option("--experiment", o.experiment,
                  "english_preference, query_language, relevance_vs_language, layer_analysis, attribution");
  cmd->add_option("--cache-dir", o.cache_dir, "Probe cache directory");
  cmd->add_option("--workdir", o.workdir, "Root of data, run and cache directories");
  cmd->add_option("--seed", o.seed, "Top-level seed");
  cmd->add_option("--family-size", o.family_size, "Bonferroni family size (0 = number of gaps)");
  cmd->add_option("--mask-count", o.mask_count, "Ablation masks per statement");
  cmd->add_option("--lambda", o.lambda, "L1 penalty of the attribution surrogate");
  cmd->add_option("--test", o.test, "paired or independent");
  cmd->add_option("--workers", o.workers, "Parallel workers (0 = backend bound)");
  cmd->add_option("--total-words", o.total_words, "Report length in the generation prompt");
  cmd->add_option("--backend", o.backend, "scripted:<rates> or cmd:<command>");
  cmd->add_option("--translator", o.translator, "identity, tag or cmd:<command>");
  cmd->add_option("--qe", o.qe, "constant:<v> or cmd:<command>");
  cmd->add_option("--generator", o.generator, "extractive or cmd:<command>");
  cmd->add_option("--judges", o.judges, "';'-separated judge specs");
  cmd->add_option("--nli", o.nli, "substring, always, never or cmd:<command>");
  cmd->add_flag("--resume", o.resume, "Resume an interrupted probe run");
  cmd->add_flag("-q,--quiet", o.quiet, "Only print warnings");
}

ExperimentConfig build_config(const Overrides& o) {
  using langpref::runner::set_config_value;
  ExperimentConfig c;
  if (!o.config.empty()) c = langpref::runner::load_config(o.config);
  auto set = [&](const char* key, const auto& value) {
    if (value) {
      std::ostringstream s;
      s << *value;
      set_config_value(c, key, s.str());
    }
  };
  set("dataset", o.dataset);
  set("dataset_format", o.dataset_format);
  set("model", o.model);
  set("languages", o.languages);
  set("experiment", o.experiment);
  set("cache_dir", o.cache_dir);
  set("workdir", o.workdir);
  set("seed", o.seed);
  set("family_size", o.family_size);
  set("mask_count", o.mask_count);
  set("workers", o.workers);
  set("total_words", o.total_words);
  set("test", o.test);
  set("backend", o.backend);
  set("translator", o.translator);
  set("qe", o.qe);
  set("generator", o.generator);
  set("judges", o.judges);
  set("nli", o.nli);
  if (o.lambda) c.lambda = *o.lambda;
  return c;
}

void print_result(const langpref::runner::AnalysisResult& r) {
  std::cout << langpref::runner::accuracy_table_csv(r);
}

int exit_code_for(const langpref::Error& e) {
  if (dynamic_cast<const langpref::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const langpref::DependencyError*>(&e)) return 3;
  if (dynamic_cast<const langpref::ParseError*>(&e) ||
      dynamic_cast<const langpref::ConstraintError*>(&e)) {
    return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Measures language preference in multilingual RAG citation"};
  app.require_subcommand(1);
  Overrides o;
  const char* verbs[][2] = {
      {"translate", "Translate documents (and queries) into the target languages"},
      {"generate-reports", "Generate cited reference reports"},
      {"filter", "Judge-vote and NLI filter statements into the pool"},
      {"probe", "Probe the backend over the design's variant grid"},
      {"analyze", "Compute accuracies, gaps and tables from probe results"},
      {"run", "Run every stage, then plot"},
      {"plot", "Render plots from the analysis"},
  };
  for (const auto& [name, help] : verbs) add_common(app.add_subcommand(name, help), o);
  CLI11_PARSE(app, argc, argv);

  const std::string verb = app.get_subcommands().front()->get_name();
  if (o.quiet) {
    langpref::set_log_sink([](langpref::LogLevel level, std::string_view msg) {
      if (level == langpref::LogLevel::kWarning) std::cerr << "[warn] " << msg << '\n';
    });
  }
  try {
    const auto cfg = build_config(o);
    langpref::runner::Pipeline p(cfg, langpref::runner::make_adapters(cfg));
    if (verb == "translate") {
      std::cout << p.translate() << " translation records\n";
    } else if (verb == "generate-reports") {
      std::cout << p.generate_reports() << " new reports\n";
    } else if (verb == "filter") {
      const auto pool = p.filter();
      std::cout << "pool " << pool.stats.pool_size << " of " << pool.stats.total
                << " statements (judge rate " << pool.stats.judge_retain_rate << ", nli rate "
                << pool.stats.nli_retain_rate << ")\n";
    } else if (verb == "probe") {
      if (!p.probe(o.resume)) std::cout << "design skipped\n";
    } else if (verb == "analyze") {
      print_result(p.analyze());
    } else if (verb == "plot") {
      std::cout << p.plot() << " plots written to " << p.plots_dir().string() << '\n';
    } else if (verb == "run") {
      if (const auto r = p.run(o.resume)) {
        print_result(*r);
      } else {
        std::cout << "design skipped\n";
      }
    }
  } catch (const langpref::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
