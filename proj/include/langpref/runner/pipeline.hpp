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

#pragma once

// Stage orchestration. Each stage reads the files written by earlier stages
// plus its adapters, and writes its own files:
//
//   <workdir>/data/translations.jsonl        translate
//   <workdir>/data/reports.jsonl             generate_reports
//   <workdir>/data/filter_outcomes.jsonl     filter
//   <workdir>/data/pool.jsonl, pool_stats.json
//   <run_dir>/manifest.json, cells/, probe.jsonl   probe
//   <run_dir>/analyze/                       analyze
//   <run_dir>/plots/                         plot

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "langpref/adapters.hpp"
#include "langpref/contextlab.hpp"
#include "langpref/corpus.hpp"
#include "langpref/filtergate.hpp"
#include "langpref/log.hpp"
#include "langpref/parallel.hpp"
#include "langpref/probe.hpp"
#include "langpref/runner/analysis.hpp"
#include "langpref/runner/config.hpp"
#include "langpref/runner/plots.hpp"
#include "langpref/runner/tables.hpp"
#include "langpref/surrogate.hpp"

namespace langpref::runner {

enum class Stage { kTranslate, kGenerateReports, kFilter, kProbe, kAnalyze };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kTranslate: return "translate";
    case Stage::kGenerateReports: return "generate_reports";
    case Stage::kFilter: return "filter";
    case Stage::kProbe: return "probe";
    case Stage::kAnalyze: return "analyze";
  }
  return "unknown";
}

// Adapters a pipeline may use. Stages fail with ConfigError when one they
// need is missing.
struct Adapters {
  TranslateFn translator;
  QualityFn qe;
  GenerateFn generator;
  std::vector<Judge> judges;
  EntailFn nli;
  std::shared_ptr<ProbeBackend> backend;
};

inline Adapters make_adapters(const ExperimentConfig& c) {
  Adapters a;
  if (!c.translator.empty()) a.translator = adapters::make_translator(c.translator);
  if (!c.qe.empty()) a.qe = adapters::make_quality_scorer(c.qe);
  if (!c.generator.empty()) a.generator = adapters::make_generator(c.generator);
  if (!c.judges.empty()) a.judges = adapters::make_judges(c.judges);
  if (!c.nli.empty()) a.nli = adapters::make_nli(c.nli);
  if (!c.backend.empty()) a.backend = adapters::make_backend(c.backend, c.model_id);
  return a;
}

namespace detail {

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("cannot read " + path.string());
  std::vector<T> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (langpref::detail::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
  }
  return out;
}

template <typename T>
std::string jsonl(const std::vector<T>& rows) {
  std::string out;
  for (const auto& r : rows) out += nlohmann::json(r).dump() + "\n";
  return out;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline std::string cell_name(const ContextVariant& v) {
  return std::string(to_string(v.kind)) + "__" + v.language.code();
}

}  // namespace detail

// One (statement, variant) probe unit.
struct ProbeUnit {
  const PooledStatement* statement = nullptr;
  ContrastiveContext context;
};

struct ProbeCell {
  ContextVariant variant;
  std::vector<ProbeUnit> units;
};

class Pipeline {
 public:
  Pipeline(ExperimentConfig config, Adapters adapters)
      : cfg_(std::move(config)), ad_(std::move(adapters)) {
    cfg_.validate();
  }

  const ExperimentConfig& config() const { return cfg_; }

  std::filesystem::path translations_path() const { return cfg_.data_dir() / "translations.jsonl"; }
  std::filesystem::path reports_path() const { return cfg_.data_dir() / "reports.jsonl"; }
  std::filesystem::path outcomes_path() const { return cfg_.data_dir() / "filter_outcomes.jsonl"; }
  std::filesystem::path pool_path() const { return cfg_.data_dir() / "pool.jsonl"; }
  std::filesystem::path pool_stats_path() const { return cfg_.data_dir() / "pool_stats.json"; }
  std::filesystem::path manifest_path() const { return cfg_.run_dir() / "manifest.json"; }
  std::filesystem::path probe_path() const { return cfg_.run_dir() / "probe.jsonl"; }
  std::filesystem::path analyze_dir() const { return cfg_.run_dir() / "analyze"; }
  std::filesystem::path plots_dir() const { return cfg_.run_dir() / "plots"; }

  // --- translate -----------------------------------------------------------

  // Translates every document (and, for query_language, every query) into
  // each target language. Existing records are kept.
  std::size_t translate() {
    if (!ad_.translator) throw ConfigError("translate needs a translator adapter");
    const auto& data = dataset();
    TranslationStore store;
    if (std::filesystem::exists(translations_path())) store.load(translations_path());
    const auto targets = cfg_.targets();
    const bool queries = cfg_.experiment == Experiment::kQueryLanguage;
    parallel_map(data.size() * targets.size(), stage_workers(), [&](std::size_t i) {
      const auto& e = data[i / targets.size()];
      const auto& lang = targets[i % targets.size()];
      const auto recs = translate_document_set(e.docset, lang, ad_.translator, store);
      if (queries) translate_query(e.query, lang, ad_.translator, store);
      if (ad_.qe) {
        for (const auto& r : recs) {
          if (!r.qe_score) score_record(store, e.docset.doc(r.doc_id), r, ad_.qe);
        }
      }
      return 0;
    });
    std::filesystem::create_directories(cfg_.data_dir());
    store.save(translations_path());
    {
      std::lock_guard lock(store_mu_);
      store_.reset();
    }
    log_info("translate: " + std::to_string(store.size()) + " records");
    return store.size();
  }

  // --- generate_reports ----------------------------------------------------

  std::size_t generate_reports() {
    if (!ad_.generator) throw ConfigError("generate_reports needs a generator adapter");
    const auto& data = dataset();
    std::vector<Report> reports;
    if (std::filesystem::exists(reports_path())) reports = detail::read_jsonl<Report>(reports_path());
    std::set<std::pair<std::string, std::string>> have;
    for (const auto& r : reports) have.emplace(r.query_id, r.language.code());

    struct Job {
      const DatasetEntry* entry;
      LanguageTag lang;
    };
    std::vector<Job> jobs;
    for (const auto& e : data) {
      for (const auto& lang : report_languages()) {
        if (!have.contains({e.query.id, lang.code()})) jobs.push_back({&e, lang});
      }
    }
    auto fresh = parallel_map(jobs.size(), stage_workers(), [&](std::size_t i) {
      const auto& [e, lang] = jobs[i];
      if (lang.is_english()) {
        return generate_reference_report(e->query, e->docset, ad_.generator, cfg_.total_words);
      }
      const auto& tr = translations();
      return generate_reference_report(localized_query(*e, lang, tr),
                                       localized_document_set(e->docset, tr, lang),
                                       ad_.generator, cfg_.total_words);
    });
    for (auto& r : fresh) reports.push_back(std::move(r));
    std::filesystem::create_directories(cfg_.data_dir());
    write_file(reports_path(), detail::jsonl(reports));
    log_info("generate_reports: " + std::to_string(fresh.size()) + " new, " +
             std::to_string(reports.size()) + " total");
    return fresh.size();
  }

  // --- filter --------------------------------------------------------------

  // Filters every report that has no outcomes yet and rewrites the pool.
  StatementPool filter() {
    if (ad_.judges.empty()) throw ConfigError("filter needs judge adapters");
    if (!ad_.nli) throw ConfigError("filter needs an NLI adapter");
    if (!std::filesystem::exists(reports_path())) {
      throw DependencyError("reports not found; run generate_reports");
    }
    const auto reports = detail::read_jsonl<Report>(reports_path());
    dataset();

    StatementPool previous;
    std::set<std::pair<std::string, std::string>> done;
    if (std::filesystem::exists(pool_stats_path())) {
      const auto stats = detail::read_json(pool_stats_path());
      for (const auto& k : stats.at("reports")) {
        done.emplace(k.at(0).get<std::string>(), k.at(1).get<std::string>());
      }
      previous.outcomes = detail::read_jsonl<FilterOutcome>(outcomes_path());
      previous.pool = detail::read_jsonl<PooledStatement>(pool_path());
    }

    std::vector<Query> queries;
    std::vector<DocumentSet> docsets;
    std::vector<const Report*> todo;
    for (const auto& r : reports) {
      if (done.contains({r.query_id, r.language.code()})) continue;
      if (!index_.contains(r.query_id)) {
        throw DependencyError("report for unknown query " + r.query_id +
                              "; rerun generate_reports for this dataset");
      }
      todo.push_back(&r);
    }
    queries.reserve(todo.size());
    docsets.reserve(todo.size());
    for (const auto* r : todo) {
      const auto& e = by_query(r->query_id);
      if (r->language.is_english()) {
        queries.push_back(e.query);
        docsets.push_back(e.docset);
      } else {
        queries.push_back(localized_query(e, r->language, translations()));
        docsets.push_back(localized_document_set(e.docset, translations(), r->language));
      }
    }
    std::vector<FilterInput> inputs;
    for (std::size_t i = 0; i < todo.size(); ++i) {
      inputs.push_back({&queries[i], &docsets[i], todo[i]});
    }
    auto fresh = build_statement_pool(inputs, ad_.judges, ad_.nli, stage_workers());

    StatementPool all = std::move(previous);
    all.outcomes.insert(all.outcomes.end(), fresh.outcomes.begin(), fresh.outcomes.end());
    all.pool.insert(all.pool.end(), fresh.pool.begin(), fresh.pool.end());
    all.stats = pool_stats(all.outcomes);
    for (const auto* r : todo) done.emplace(r->query_id, r->language.code());

    nlohmann::json stats = all.stats;
    stats["reports"] = nlohmann::json::array();
    for (const auto& [q, l] : done) stats["reports"].push_back({q, l});
    std::filesystem::create_directories(cfg_.data_dir());
    write_file(outcomes_path(), detail::jsonl(all.outcomes));
    write_file(pool_path(), detail::jsonl(all.pool));
    write_file(pool_stats_path(), stats.dump(2) + "\n");
    log_info("filter: pool size " + std::to_string(all.pool.size()));
    return all;
  }

  // --- probe ---------------------------------------------------------------

  // Probes every (statement, variant) unit of the design and writes
  // probe.jsonl. Returns false when the backend lacks a capability the
  // design needs; the design is then skipped with a notice.
  bool probe(bool resume = false) {
    if (!ad_.backend) throw ConfigError("probe needs a backend");
    auto& backend = *ad_.backend;
    if (const auto missing = missing_capability()) {
      log_info("skipping " + std::string(to_string(cfg_.experiment)) + ": backend " +
               backend.model_id() + " lacks " + *missing);
      return false;
    }
    if (!std::filesystem::exists(pool_path())) {
      throw DependencyError("statement pool not found; run filter");
    }
    int max_k = 1;
    for (const auto& e : dataset()) max_k = std::max(max_k, e.docset.size());
    if (!check_single_token_ids(backend, max_k)) {
      throw ConstraintError("citation ids 1.." + std::to_string(max_k) +
                            " are not single tokens for " + backend.model_id());
    }

    const auto pool = detail::read_jsonl<PooledStatement>(pool_path());
    const auto cells = probe_grid(pool);

    const std::string cfg_digest = config_digest(cfg_);
    const std::string pool_digest = file_digest(pool_path());
    const auto cells_dir = cfg_.run_dir() / "cells";
    nlohmann::json manifest;
    if (resume && std::filesystem::exists(manifest_path())) {
      manifest = detail::read_json(manifest_path());
      if (manifest.at("config_digest") != cfg_digest ||
          manifest.at("pool_digest") != pool_digest ||
          manifest.at("model_id") != backend.model_id()) {
        throw ConfigError("manifest at " + manifest_path().string() +
                          " does not match the current config or pool; refusing to resume");
      }
    } else {
      std::filesystem::remove_all(cells_dir);
      std::filesystem::remove(probe_path());
      manifest = {{"config_digest", cfg_digest},
                  {"pool_digest", pool_digest},
                  {"model_id", backend.model_id()},
                  {"experiment", to_string(cfg_.experiment)},
                  {"started", detail::utc_now()},
                  {"cells", nlohmann::json::object()}};
    }
    std::filesystem::create_directories(cells_dir);
    for (const auto& c : cells) {
      const auto name = detail::cell_name(c.variant);
      if (!manifest["cells"].contains(name)) manifest["cells"][name] = false;
    }
    write_manifest(manifest);

    ProbeCache cache(cfg_.cache_path());
    const std::size_t workers =
        cfg_.workers > 0 ? std::size_t(cfg_.workers) : std::max<std::size_t>(1, backend.max_in_flight());
    std::string all;
    for (const auto& c : cells) {
      const auto name = detail::cell_name(c.variant);
      const auto file = cells_dir / (name + ".jsonl");
      if (manifest["cells"][name].get<bool>() && std::filesystem::exists(file)) {
        std::ifstream in(file);
        all.append(std::istreambuf_iterator<char>(in), {});
        continue;
      }
      const auto records = parallel_map(c.units.size(), workers, [&](std::size_t i) {
        return probe_unit(c.units[i], backend, cache);
      });
      const std::string text = detail::jsonl(records);
      write_file(file, text);
      all += text;
      manifest["cells"][name] = true;
      write_manifest(manifest);
    }
    write_file(probe_path(), all);
    manifest["finished"] = detail::utc_now();
    write_manifest(manifest);
    log_info("probe: " + std::to_string(cells.size()) + " cells");
    return true;
  }

  // The variant grid of the configured design over `pool`. Cells come in a
  // fixed order: English or baseline cells first, then targets as listed.
  std::vector<ProbeCell> probe_grid(const std::vector<PooledStatement>& pool) {
    auto entry = [&](const PooledStatement& s) -> const DatasetEntry& {
      return by_query(s.query_id);
    };
    const auto& tr = translations();
    const LanguageTag en = LanguageTag::english();
    std::vector<ProbeCell> cells;

    switch (cfg_.experiment) {
      case Experiment::kEnglishPreference:
      case Experiment::kLayerAnalysis:
      case Experiment::kAttribution: {
        std::vector<LanguageTag> langs{en};
        for (const auto& l : cfg_.targets()) langs.push_back(l);
        for (const auto& lang : langs) {
          ProbeCell cell{{VariantKind::kCitedInLanguage, lang}, {}};
          for (const auto& s : pool) {
            if (!s.language.is_english()) continue;
            const auto& e = entry(s);
            cell.units.push_back({&s, build_contrastive_context(e.query, e.docset, tr,
                                                                s.statement.citation_id, lang)});
          }
          cells.push_back(std::move(cell));
        }
        break;
      }
      case Experiment::kQueryLanguage: {
        for (const auto& qlang : cfg_.targets()) {
          std::vector<ProbeCell> group;
          for (const auto& s : pool) {
            if (s.language != qlang) continue;
            const auto& e = entry(s);
            auto variants = build_query_language_variants(localized_query(e, qlang, tr), e.docset,
                                                          tr, s.statement.citation_id, qlang);
            if (group.empty()) {
              for (const auto& v : variants) group.push_back({v.variant, {}});
            }
            for (std::size_t i = 0; i < variants.size(); ++i) {
              group[i].units.push_back({&s, std::move(variants[i])});
            }
          }
          for (auto& g : group) cells.push_back(std::move(g));
        }
        break;
      }
      case Experiment::kRelevanceVsLanguage: {
        ProbeCell base{{VariantKind::kRelEnIrrEn, en}, {}};
        std::vector<ProbeCell> per_lang;
        for (const auto& l : cfg_.targets()) {
          per_lang.push_back({{VariantKind::kRelTgtIrrEn, l}, {}});
          per_lang.push_back({{VariantKind::kRelEnIrrTgt, l}, {}});
        }
        for (const auto& s : pool) {
          if (!s.language.is_english()) continue;
          const auto& e = entry(s);
          const auto& cited = e.docset.doc(s.statement.citation_id);
          if (!cited.relevant) continue;
          const int irr = choose_irrelevant(e.docset, cfg_.seed);
          const auto targets = cfg_.targets();
          for (std::size_t li = 0; li < targets.size(); ++li) {
            auto v = build_relevance_variants(e.query, e.docset, cited.doc_id, irr, tr, targets[li]);
            if (li == 0) {
              v[0].variant.language = en;
              base.units.push_back({&s, std::move(v[0])});
            }
            per_lang[2 * li].units.push_back({&s, std::move(v[1])});
            per_lang[2 * li + 1].units.push_back({&s, std::move(v[2])});
          }
        }
        cells.push_back(std::move(base));
        for (auto& c : per_lang) cells.push_back(std::move(c));
        break;
      }
    }
    return cells;
  }

  // --- analyze / plot ------------------------------------------------------

  AnalysisResult analyze() {
    if (!std::filesystem::exists(probe_path())) {
      throw DependencyError("probe results not found; run probe");
    }
    const auto records = detail::read_jsonl<ProbeRecord>(probe_path());
    const std::string model =
        ad_.backend ? ad_.backend->model_id() : cfg_.model_id;
    auto result = runner::analyze(records, cfg_.experiment, model, cfg_.family_size, cfg_.test);
    emit_tables(result, analyze_dir());
    log_info("analyze: wrote " + analyze_dir().string());
    return result;
  }

  int plot() {
    const auto path = analyze_dir() / "analysis.json";
    if (!std::filesystem::exists(path)) throw DependencyError("analysis not found; run analyze");
    const auto result = analysis_from_json(detail::read_json(path));
    std::filesystem::create_directories(plots_dir());
    int written = 0;
    for (auto k : {PlotKind::kAccuracyBars, PlotKind::kPositionHeatmap, PlotKind::kLayerLines,
                   PlotKind::kVariantScatter}) {
      written += emit_plot(result, k, plots_dir()) ? 1 : 0;
    }
    return written;
  }

  void run_stage(Stage s, bool resume = false) {
    switch (s) {
      case Stage::kTranslate: translate(); break;
      case Stage::kGenerateReports: generate_reports(); break;
      case Stage::kFilter: filter(); break;
      case Stage::kProbe: probe(resume); break;
      case Stage::kAnalyze: analyze(); break;
    }
  }

  // All stages in order. Returns nullopt when the design was skipped.
  std::optional<AnalysisResult> run(bool resume = false) {
    translate();
    generate_reports();
    filter();
    if (!probe(resume)) return std::nullopt;
    auto result = analyze();
    plot();
    return result;
  }

 private:
  const std::vector<DatasetEntry>& dataset() {
    if (!data_) {
      if (cfg_.dataset.empty()) throw ConfigError("no dataset configured");
      if (!std::filesystem::exists(cfg_.dataset)) {
        throw DependencyError("dataset not found: " + cfg_.dataset.string());
      }
      data_ = load_dataset(cfg_.dataset, cfg_.format());
      for (const auto& e : *data_) index_.emplace(e.query.id, &e);
    }
    return *data_;
  }

  const TranslationStore& translations() {
    std::lock_guard lock(store_mu_);
    if (!store_) {
      if (!std::filesystem::exists(translations_path())) {
        throw DependencyError("translations not found; run translate");
      }
      auto s = std::make_unique<TranslationStore>();
      s->load(translations_path());
      store_ = std::move(s);
    }
    return *store_;
  }

  std::vector<LanguageTag> report_languages() const {
    if (cfg_.experiment == Experiment::kQueryLanguage) return cfg_.targets();
    return {LanguageTag::english()};
  }

  static Query localized_query(const DatasetEntry& e, const LanguageTag& lang,
                               const TranslationStore& store) {
    if (e.query.language == lang) return e.query;
    Query q = e.query;
    q.text = store.at(e.query.id, 0, lang).content_translated;
    q.language = lang;
    return q;
  }

  std::size_t stage_workers() const { return cfg_.workers > 0 ? std::size_t(cfg_.workers) : 1; }

  std::optional<std::string> missing_capability() const {
    const auto caps = ad_.backend->capabilities();
    if (!caps.tokenizer) return "tokenizer access";
    if (cfg_.experiment == Experiment::kLayerAnalysis && !caps.layer_trace) return "layer traces";
    if (cfg_.experiment == Experiment::kAttribution && !caps.sequence_logprob) {
      return "sequence log-probabilities";
    }
    return std::nullopt;
  }

  void write_manifest(nlohmann::json& m) {
    m["updated"] = detail::utc_now();
    write_file(manifest_path(), m.dump(2) + "\n");
  }

  ProbeRecord probe_unit(const ProbeUnit& u, ProbeBackend& backend, ProbeCache& cache) {
    const auto& e = by_query(u.statement->query_id);
    const auto& tr = translations();
    const auto& stmt = u.statement->statement;
    ProbeRecord r;
    r.position = u.context.position;
    r.k = u.context.size();
    r.prediction.query_id = u.statement->query_id;
    r.prediction.statement_index = stmt.index;
    r.prediction.variant = u.context.variant;
    r.prediction.citation_id = u.context.cited_display_id();

    if (cfg_.experiment == Experiment::kAttribution) {
      r.kind = RecordKind::kAttribution;
      const auto sentences = context_sentences(u.context, e.docset, tr);
      std::vector<int> sentence_doc;
      for (const auto& s : sentences) sentence_doc.push_back(s.doc_id);
      const auto seed =
          derive_seed(cfg_.seed, u.statement->query_id + "#" + std::to_string(stmt.index));
      std::vector<AblationSample> samples;
      for (auto& m : sample_masks(static_cast<int>(sentences.size()), cfg_.mask_count, seed)) {
        const auto prompt = render_masked_prompt(u.context, e.docset, tr, m);
        const double y = ablation_logit_prob(backend, prompt, stmt.text, m, &cache);
        samples.push_back({std::move(m), y});
      }
      const auto s = fit_surrogate(samples, cfg_.lambda);
      r.sentences = static_cast<int>(sentences.size());
      r.attribution = attribution_result(s, sentence_doc, stmt.citation_id);
      r.fit_residual = s.fit_residual;
      r.rank_deficient = s.rank_deficient;
      return r;
    }

    const auto bundle = render_prompt(u.context, stmt, e.docset, tr);
    auto pred = next_citation_distribution(backend, bundle, r.prediction.citation_id, &cache);
    pred.query_id = r.prediction.query_id;
    pred.statement_index = r.prediction.statement_index;
    pred.variant = r.prediction.variant;
    r.prediction = std::move(pred);
    if (cfg_.experiment == Experiment::kLayerAnalysis) {
      r.kind = RecordKind::kLayer;
      r.trace = layer_trace(backend, bundle, &cache).per_layer_top1;
    }
    return r;
  }

  const DatasetEntry& by_query(const std::string& id) {
    dataset();
    auto it = index_.find(id);
    if (it == index_.end()) throw DependencyError("query " + id + " is not in the dataset");
    return *it->second;
  }

  ExperimentConfig cfg_;
  Adapters ad_;
  std::optional<std::vector<DatasetEntry>> data_;
  std::map<std::string, const DatasetEntry*> index_;
  std::mutex store_mu_;
  std::unique_ptr<TranslationStore> store_;
};

}  // namespace langpref::runner
