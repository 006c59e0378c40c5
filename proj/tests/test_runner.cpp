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


#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "langpref/backends/scripted.hpp"
#include "langpref/log.hpp"
#include "langpref/runner/pipeline.hpp"
#include "langpref/runner/plots.hpp"
#include "test_support.hpp"

#ifndef LANGPREF_TEST_DIR
#define LANGPREF_TEST_DIR "tests"
#endif

namespace langpref::runner {
namespace {

namespace fs = std::filesystem;
using testing::slurp;
using testing::spit;

class RunnerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    old_sink_ = set_log_sink([this](LogLevel, std::string_view m) { lines_.emplace_back(m); });
    dir_ = testing::scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
  }
  void TearDown() override {
    set_log_sink(std::move(old_sink_));
    fs::remove_all(dir_);
  }

  ExperimentConfig config(Experiment e, int queries, int k, const std::string& langs = "fr") {
    ExperimentConfig c;
    c.experiment = e;
    c.model_id = "scripted";
    c.languages = parse_languages(langs);
    c.dataset = dir_ / "dataset.jsonl";
    c.workdir = dir_ / "work";
    c.seed = 7;
    c.mask_count = 16;
    c.lambda = 0.0;
    c.translator = "tag";
    c.generator = "extractive";
    c.judges = "overlap;overlap;overlap";
    c.nli = "substring";
    c.backend = "scripted:en=0.8,fr=0.6,sw=0.5,ko=0.7,seed=3,layers=6";
    spit(c.dataset, testing::synthetic_dataset(queries, k, e == Experiment::kRelevanceVsLanguage));
    return c;
  }

  // Pipeline plus a handle on its scripted backend for call counting.
  struct Harness {
    Pipeline pipeline;
    backends::ScriptedRateBackend* backend;
  };
  static Harness pipeline(const ExperimentConfig& c) {
    auto ad = make_adapters(c);
    auto* raw = dynamic_cast<backends::ScriptedRateBackend*>(ad.backend.get());
    return Harness{Pipeline(c, std::move(ad)), raw};
  }

  bool logged(const std::string& needle) const {
    for (const auto& l : lines_) {
      if (l.find(needle) != std::string::npos) return true;
    }
    return false;
  }

  fs::path dir_;
  std::vector<std::string> lines_;
  LogSink old_sink_;
};

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") {
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  }
  return out;
}

int count_lines(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

TEST_F(RunnerTest, EnglishPreferenceTwoStatements) {
  auto [p, backend] = pipeline(config(Experiment::kEnglishPreference, 1, 2));
  const auto result = p.run();
  ASSERT_TRUE(result);
  EXPECT_EQ(backend->next_token_calls, 4);
  ASSERT_EQ(result->cells.size(), 2u);
  EXPECT_EQ(result->cells[0].variant.language.code(), "en");
  EXPECT_EQ(result->cells[1].variant.language.code(), "fr");
  EXPECT_EQ(result->cells[0].accuracy->n, 2);
  ASSERT_EQ(result->gaps.size(), 1u);
  EXPECT_EQ(result->family_size, 1);
  EXPECT_EQ(count_lines(p.analyze_dir() / "table.csv"), 3);
  for (const char* f : {"metrics.jsonl", "table.csv", "summary.csv", "positions.csv", "layers.csv",
                        "attribution.csv", "analysis.json"}) {
    EXPECT_TRUE(fs::exists(p.analyze_dir() / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(p.manifest_path()));
  EXPECT_EQ(manifest["cells"]["cited_in_language__en"], true);
  EXPECT_EQ(manifest["cells"]["cited_in_language__fr"], true);
  EXPECT_TRUE(manifest.contains("finished"));
  EXPECT_EQ(manifest["model_id"], "scripted");
}

TEST_F(RunnerTest, WarmRerunIsIdenticalAndMakesNoCalls) {
  const auto c = config(Experiment::kEnglishPreference, 4, 3, "fr,sw");
  std::map<std::string, std::string> first;
  {
    auto [p, backend] = pipeline(c);
    p.run();
    EXPECT_EQ(backend->next_token_calls, 4 * 3 * 3);
    first = snapshot(c.workdir);
  }
  auto [p, backend] = pipeline(c);
  p.run();
  EXPECT_EQ(backend->next_token_calls, 0);
  EXPECT_EQ(snapshot(c.workdir), first);
}

TEST_F(RunnerTest, QueryLanguageProbesFourVariantsPerStatement) {
  auto [p, backend] = pipeline(config(Experiment::kQueryLanguage, 2, 3, "ko"));
  const auto result = p.run();
  ASSERT_TRUE(result);
  const auto pool = slurp(p.pool_path());
  const int statements = count_lines(p.pool_path());
  EXPECT_EQ(statements, 6);
  EXPECT_NE(pool.find("\"ko\""), std::string::npos);
  EXPECT_EQ(backend->next_token_calls, 4 * statements);
  ASSERT_EQ(result->cells.size(), 4u);
  EXPECT_EQ(result->gaps.size(), 3u);
  for (const auto& g : result->gaps) EXPECT_EQ(g.baseline.kind, VariantKind::kAllEn);
}

TEST_F(RunnerTest, RelevanceDesignUsesRelevantStatements) {
  auto [p, backend] = pipeline(config(Experiment::kRelevanceVsLanguage, 3, 3, "sw"));
  const auto result = p.run();
  ASSERT_TRUE(result);
  ASSERT_EQ(result->cells.size(), 3u);
  EXPECT_EQ(result->cells[0].variant, (ContextVariant{VariantKind::kRelEnIrrEn, LanguageTag::english()}));
  // Only document 1 of each query is relevant.
  EXPECT_EQ(result->cells[0].accuracy->n, 3);
  EXPECT_EQ(result->gaps.size(), 2u);
  EXPECT_EQ(backend->next_token_calls, 9);
}

TEST_F(RunnerTest, LayerDesignRecordsTraces) {
  auto [p, backend] = pipeline(config(Experiment::kLayerAnalysis, 3, 3));
  const auto result = p.run();
  ASSERT_TRUE(result);
  EXPECT_EQ(backend->layer_calls, 18);
  for (const auto& c : result->cells) {
    ASSERT_TRUE(c.layers);
    ASSERT_EQ(c.layers->per_layer.size(), 6u);
    const auto& last = c.layers->per_layer.back();
    EXPECT_EQ(last[0], c.accuracy->correct);
    for (const auto& row : c.layers->per_layer) EXPECT_EQ(row[0] + row[1] + row[2], c.layers->n);
  }
  std::istringstream csv(slurp(p.plots_dir() / "layer_lines.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "label,layer,correct,incorrect,other");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::vector<int> v;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    while (std::getline(ss, field, ',')) v.push_back(std::stoi(field));
    ASSERT_EQ(v.size(), 4u);
    EXPECT_EQ(v[1] + v[2] + v[3], 9);
    ++rows;
  }
  EXPECT_EQ(rows, 12);
}

TEST_F(RunnerTest, AttributionDesignFitsSurrogates) {
  auto c = config(Experiment::kAttribution, 2, 3);
  auto [p, backend] = pipeline(c);
  const auto result = p.run();
  ASSERT_TRUE(result);
  EXPECT_GT(backend->sequence_calls, 0);
  EXPECT_TRUE(result->gaps.empty());
  for (const auto& cell : result->cells) {
    ASSERT_TRUE(cell.attribution);
    EXPECT_EQ(cell.attribution_n, 6);
    EXPECT_LE(cell.attribution->hit_at_1, cell.attribution->hit_at_3);
  }
  EXPECT_EQ(count_lines(p.analyze_dir() / "attribution.csv"), 3);
}

TEST_F(RunnerTest, FilterBeforeReportsNamesTheMissingStage) {
  auto [p, backend] = pipeline(config(Experiment::kEnglishPreference, 1, 2));
  try {
    p.run_stage(Stage::kFilter);
    FAIL() << "expected a dependency error";
  } catch (const DependencyError& e) {
    EXPECT_STREQ(e.what(), "reports not found; run generate_reports");
  }
  EXPECT_THROW(p.probe(), DependencyError);
  EXPECT_THROW(p.analyze(), DependencyError);
  EXPECT_THROW(p.plot(), DependencyError);
}

TEST_F(RunnerTest, ProbeBeforeFilterNamesTheMissingStage) {
  auto [p, backend] = pipeline(config(Experiment::kEnglishPreference, 1, 2));
  p.translate();
  p.generate_reports();
  try {
    p.probe();
    FAIL();
  } catch (const DependencyError& e) {
    EXPECT_STREQ(e.what(), "statement pool not found; run filter");
  }
}

TEST_F(RunnerTest, TranslateEightTargets) {
  auto [p, backend] = pipeline(config(Experiment::kEnglishPreference, 1, 5, "ar,bn,es,fr,ja,ko,ru,sw"));
  EXPECT_EQ(p.translate(), 40u);
  EXPECT_EQ(count_lines(p.translations_path()), 40);
  EXPECT_EQ(p.translate(), 40u);
}

TEST_F(RunnerTest, StagesAreIncremental) {
  auto [p, backend] = pipeline(config(Experiment::kEnglishPreference, 3, 2));
  p.translate();
  EXPECT_EQ(p.generate_reports(), 3u);
  EXPECT_EQ(p.generate_reports(), 0u);
  const auto pool = p.filter();
  EXPECT_EQ(pool.pool.size(), 6u);
  const auto again = p.filter();
  EXPECT_EQ(again.pool.size(), 6u);
  EXPECT_EQ(again.stats.total, pool.stats.total);
}

TEST_F(RunnerTest, ResumeAfterInterruptionIsByteIdentical) {
  const auto c = config(Experiment::kEnglishPreference, 5, 3, "fr,sw");
  auto [p, backend] = pipeline(c);
  p.run();
  const auto probe = slurp(p.probe_path());
  const auto table = slurp(p.analyze_dir() / "table.csv");

  // Simulate a kill after the first cell: the later cells never finished.
  auto manifest = nlohmann::json::parse(slurp(p.manifest_path()));
  manifest["cells"]["cited_in_language__fr"] = false;
  manifest["cells"]["cited_in_language__sw"] = false;
  manifest.erase("finished");
  spit(p.manifest_path(), manifest.dump(2));
  fs::remove(c.run_dir() / "cells" / "cited_in_language__sw.jsonl");
  fs::remove(p.probe_path());
  fs::remove_all(p.analyze_dir());
  fs::remove_all(c.cache_path());

  auto [q, fresh] = pipeline(c);
  ASSERT_TRUE(q.probe(true));
  EXPECT_EQ(fresh->next_token_calls, 2 * 15);
  q.analyze();
  EXPECT_EQ(slurp(q.probe_path()), probe);
  EXPECT_EQ(slurp(q.analyze_dir() / "table.csv"), table);
}

TEST_F(RunnerTest, ResumeRefusesDigestMismatch) {
  auto c = config(Experiment::kEnglishPreference, 2, 2);
  {
    auto [p, backend] = pipeline(c);
    p.run();
  }
  c.seed = 8;
  auto [p, backend] = pipeline(c);
  try {
    p.probe(true);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("refusing to resume"), std::string::npos);
  }
  EXPECT_TRUE(p.probe(false));
}

TEST_F(RunnerTest, AnalyzeAloneReproducesOutputs) {
  auto [p, backend] = pipeline(config(Experiment::kLayerAnalysis, 3, 3, "fr,sw"));
  p.run();
  const auto before = snapshot(p.analyze_dir());
  fs::remove_all(p.analyze_dir());
  auto [q, fresh] = pipeline(p.config());
  q.run_stage(Stage::kAnalyze);
  EXPECT_EQ(snapshot(q.analyze_dir()), before);
  EXPECT_EQ(fresh->next_token_calls, 0);
}

TEST_F(RunnerTest, CapabilityMissingDesignIsSkipped) {
  class NoLayers : public backends::ScriptedRateBackend {
   public:
    using ScriptedRateBackend::ScriptedRateBackend;
    BackendCapabilities capabilities() const override { return {true, false, false}; }
  };
  auto c = config(Experiment::kLayerAnalysis, 1, 2);
  auto ad = make_adapters(c);
  ad.backend = std::make_shared<NoLayers>(std::map<std::string, double>{{"en", 0.8}}, 1);
  Pipeline p(c, std::move(ad));
  EXPECT_FALSE(p.run());
  EXPECT_TRUE(logged("skipping layer_analysis"));
  EXPECT_FALSE(fs::exists(p.probe_path()));
}

TEST_F(RunnerTest, MultiTokenIdsAreRejected) {
  class Splitter : public backends::ScriptedRateBackend {
   public:
    using ScriptedRateBackend::ScriptedRateBackend;
    int count_tokens(std::string_view t) override { return t == "2" ? 2 : 1; }
  };
  auto c = config(Experiment::kEnglishPreference, 1, 2);
  auto ad = make_adapters(c);
  ad.backend = std::make_shared<Splitter>(std::map<std::string, double>{{"en", 0.8}}, 1);
  Pipeline p(c, std::move(ad));
  p.translate();
  p.generate_reports();
  p.filter();
  EXPECT_THROW(p.probe(), ConstraintError);
}

// ---------------------------------------------------------------------------
// Tables and plots

std::vector<ProbeRecord> fixture_records() {
  std::vector<ProbeRecord> out;
  const char* langs[] = {"en", "fr", "sw"};
  const int correct[3][6] = {{1, 1, 1, 0, 1, 1}, {1, 0, 1, 0, 1, 1}, {0, 0, 1, 0, 0, 1}};
  const PositionLabel pos[6] = {PositionLabel::kFirst, PositionLabel::kMiddle, PositionLabel::kLast,
                                PositionLabel::kFirst, PositionLabel::kMiddle, PositionLabel::kLast};
  for (int l = 0; l < 3; ++l) {
    for (int i = 0; i < 6; ++i) {
      ProbeRecord r;
      r.kind = RecordKind::kLayer;
      r.position = pos[i];
      r.k = 3;
      auto& p = r.prediction;
      p.query_id = "q" + std::to_string(i / 2 + 1);
      p.statement_index = i % 2;
      p.variant = {VariantKind::kCitedInLanguage, LanguageTag(langs[l])};
      p.citation_id = 1 + i % 3;
      p.top1_token = correct[l][i] ? std::to_string(p.citation_id) : (i % 2 ? "The" : "3");
      if (!correct[l][i] && p.top1_token == std::to_string(p.citation_id)) p.top1_token = "1";
      p.correct = correct[l][i] != 0;
      p.p_correct = correct[l][i] ? 0.75 : 0.125;
      p.entropy = 0.5 + 0.25 * i;
      r.trace = {"The", i % 2 ? "2" : "x", p.top1_token};
      out.push_back(r);
    }
  }
  return out;
}

TEST(Tables, GoldenFiles) {
  const auto records = fixture_records();
  const auto result = analyze(records, Experiment::kLayerAnalysis, "fixture-model", 0,
                              stats::TestKind::kPaired);
  const auto dir = testing::scratch_dir("golden");
  emit_tables(result, dir);
  const fs::path golden = fs::path(LANGPREF_TEST_DIR) / "golden";
  const bool update = std::getenv("LANGPREF_UPDATE_GOLDEN") != nullptr;
  for (const char* f : {"metrics.jsonl", "table.csv", "summary.csv", "positions.csv", "layers.csv",
                        "attribution.csv", "analysis.json"}) {
    if (update) spit(golden / f, slurp(dir / f));
    ASSERT_TRUE(fs::exists(golden / f)) << f;
    EXPECT_EQ(slurp(dir / f), slurp(golden / f)) << f;
  }
  fs::remove_all(dir);
}

TEST(Tables, EmptyResultGivesHeaderOnlyFiles) {
  const auto result = analyze(std::vector<ProbeRecord>{}, Experiment::kEnglishPreference, "m", 0,
                              stats::TestKind::kPaired);
  EXPECT_EQ(accuracy_table_csv(result),
            "model_id,variant,language,n,acc,mean_p_correct,mean_entropy,delta,t_stat,p_raw,"
            "p_adjusted,stars\n");
  EXPECT_EQ(positions_csv(result), "variant,language,position,n,correct,acc\n");
  EXPECT_EQ(layers_csv(result), "variant,language,layer,correct,incorrect,other,n\n");
  EXPECT_EQ(attribution_csv(result), "variant,language,n,hit_at_1,hit_at_3,score_at_1,score_at_3\n");
  EXPECT_EQ(summary_csv(std::span(&result, 1)), "language,m\n");
}

TEST(Tables, StarsRenderedFromAdjustedP) {
  AnalysisResult r;
  r.model_id = "m";
  CellAnalysis c;
  c.variant = {VariantKind::kCitedInLanguage, LanguageTag("fr")};
  c.accuracy = AccuracyCell{"m", LanguageTag("fr"), c.variant, 10, 6, 0.6, 0.6, 1.0};
  r.cells.push_back(c);
  GapResult g;
  g.model_id = "m";
  g.language = LanguageTag("fr");
  g.variant = c.variant;
  g.delta = -0.2;
  g.p_raw = 0.0001;
  g.p_adjusted = 0.0009;
  g.stars = std::string(stats::stars(g.p_adjusted));
  r.gaps.push_back(g);
  EXPECT_EQ(g.stars, "***");
  EXPECT_NE(accuracy_table_csv(r).find(",***\n"), std::string::npos);
  EXPECT_NE(summary_csv(std::span(&r, 1)).find("60.0 (-20.00***)"), std::string::npos);
}

TEST(Tables, AnalysisJsonRoundTrip) {
  const auto records = fixture_records();
  const auto result = analyze(records, Experiment::kLayerAnalysis, "m", 8, stats::TestKind::kPaired);
  const auto back = analysis_from_json(to_json(result));
  EXPECT_EQ(to_json(back).dump(), to_json(result).dump());
  EXPECT_EQ(back.family_size, 8);
  EXPECT_EQ(back.gaps.size(), 2u);
}

TEST(Plots, EveryKindWritesDataTable) {
  const auto records = fixture_records();
  const auto result = analyze(records, Experiment::kLayerAnalysis, "m", 0, stats::TestKind::kPaired);
  const auto dir = testing::scratch_dir("plots");
  for (auto k : {PlotKind::kAccuracyBars, PlotKind::kPositionHeatmap, PlotKind::kLayerLines,
                 PlotKind::kVariantScatter}) {
    EXPECT_TRUE(emit_plot(result, k, dir));
    const auto svg = slurp(dir / (std::string(to_string(k)) + ".svg"));
    EXPECT_EQ(svg.rfind("<svg", 0), 0u) << to_string(k);
    EXPECT_TRUE(fs::exists(dir / (std::string(to_string(k)) + ".csv")));
  }
  // Heatmap rows are exactly First, Middle, Last.
  std::istringstream heat(slurp(dir / "position_heatmap.csv"));
  std::string line;
  std::getline(heat, line);
  std::set<std::string> rows;
  while (std::getline(heat, line)) rows.insert(line.substr(0, line.find(',')));
  EXPECT_EQ(rows, (std::set<std::string>{"First", "Middle", "Last"}));
  fs::remove_all(dir);
}

TEST(Plots, SingleLanguageBarsAndMissingSeries) {
  auto records = fixture_records();
  records.resize(6);
  for (auto& r : records) r.kind = RecordKind::kCitation;
  const auto result = analyze(records, Experiment::kEnglishPreference, "m", 0, stats::TestKind::kPaired);
  const auto dir = testing::scratch_dir("plots_single");
  auto old = set_log_sink([](LogLevel, std::string_view) {});
  EXPECT_TRUE(emit_plot(result, PlotKind::kAccuracyBars, dir));
  EXPECT_EQ(count_lines(dir / "accuracy_bars.csv"), 2);
  EXPECT_FALSE(emit_plot(result, PlotKind::kLayerLines, dir));
  EXPECT_FALSE(fs::exists(dir / "layer_lines.svg"));
  set_log_sink(std::move(old));
  EXPECT_EQ(plot_kind_from_string("variant_scatter"), PlotKind::kVariantScatter);
  EXPECT_THROW(plot_kind_from_string("pie"), ConfigError);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, ParsesFlatKeyValues) {
  std::istringstream in(
      "# comment\n"
      "experiment = query_language\n"
      "model = tiny\n"
      "languages = fr, sw ,en,fr\n"
      "seed = 11\n"
      "family_size = 3\n"
      "mask_count = 32\n"
      "lambda = 0.5\n"
      "test = independent\n"
      "\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.experiment, Experiment::kQueryLanguage);
  EXPECT_EQ(c.model_id, "tiny");
  ASSERT_EQ(c.targets().size(), 2u);
  EXPECT_EQ(c.targets()[1].code(), "sw");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.family_size, 3);
  EXPECT_EQ(c.mask_count, 32);
  EXPECT_EQ(c.lambda, 0.5);
  EXPECT_EQ(c.test, stats::TestKind::kIndependent);
  EXPECT_EQ(c.run_dir(), fs::path("runs") / "query_language" / "tiny");
}

TEST(Config, RejectsBadInput) {
  std::istringstream unknown("colour = blue\n");
  EXPECT_THROW(parse_config(unknown), ConfigError);
  std::istringstream noeq("just words\n");
  EXPECT_THROW(parse_config(noeq), ParseError);
  std::istringstream badnum("seed = many\n");
  EXPECT_THROW(parse_config(badnum), ConfigError);
  std::istringstream badexp("experiment = vibes\n");
  EXPECT_THROW(parse_config(badexp), ConfigError);
  ExperimentConfig c;
  c.languages = parse_languages("en");
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_languages("fr,english"), ConstraintError);
}

TEST(Config, DigestTracksResultFields) {
  ExperimentConfig c;
  c.languages = parse_languages("fr");
  const auto base = config_digest(c);
  EXPECT_EQ(config_digest(c), base);
  auto vary = [&](auto mutate) {
    auto d = c;
    mutate(d);
    return config_digest(d);
  };
  EXPECT_NE(vary([](auto& d) { d.seed = 1; }), base);
  EXPECT_NE(vary([](auto& d) { d.model_id = "other"; }), base);
  EXPECT_NE(vary([](auto& d) { d.languages = parse_languages("fr,sw"); }), base);
  EXPECT_NE(vary([](auto& d) { d.experiment = Experiment::kAttribution; }), base);
  EXPECT_NE(vary([](auto& d) { d.mask_count = 65; }), base);
  EXPECT_NE(vary([](auto& d) { d.lambda = 0.02; }), base);
  EXPECT_NE(vary([](auto& d) { d.family_size = 2; }), base);
  EXPECT_NE(vary([](auto& d) { d.test = stats::TestKind::kIndependent; }), base);
  EXPECT_NE(vary([](auto& d) { d.backend = "scripted:en=0.5"; }), base);
  EXPECT_EQ(vary([](auto& d) { d.workers = 8; }), base);
  EXPECT_EQ(vary([](auto& d) { d.languages = parse_languages("en,fr"); }), base);
}

}  // namespace
}  // namespace langpref::runner
