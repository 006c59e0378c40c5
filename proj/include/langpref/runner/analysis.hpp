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

// Turns probe records into metric cells. Pure: the same records always give
// the same result, whatever order cells were probed in.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "langpref/metrics.hpp"
#include "langpref/runner/config.hpp"
#include "langpref/surrogate.hpp"

namespace langpref::runner {

enum class RecordKind { kCitation, kLayer, kAttribution };

inline std::string_view to_string(RecordKind k) {
  switch (k) {
    case RecordKind::kCitation: return "citation";
    case RecordKind::kLayer: return "layer";
    case RecordKind::kAttribution: return "attribution";
  }
  return "unknown";
}

inline RecordKind record_kind_from_string(std::string_view s) {
  for (auto k : {RecordKind::kCitation, RecordKind::kLayer, RecordKind::kAttribution}) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown probe record kind '" + std::string(s) + "'");
}

// One probed (statement, variant) unit.
struct ProbeRecord {
  RecordKind kind = RecordKind::kCitation;
  CitationPrediction prediction;  // identity fields are always set
  PositionLabel position = PositionLabel::kFirst;
  int k = 0;
  std::vector<std::string> trace;  // layer records
  int sentences = 0;               // attribution records
  AttributionResult attribution;
  double fit_residual = 0.0;
  bool rank_deficient = false;
};

inline PositionLabel position_from_string(std::string_view s) {
  for (auto p : {PositionLabel::kFirst, PositionLabel::kMiddle, PositionLabel::kLast}) {
    if (to_string(p) == s) return p;
  }
  throw ParseError("unknown position label '" + std::string(s) + "'");
}

inline void to_json(nlohmann::json& j, const ProbeRecord& r) {
  j = {{"kind", to_string(r.kind)}, {"prediction", r.prediction},
       {"position", to_string(r.position)}, {"k", r.k}};
  if (r.kind == RecordKind::kLayer) j["trace"] = r.trace;
  if (r.kind == RecordKind::kAttribution) {
    j["sentences"] = r.sentences;
    j["hit_at_1"] = r.attribution.hit_at_1;
    j["hit_at_3"] = r.attribution.hit_at_3;
    j["score_at_1"] = r.attribution.score_at_1;
    j["score_at_3"] = r.attribution.score_at_3;
    j["fit_residual"] = r.fit_residual;
    j["rank_deficient"] = r.rank_deficient;
  }
}

inline void from_json(const nlohmann::json& j, ProbeRecord& r) {
  r.kind = record_kind_from_string(j.at("kind").get<std::string>());
  r.prediction = j.at("prediction").get<CitationPrediction>();
  r.position = position_from_string(j.at("position").get<std::string>());
  r.k = j.at("k").get<int>();
  if (r.kind == RecordKind::kLayer) r.trace = j.at("trace").get<std::vector<std::string>>();
  if (r.kind == RecordKind::kAttribution) {
    r.sentences = j.at("sentences").get<int>();
    r.attribution.hit_at_1 = j.at("hit_at_1").get<double>();
    r.attribution.hit_at_3 = j.at("hit_at_3").get<double>();
    r.attribution.score_at_1 = j.at("score_at_1").get<double>();
    r.attribution.score_at_3 = j.at("score_at_3").get<double>();
    r.fit_residual = j.at("fit_residual").get<double>();
    r.rank_deficient = j.at("rank_deficient").get<bool>();
  }
}

struct CellAnalysis {
  ContextVariant variant;
  std::optional<AccuracyCell> accuracy;
  std::optional<PositionBinnedAccuracy> positions;
  std::optional<LayerClassCounts> layers;
  std::optional<AttributionResult> attribution;
  int attribution_n = 0;
};

struct AnalysisResult {
  std::string model_id;
  Experiment experiment = Experiment::kEnglishPreference;
  stats::TestKind test = stats::TestKind::kPaired;
  int family_size = 0;
  std::vector<CellAnalysis> cells;
  std::vector<GapResult> gaps;
};

// Baseline variant each compared variant is tested against.
inline std::optional<ContextVariant> baseline_for(Experiment e, const ContextVariant& v) {
  const LanguageTag en = LanguageTag::english();
  switch (e) {
    case Experiment::kEnglishPreference:
    case Experiment::kLayerAnalysis:
      if (v.kind == VariantKind::kCitedInLanguage && !v.language.is_english()) {
        return ContextVariant{VariantKind::kCitedInLanguage, en};
      }
      return std::nullopt;
    case Experiment::kQueryLanguage:
      if (v.kind != VariantKind::kAllEn) return ContextVariant{VariantKind::kAllEn, v.language};
      return std::nullopt;
    case Experiment::kRelevanceVsLanguage:
      if (v.kind != VariantKind::kRelEnIrrEn) {
        return ContextVariant{VariantKind::kRelEnIrrEn, en};
      }
      return std::nullopt;
    case Experiment::kAttribution:
      return std::nullopt;
  }
  return std::nullopt;
}

inline AnalysisResult analyze(std::span<const ProbeRecord> records, Experiment experiment,
                              const std::string& model_id, int family_size,
                              stats::TestKind test) {
  std::vector<ContextVariant> order;
  std::map<ContextVariant, std::vector<const ProbeRecord*>> groups;
  for (const auto& r : records) {
    auto [it, inserted] = groups.try_emplace(r.prediction.variant);
    if (inserted) order.push_back(r.prediction.variant);
    it->second.push_back(&r);
  }

  AnalysisResult out;
  out.model_id = model_id;
  out.experiment = experiment;
  out.test = test;
  std::map<ContextVariant, std::vector<CitationPrediction>> predictions;
  for (const auto& v : order) {
    const auto& members = groups[v];
    CellAnalysis cell;
    cell.variant = v;
    std::vector<CitationPrediction> preds;
    std::vector<PositionLabel> labels;
    std::vector<std::vector<LayerClass>> classes;
    std::vector<AttributionResult> attributions;
    for (const auto* r : members) {
      if (r->kind == RecordKind::kAttribution) {
        attributions.push_back(r->attribution);
        continue;
      }
      preds.push_back(r->prediction);
      labels.push_back(r->position);
      if (r->kind == RecordKind::kLayer) {
        classes.push_back(classify_layers(r->trace, r->prediction.citation_id, r->k));
      }
    }
    if (!preds.empty()) {
      cell.accuracy = citation_accuracy(preds, model_id);
      cell.positions = bin_by_position(preds, labels);
    }
    if (!classes.empty()) cell.layers = aggregate_layer_counts(classes);
    if (!attributions.empty()) {
      cell.attribution = mean_attribution(attributions);
      cell.attribution_n = static_cast<int>(attributions.size());
    }
    predictions[v] = std::move(preds);
    out.cells.push_back(std::move(cell));
  }

  std::vector<std::pair<ContextVariant, ContextVariant>> pairs;
  for (const auto& v : order) {
    auto base = baseline_for(experiment, v);
    if (!base || predictions[v].empty()) continue;
    auto it = predictions.find(*base);
    if (it == predictions.end() || it->second.empty()) continue;
    pairs.emplace_back(v, *base);
  }
  out.family_size = family_size > 0 ? family_size : std::max<int>(1, pairs.size());
  for (const auto& [v, base] : pairs) {
    out.gaps.push_back(
        compare_predictions(predictions[base], predictions[v], model_id, out.family_size, test));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON round trip for analysis.json

inline nlohmann::json to_json(const CellAnalysis& c) {
  nlohmann::json j = {{"variant", c.variant}};
  if (c.accuracy) j["accuracy"] = *c.accuracy;
  if (c.positions) {
    nlohmann::json bins = nlohmann::json::object();
    for (auto p : {PositionLabel::kFirst, PositionLabel::kMiddle, PositionLabel::kLast}) {
      const auto& b = (*c.positions)[p];
      bins[std::string(to_string(p))] = {{"n", b.n}, {"correct", b.correct}};
    }
    j["positions"] = bins;
  }
  if (c.layers) j["layers"] = {{"n", c.layers->n}, {"per_layer", c.layers->per_layer}};
  if (c.attribution) {
    j["attribution"] = {{"n", c.attribution_n},
                        {"hit_at_1", c.attribution->hit_at_1},
                        {"hit_at_3", c.attribution->hit_at_3},
                        {"score_at_1", c.attribution->score_at_1},
                        {"score_at_3", c.attribution->score_at_3}};
  }
  return j;
}

inline CellAnalysis cell_from_json(const nlohmann::json& j) {
  CellAnalysis c;
  c.variant = j.at("variant").get<ContextVariant>();
  if (j.contains("accuracy")) c.accuracy = j["accuracy"].get<AccuracyCell>();
  if (j.contains("positions")) {
    PositionBinnedAccuracy pb;
    for (auto p : {PositionLabel::kFirst, PositionLabel::kMiddle, PositionLabel::kLast}) {
      const auto& b = j["positions"].at(std::string(to_string(p)));
      auto& bin = pb.bins[static_cast<int>(p)];
      bin.n = b.at("n").get<int>();
      bin.correct = b.at("correct").get<int>();
      if (bin.n > 0) bin.acc = double(bin.correct) / bin.n;
    }
    c.positions = pb;
  }
  if (j.contains("layers")) {
    LayerClassCounts lc;
    lc.n = j["layers"].at("n").get<int>();
    lc.per_layer = j["layers"].at("per_layer").get<std::vector<std::array<int, 3>>>();
    c.layers = lc;
  }
  if (j.contains("attribution")) {
    const auto& a = j["attribution"];
    c.attribution_n = a.at("n").get<int>();
    c.attribution = AttributionResult{a.at("hit_at_1").get<double>(), a.at("hit_at_3").get<double>(),
                                      a.at("score_at_1").get<double>(),
                                      a.at("score_at_3").get<double>()};
  }
  return c;
}

inline nlohmann::json to_json(const AnalysisResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) cells.push_back(to_json(c));
  return {{"model_id", r.model_id},
          {"experiment", to_string(r.experiment)},
          {"test", stats::to_string(r.test)},
          {"family_size", r.family_size},
          {"cells", cells},
          {"gaps", r.gaps}};
}

inline AnalysisResult analysis_from_json(const nlohmann::json& j) {
  AnalysisResult r;
  r.model_id = j.at("model_id").get<std::string>();
  r.experiment = experiment_from_string(j.at("experiment").get<std::string>());
  r.test = stats::test_kind_from_string(j.at("test").get<std::string>());
  r.family_size = j.at("family_size").get<int>();
  for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
  r.gaps = j.at("gaps").get<std::vector<GapResult>>();
  return r;
}

}  // namespace langpref::runner
