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

// Citation accuracy, language gaps with significance, position bins and
// logit-lens layer classes.

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "langpref/contextlab.hpp"
#include "langpref/error.hpp"
#include "langpref/probe.hpp"
#include "langpref/stats.hpp"
#include "langpref/surrogate.hpp"

namespace langpref {

struct AccuracyCell {
  std::string model_id;
  LanguageTag language;
  ContextVariant variant;
  int n = 0;
  int correct = 0;
  double acc = 0.0;
  double mean_p_correct = 0.0;
  double mean_entropy = 0.0;
};

inline AccuracyCell citation_accuracy(std::span<const CitationPrediction> predictions,
                                      std::string model_id = {}) {
  if (predictions.empty()) throw DomainError("citation_accuracy: no predictions");
  AccuracyCell c;
  c.model_id = std::move(model_id);
  c.variant = predictions.front().variant;
  c.language = c.variant.language;
  for (const auto& p : predictions) {
    if (p.variant != c.variant) {
      throw DomainError("citation_accuracy: predictions mix context variants");
    }
    c.correct += p.correct ? 1 : 0;
    c.mean_p_correct += p.p_correct;
    c.mean_entropy += p.entropy;
  }
  c.n = static_cast<int>(predictions.size());
  c.acc = double(c.correct) / c.n;
  c.mean_p_correct /= c.n;
  c.mean_entropy /= c.n;
  return c;
}

// Acc(target) - Acc(en), as a fraction.
inline double accuracy_gap(const AccuracyCell& target, const AccuracyCell& english) {
  if (target.n != english.n) {
    throw DomainError("accuracy_gap: cells cover different statement counts (" +
                      std::to_string(target.n) + " vs " + std::to_string(english.n) + ")");
  }
  if (target.model_id != english.model_id) {
    throw DomainError("accuracy_gap: cells come from different models");
  }
  return target.acc - english.acc;
}

struct GapResult {
  std::string model_id;
  LanguageTag language;
  ContextVariant variant;
  ContextVariant baseline;
  double delta = 0.0;
  double t_stat = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  std::string stars = "ns";
  stats::TestKind test = stats::TestKind::kPaired;
  bool degenerate = false;
};

struct Significance {
  double t_stat = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  std::string stars = "ns";
  bool degenerate = false;
};

// Per-statement 0/1 correctness vectors, English first.
inline Significance significance(std::span<const double> english,
                                 std::span<const double> target, int family_size,
                                 stats::TestKind test = stats::TestKind::kPaired) {
  const auto r = test == stats::TestKind::kPaired
                     ? stats::paired_t_test(english, target)
                     : stats::independent_t_test(english, target);
  Significance s;
  s.t_stat = r.t_stat;
  s.p_raw = r.p_value;
  s.p_adjusted = stats::bonferroni(r.p_value, family_size);
  s.stars = std::string(stats::stars(s.p_adjusted));
  s.degenerate = r.degenerate;
  return s;
}

// Gap and significance between two prediction sets over the same statements,
// paired by (query_id, statement_index).
inline GapResult compare_predictions(std::span<const CitationPrediction> english,
                                     std::span<const CitationPrediction> target,
                                     const std::string& model_id, int family_size,
                                     stats::TestKind test = stats::TestKind::kPaired) {
  const auto en_cell = citation_accuracy(english, model_id);
  const auto tgt_cell = citation_accuracy(target, model_id);
  std::map<std::pair<std::string, int>, double> en_by_key;
  for (const auto& p : english) {
    en_by_key[{p.query_id, p.statement_index}] = p.correct ? 1.0 : 0.0;
  }
  std::vector<double> a, b;
  for (const auto& p : target) {
    auto it = en_by_key.find({p.query_id, p.statement_index});
    if (it == en_by_key.end()) {
      throw DomainError("statement " + p.query_id + "#" +
                        std::to_string(p.statement_index) +
                        " missing from the baseline predictions");
    }
    a.push_back(it->second);
    b.push_back(p.correct ? 1.0 : 0.0);
  }
  GapResult g;
  g.model_id = model_id;
  g.language = tgt_cell.language;
  g.variant = tgt_cell.variant;
  g.baseline = en_cell.variant;
  g.delta = accuracy_gap(tgt_cell, en_cell);
  const auto s = significance(a, b, family_size, test);
  g.t_stat = s.t_stat;
  g.p_raw = s.p_raw;
  g.p_adjusted = s.p_adjusted;
  g.stars = s.stars;
  g.test = test;
  g.degenerate = s.degenerate;
  return g;
}

struct PositionBin {
  int n = 0;
  int correct = 0;
  std::optional<double> acc;  // empty when n = 0
};

struct PositionBinnedAccuracy {
  std::array<PositionBin, 3> bins;  // First, Middle, Last

  const PositionBin& operator[](PositionLabel l) const { return bins[static_cast<int>(l)]; }
};

inline PositionBinnedAccuracy bin_by_position(std::span<const CitationPrediction> predictions,
                                              std::span<const PositionLabel> labels) {
  if (predictions.size() != labels.size()) {
    throw DomainError("bin_by_position: predictions and labels differ in length");
  }
  PositionBinnedAccuracy out;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& bin = out.bins[static_cast<int>(labels[i])];
    ++bin.n;
    bin.correct += predictions[i].correct ? 1 : 0;
  }
  for (auto& bin : out.bins) {
    if (bin.n > 0) bin.acc = double(bin.correct) / bin.n;
  }
  return out;
}

enum class LayerClass { kCorrect, kIncorrectCitation, kOther };

inline std::string_view to_string(LayerClass c) {
  switch (c) {
    case LayerClass::kCorrect: return "correct";
    case LayerClass::kIncorrectCitation: return "incorrect";
    case LayerClass::kOther: return "other";
  }
  return "unknown";
}

inline LayerClass classify_token(std::string_view token, int citation_id, int k) {
  if (token.size() == 1 && token[0] >= '1' && token[0] <= '9') {
    const int id = token[0] - '0';
    if (id == citation_id) return LayerClass::kCorrect;
    if (id <= k) return LayerClass::kIncorrectCitation;
  }
  return LayerClass::kOther;
}

inline std::vector<LayerClass> classify_layers(std::span<const std::string> trace,
                                               int citation_id, int k) {
  if (trace.empty()) throw DomainError("classify_layers: empty trace");
  std::vector<LayerClass> out;
  out.reserve(trace.size());
  for (const auto& t : trace) out.push_back(classify_token(t, citation_id, k));
  return out;
}

struct LayerClassCounts {
  // Per layer: correct, incorrect citation, other.
  std::vector<std::array<int, 3>> per_layer;
  int n = 0;
};

inline LayerClassCounts aggregate_layer_counts(
    std::span<const std::vector<LayerClass>> classified) {
  LayerClassCounts c;
  if (classified.empty()) return c;
  const std::size_t layers = classified.front().size();
  c.per_layer.assign(layers, {0, 0, 0});
  for (const auto& seq : classified) {
    if (seq.size() != layers) throw DomainError("aggregate_layer_counts: ragged traces");
    for (std::size_t l = 0; l < layers; ++l) ++c.per_layer[l][static_cast<int>(seq[l])];
  }
  c.n = static_cast<int>(classified.size());
  return c;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const AccuracyCell& c) {
  j = {{"record", "accuracy"},   {"model_id", c.model_id},
       {"language", c.language}, {"variant", c.variant},
       {"n", c.n},               {"correct", c.correct},
       {"acc", c.acc},           {"mean_p_correct", c.mean_p_correct},
       {"mean_entropy", c.mean_entropy}};
}

inline void to_json(nlohmann::json& j, const GapResult& g) {
  j = {{"record", "gap"},          {"model_id", g.model_id},
       {"language", g.language},   {"variant", g.variant},
       {"baseline", g.baseline},   {"delta", g.delta},
       {"t_stat", std::isfinite(g.t_stat) ? nlohmann::json(g.t_stat)
                                          : nlohmann::json(g.t_stat > 0 ? "inf" : "-inf")},
       {"p_raw", g.p_raw},         {"p_adjusted", g.p_adjusted},
       {"stars", g.stars},         {"test", stats::to_string(g.test)},
       {"degenerate", g.degenerate}};
}

inline void from_json(const nlohmann::json& j, AccuracyCell& c) {
  c.model_id = j.at("model_id").get<std::string>();
  c.language = j.at("language").get<LanguageTag>();
  c.variant = j.at("variant").get<ContextVariant>();
  c.n = j.at("n").get<int>();
  c.correct = j.at("correct").get<int>();
  c.acc = j.at("acc").get<double>();
  c.mean_p_correct = j.at("mean_p_correct").get<double>();
  c.mean_entropy = j.at("mean_entropy").get<double>();
}

inline double json_real(const nlohmann::json& j) {
  if (j.is_string()) {
    return j.get<std::string>() == "-inf" ? -std::numeric_limits<double>::infinity()
                                          : std::numeric_limits<double>::infinity();
  }
  return j.get<double>();
}

inline void from_json(const nlohmann::json& j, GapResult& g) {
  g.model_id = j.at("model_id").get<std::string>();
  g.language = j.at("language").get<LanguageTag>();
  g.variant = j.at("variant").get<ContextVariant>();
  g.baseline = j.at("baseline").get<ContextVariant>();
  g.delta = j.at("delta").get<double>();
  g.t_stat = json_real(j.at("t_stat"));
  g.p_raw = j.at("p_raw").get<double>();
  g.p_adjusted = j.at("p_adjusted").get<double>();
  g.stars = j.at("stars").get<std::string>();
  g.test = stats::test_kind_from_string(j.at("test").get<std::string>());
  g.degenerate = j.at("degenerate").get<bool>();
}

}  // namespace langpref
