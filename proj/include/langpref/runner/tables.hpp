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

// Table emission: line-delimited metric records plus CSV views. Column order
// is fixed and rows follow cell order, so the files are byte-stable.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "langpref/runner/analysis.hpp"

namespace langpref::runner {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string real6(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt("%.6f", v);
}

// Row label used in the wide summary: the language for the English
// preference designs, "<variant>:<language>" otherwise.
inline std::string row_label(Experiment e, const ContextVariant& v) {
  if (v.kind == VariantKind::kCitedInLanguage &&
      (e == Experiment::kEnglishPreference || e == Experiment::kLayerAnalysis ||
       e == Experiment::kAttribution)) {
    return v.language.code();
  }
  return std::string(to_string(v.kind)) + ":" + v.language.code();
}

inline const GapResult* find_gap(const AnalysisResult& r, const ContextVariant& v) {
  for (const auto& g : r.gaps) {
    if (g.variant == v) return &g;
  }
  return nullptr;
}

inline std::string metrics_records(const AnalysisResult& r) {
  std::ostringstream out;
  out << nlohmann::json{{"record", "metadata"},
                        {"experiment", to_string(r.experiment)},
                        {"model_id", r.model_id},
                        {"test", stats::to_string(r.test)},
                        {"family_size", r.family_size},
                        {"entropy_unit", "nats"}}
             .dump()
      << '\n';
  for (const auto& c : r.cells) {
    if (c.accuracy) out << nlohmann::json(*c.accuracy).dump() << '\n';
  }
  for (const auto& g : r.gaps) out << nlohmann::json(g).dump() << '\n';
  return out.str();
}

inline std::string accuracy_table_csv(const AnalysisResult& r) {
  std::ostringstream out;
  out << "model_id,variant,language,n,acc,mean_p_correct,mean_entropy,delta,t_stat,"
         "p_raw,p_adjusted,stars\n";
  for (const auto& c : r.cells) {
    if (!c.accuracy) continue;
    const auto& a = *c.accuracy;
    out << r.model_id << ',' << to_string(c.variant.kind) << ',' << c.variant.language.code()
        << ',' << a.n << ',' << real6(a.acc) << ',' << real6(a.mean_p_correct) << ','
        << real6(a.mean_entropy);
    if (const auto* g = find_gap(r, c.variant)) {
      out << ',' << real6(g->delta) << ',' << real6(g->t_stat) << ',' << real6(g->p_raw)
          << ',' << real6(g->p_adjusted) << ',' << g->stars;
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
  return out.str();
}

// Wide layout: one row per language (or variant), one column per model.
// Cells read "62.9 (-4.49***)": accuracy in percent, gap in points, stars.
inline std::string summary_csv(std::span<const AnalysisResult> results) {
  std::vector<std::string> rows;
  std::map<std::string, std::map<std::string, std::string>> cells;
  std::ostringstream out;
  out << "language";
  for (const auto& r : results) out << ',' << r.model_id;
  out << '\n';
  for (const auto& r : results) {
    for (const auto& c : r.cells) {
      if (!c.accuracy) continue;
      const std::string label = row_label(r.experiment, c.variant);
      if (std::find(rows.begin(), rows.end(), label) == rows.end()) rows.push_back(label);
      std::string text = fmt("%.1f", 100.0 * c.accuracy->acc);
      if (const auto* g = find_gap(r, c.variant)) {
        text += " (" + fmt("%.2f", 100.0 * g->delta) + (g->stars == "ns" ? "" : g->stars) + ")";
      }
      cells[label][r.model_id] = text;
    }
  }
  for (const auto& row : rows) {
    out << row;
    for (const auto& r : results) {
      auto it = cells[row].find(r.model_id);
      out << ',' << (it == cells[row].end() ? "" : it->second);
    }
    out << '\n';
  }
  return out.str();
}

inline std::string positions_csv(const AnalysisResult& r) {
  std::ostringstream out;
  out << "variant,language,position,n,correct,acc\n";
  for (const auto& c : r.cells) {
    if (!c.positions) continue;
    for (auto p : {PositionLabel::kFirst, PositionLabel::kMiddle, PositionLabel::kLast}) {
      const auto& b = (*c.positions)[p];
      out << to_string(c.variant.kind) << ',' << c.variant.language.code() << ','
          << to_string(p) << ',' << b.n << ',' << b.correct << ','
          << (b.acc ? real6(*b.acc) : "") << '\n';
    }
  }
  return out.str();
}

inline std::string layers_csv(const AnalysisResult& r) {
  std::ostringstream out;
  out << "variant,language,layer,correct,incorrect,other,n\n";
  for (const auto& c : r.cells) {
    if (!c.layers) continue;
    for (std::size_t l = 0; l < c.layers->per_layer.size(); ++l) {
      const auto& row = c.layers->per_layer[l];
      out << to_string(c.variant.kind) << ',' << c.variant.language.code() << ',' << l + 1
          << ',' << row[0] << ',' << row[1] << ',' << row[2] << ',' << c.layers->n << '\n';
    }
  }
  return out.str();
}

inline std::string attribution_csv(const AnalysisResult& r) {
  std::ostringstream out;
  out << "variant,language,n,hit_at_1,hit_at_3,score_at_1,score_at_3\n";
  for (const auto& c : r.cells) {
    if (!c.attribution) continue;
    const auto& a = *c.attribution;
    out << to_string(c.variant.kind) << ',' << c.variant.language.code() << ','
        << c.attribution_n << ',' << real6(a.hit_at_1) << ',' << real6(a.hit_at_3) << ','
        << real6(a.score_at_1) << ',' << real6(a.score_at_3) << '\n';
  }
  return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

// Writes every table for one analysis into `dir`.
inline void emit_tables(const AnalysisResult& r, const std::filesystem::path& dir) {
  write_file(dir / "metrics.jsonl", metrics_records(r));
  write_file(dir / "table.csv", accuracy_table_csv(r));
  write_file(dir / "summary.csv", summary_csv(std::span(&r, 1)));
  write_file(dir / "positions.csv", positions_csv(r));
  write_file(dir / "layers.csv", layers_csv(r));
  write_file(dir / "attribution.csv", attribution_csv(r));
  write_file(dir / "analysis.json", to_json(r).dump(2) + "\n");
}

}  // namespace langpref::runner
