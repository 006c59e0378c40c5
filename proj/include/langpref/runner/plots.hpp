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

// SVG figures drawn from an AnalysisResult. Each figure is written next to a
// CSV holding exactly the plotted values. Nothing here computes statistics.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "langpref/log.hpp"
#include "langpref/runner/analysis.hpp"
#include "langpref/runner/tables.hpp"

namespace langpref::runner {

enum class PlotKind { kAccuracyBars, kPositionHeatmap, kLayerLines, kVariantScatter };

inline std::string_view to_string(PlotKind k) {
  switch (k) {
    case PlotKind::kAccuracyBars: return "accuracy_bars";
    case PlotKind::kPositionHeatmap: return "position_heatmap";
    case PlotKind::kLayerLines: return "layer_lines";
    case PlotKind::kVariantScatter: return "variant_scatter";
  }
  return "unknown";
}

inline PlotKind plot_kind_from_string(std::string_view s) {
  for (auto k : {PlotKind::kAccuracyBars, PlotKind::kPositionHeatmap, PlotKind::kLayerLines,
                 PlotKind::kVariantScatter}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown plot kind '" + std::string(s) + "'");
}

namespace detail {

class Svg {
 public:
  Svg(int w, int h) : w_(w), h_(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
          << "\" fill=\"" << fill << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke) {
    body_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
          << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" points=\"";
    for (const auto& [x, y] : pts) body_ << x << ',' << y << ' ';
    body_ << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << fill
          << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 11,
            const std::string& anchor = "middle") {
    body_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << escape(s)
          << "</text>\n";
  }
  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_
        << "\" viewBox=\"0 0 " << w_ << ' ' << h_ << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  static std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o.push_back(c);
    }
    return o;
  }
  int w_, h_;
  std::ostringstream body_;
};

inline const char* kPalette[] = {"#4c78a8", "#e45756", "#54a24b", "#f58518",
                                 "#b279a2", "#72b7b2", "#eeca3b", "#9d755d"};

inline std::string shade(double v) {
  const int c = 255 - static_cast<int>(std::clamp(v, 0.0, 1.0) * 200.0);
  std::ostringstream s;
  s << "rgb(" << c << ',' << c << ",255)";
  return s.str();
}

struct Figure {
  std::string svg;
  std::string csv;
};

inline std::optional<Figure> accuracy_bars(const AnalysisResult& r) {
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& c : r.cells) {
    if (c.accuracy) bars.emplace_back(row_label(r.experiment, c.variant), c.accuracy->acc);
  }
  if (bars.empty()) return std::nullopt;
  const int w = 80 + 60 * static_cast<int>(bars.size()), h = 300;
  Svg svg(w, h);
  svg.text(w / 2.0, 20, "Citation accuracy: " + r.model_id, 13);
  svg.line(50, 250, w - 20, 250, "black");
  std::string csv = "label,acc\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = 60 + 60.0 * i, bh = 200.0 * bars[i].second;
    svg.rect(x, 250 - bh, 40, bh, kPalette[i % 8]);
    svg.text(x + 20, 265, bars[i].first, 9);
    svg.text(x + 20, 245 - bh, fmt("%.1f", 100 * bars[i].second), 9);
    csv += bars[i].first + "," + real6(bars[i].second) + "\n";
  }
  return Figure{svg.str(), csv};
}

inline std::optional<Figure> position_heatmap(const AnalysisResult& r) {
  std::vector<const CellAnalysis*> cols;
  for (const auto& c : r.cells) {
    if (c.positions) cols.push_back(&c);
  }
  if (cols.empty()) return std::nullopt;
  const int w = 100 + 70 * static_cast<int>(cols.size()), h = 200;
  Svg svg(w, h);
  svg.text(w / 2.0, 20, "Accuracy by cited position: " + r.model_id, 13);
  std::string csv = "position,label,n,acc\n";
  const PositionLabel rows[] = {PositionLabel::kFirst, PositionLabel::kMiddle, PositionLabel::kLast};
  for (int ri = 0; ri < 3; ++ri) {
    svg.text(50, 70 + 40 * ri, std::string(to_string(rows[ri])), 11, "end");
    for (std::size_t ci = 0; ci < cols.size(); ++ci) {
      const auto& bin = (*cols[ci]->positions)[rows[ri]];
      const std::string label = row_label(r.experiment, cols[ci]->variant);
      const double x = 60 + 70.0 * ci, y = 45 + 40.0 * ri;
      svg.rect(x, y, 66, 36, bin.acc ? shade(*bin.acc) : "#dddddd");
      svg.text(x + 33, y + 22, bin.acc ? fmt("%.1f", 100 * *bin.acc) : "n/a", 10);
      if (ri == 0) svg.text(x + 33, 40, label, 9);
      csv += std::string(to_string(rows[ri])) + "," + label + "," + std::to_string(bin.n) + "," +
             (bin.acc ? real6(*bin.acc) : "") + "\n";
    }
  }
  return Figure{svg.str(), csv};
}

inline std::optional<Figure> layer_lines(const AnalysisResult& r) {
  std::vector<const CellAnalysis*> panels;
  for (const auto& c : r.cells) {
    if (c.layers && !c.layers->per_layer.empty()) panels.push_back(&c);
  }
  if (panels.empty()) return std::nullopt;
  const int pw = 260, ph = 180;
  Svg svg(pw * static_cast<int>(std::min<std::size_t>(panels.size(), 3)),
          40 + ph * static_cast<int>((panels.size() + 2) / 3));
  svg.text(20, 20, "Logit-lens classes per layer: " + r.model_id, 13, "start");
  std::string csv = "label,layer,correct,incorrect,other\n";
  const char* colors[] = {"#82641a", "#55d6db", "#aaaaaa"};
  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const auto& counts = *panels[pi]->layers;
    const std::string label = row_label(r.experiment, panels[pi]->variant);
    const double ox = pw * double(pi % 3) + 30, oy = 40 + ph * double(pi / 3);
    const double plot_w = pw - 50, plot_h = ph - 50;
    svg.line(ox, oy + plot_h, ox + plot_w, oy + plot_h, "black");
    svg.line(ox, oy, ox, oy + plot_h, "black");
    svg.text(ox + plot_w / 2, oy + plot_h + 25, label, 10);
    const std::size_t layers = counts.per_layer.size();
    for (int cls = 0; cls < 3; ++cls) {
      std::vector<std::pair<double, double>> pts;
      for (std::size_t l = 0; l < layers; ++l) {
        const double x = ox + (layers > 1 ? plot_w * double(l) / double(layers - 1) : 0.0);
        const double y = oy + plot_h - plot_h * counts.per_layer[l][cls] / double(std::max(counts.n, 1));
        pts.emplace_back(x, y);
      }
      svg.polyline(pts, colors[cls]);
    }
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& row = counts.per_layer[l];
      csv += label + "," + std::to_string(l + 1) + "," + std::to_string(row[0]) + "," +
             std::to_string(row[1]) + "," + std::to_string(row[2]) + "\n";
    }
  }
  return Figure{svg.str(), csv};
}

inline std::optional<Figure> variant_scatter(const AnalysisResult& r) {
  std::vector<std::string> langs;
  std::vector<VariantKind> kinds;
  std::vector<std::tuple<std::string, VariantKind, double>> points;
  for (const auto& c : r.cells) {
    if (!c.accuracy) continue;
    const std::string lang = c.variant.language.code();
    if (std::find(langs.begin(), langs.end(), lang) == langs.end()) langs.push_back(lang);
    if (std::find(kinds.begin(), kinds.end(), c.variant.kind) == kinds.end()) {
      kinds.push_back(c.variant.kind);
    }
    points.emplace_back(lang, c.variant.kind, c.accuracy->acc);
  }
  if (points.empty()) return std::nullopt;
  const int w = 120 + 70 * static_cast<int>(langs.size()), h = 320;
  Svg svg(w, h);
  svg.text(w / 2.0, 20, "Accuracy by context variant: " + r.model_id, 13);
  svg.line(50, 250, w - 20, 250, "black");
  svg.line(50, 50, 50, 250, "black");
  std::string csv = "language,variant,acc\n";
  for (std::size_t li = 0; li < langs.size(); ++li) svg.text(85 + 70.0 * li, 265, langs[li], 10);
  for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
    svg.circle(60, 285 + 0.0, 4, kPalette[ki % 8]);
    svg.text(70 + 150.0 * ki, 289, std::string(to_string(kinds[ki])), 9, "start");
  }
  for (const auto& [lang, kind, acc] : points) {
    const auto li = std::find(langs.begin(), langs.end(), lang) - langs.begin();
    const auto ki = std::find(kinds.begin(), kinds.end(), kind) - kinds.begin();
    svg.circle(85 + 70.0 * li + 8.0 * (ki - 1.5), 250 - 200 * acc, 4, kPalette[ki % 8]);
    csv += lang + "," + std::string(to_string(kind)) + "," + real6(acc) + "\n";
  }
  return Figure{svg.str(), csv};
}

}  // namespace detail

// Writes <kind>.svg and <kind>.csv under `dir`. Returns false, with a
// notice, when the analysis has no data for that kind.
inline bool emit_plot(const AnalysisResult& r, PlotKind kind, const std::filesystem::path& dir) {
  std::optional<detail::Figure> fig;
  switch (kind) {
    case PlotKind::kAccuracyBars: fig = detail::accuracy_bars(r); break;
    case PlotKind::kPositionHeatmap: fig = detail::position_heatmap(r); break;
    case PlotKind::kLayerLines: fig = detail::layer_lines(r); break;
    case PlotKind::kVariantScatter: fig = detail::variant_scatter(r); break;
  }
  if (!fig) {
    log_info("no data for " + std::string(to_string(kind)) + ", plot skipped");
    return false;
  }
  write_file(dir / (std::string(to_string(kind)) + ".svg"), fig->svg);
  write_file(dir / (std::string(to_string(kind)) + ".csv"), fig->csv);
  return true;
}

}  // namespace langpref::runner
