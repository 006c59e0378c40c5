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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "langpref/corpus.hpp"
#include "langpref/digest.hpp"
#include "langpref/error.hpp"
#include "langpref/language.hpp"
#include "langpref/stats.hpp"

namespace langpref::runner {

enum class Experiment {
  kEnglishPreference,
  kQueryLanguage,
  kRelevanceVsLanguage,
  kLayerAnalysis,
  kAttribution,
};

inline std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::kEnglishPreference: return "english_preference";
    case Experiment::kQueryLanguage: return "query_language";
    case Experiment::kRelevanceVsLanguage: return "relevance_vs_language";
    case Experiment::kLayerAnalysis: return "layer_analysis";
    case Experiment::kAttribution: return "attribution";
  }
  return "unknown";
}

inline Experiment experiment_from_string(std::string_view s) {
  for (auto e : {Experiment::kEnglishPreference, Experiment::kQueryLanguage,
                 Experiment::kRelevanceVsLanguage, Experiment::kLayerAnalysis,
                 Experiment::kAttribution}) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

struct ExperimentConfig {
  Experiment experiment = Experiment::kEnglishPreference;
  std::string model_id = "model";
  std::vector<LanguageTag> languages;  // target languages; English is implicit
  std::filesystem::path dataset;
  std::string dataset_format;  // empty: miracl for relevance_vs_language, else eli5_webgpt
  std::filesystem::path workdir = "runs";
  std::filesystem::path cache_dir;  // empty: <workdir>/cache
  std::uint64_t seed = 0;
  int family_size = 0;  // 0: number of gap rows the design produces
  int mask_count = 64;
  double lambda = 0.01;
  stats::TestKind test = stats::TestKind::kPaired;
  int total_words = prompts::kDefaultTotalWords;
  int workers = 0;  // 0: the backend's in-flight bound

  // Adapter specs, see adapters.hpp.
  std::string backend;
  std::string translator;
  std::string qe;
  std::string generator;
  std::string judges;
  std::string nli;

  DatasetFormat format() const {
    if (!dataset_format.empty()) return dataset_format_from_string(dataset_format);
    return experiment == Experiment::kRelevanceVsLanguage ? DatasetFormat::kMiracl
                                                          : DatasetFormat::kEli5WebGpt;
  }

  std::filesystem::path data_dir() const { return workdir / "data"; }
  std::filesystem::path run_dir() const {
    return workdir / std::string(to_string(experiment)) / model_id;
  }
  std::filesystem::path cache_path() const {
    return cache_dir.empty() ? workdir / "cache" : cache_dir;
  }

  // Target languages with English removed and duplicates dropped.
  std::vector<LanguageTag> targets() const {
    std::vector<LanguageTag> out;
    for (const auto& l : languages) {
      if (l.is_english()) continue;
      if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    }
    return out;
  }

  void validate() const {
    if (targets().empty()) throw ConfigError("at least one non-English language is required");
    if (mask_count < 1) throw ConfigError("mask_count must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (family_size < 0) throw ConfigError("family_size must be >= 0");
  }
};

inline std::vector<LanguageTag> parse_languages(std::string_view csv) {
  std::vector<LanguageTag> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    std::size_t end = csv.find(',', pos);
    if (end == std::string_view::npos) end = csv.size();
    const std::string item = langpref::detail::trim(csv.substr(pos, end - pos));
    pos = end + 1;
    if (!item.empty()) out.emplace_back(item);
  }
  return out;
}

// Applies one key/value pair. Keys mirror the ExperimentConfig fields.
inline void set_config_value(ExperimentConfig& c, const std::string& key,
                             const std::string& value) {
  try {
    if (key == "experiment") c.experiment = experiment_from_string(value);
    else if (key == "model" || key == "model_id") c.model_id = value;
    else if (key == "languages") c.languages = parse_languages(value);
    else if (key == "dataset") c.dataset = value;
    else if (key == "dataset_format") c.dataset_format = value;
    else if (key == "workdir") c.workdir = value;
    else if (key == "cache_dir") c.cache_dir = value;
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "family_size") c.family_size = std::stoi(value);
    else if (key == "mask_count") c.mask_count = std::stoi(value);
    else if (key == "lambda") c.lambda = std::stod(value);
    else if (key == "test") c.test = stats::test_kind_from_string(value);
    else if (key == "total_words") c.total_words = std::stoi(value);
    else if (key == "workers") c.workers = std::stoi(value);
    else if (key == "backend") c.backend = value;
    else if (key == "translator") c.translator = value;
    else if (key == "qe") c.qe = value;
    else if (key == "generator") c.generator = value;
    else if (key == "judges") c.judges = value;
    else if (key == "nli") c.nli = value;
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for " + key + ": '" + value + "'");
  }
}

// Flat "key = value" lines; '#' starts a comment line.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {}) {
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = langpref::detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    set_config_value(base, langpref::detail::trim(t.substr(0, eq)),
                     langpref::detail::trim(t.substr(eq + 1)));
  }
  return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path,
                                    ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "missing";
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

// Covers every field that can change probe or analysis outputs. Paths to
// the work and cache directories are excluded.
inline std::string config_digest(const ExperimentConfig& c) {
  DigestBuilder b;
  b.add(to_string(c.experiment)).add(c.model_id);
  for (const auto& l : c.targets()) b.add(l.code());
  b.add(file_digest(c.dataset)).add(static_cast<std::int64_t>(c.format()));
  b.add(static_cast<std::int64_t>(c.seed)).add(c.family_size).add(c.mask_count);
  std::ostringstream lam;
  lam.precision(17);
  lam << c.lambda;
  b.add(lam.str()).add(stats::to_string(c.test)).add(c.backend);
  return b.hex();
}

}  // namespace langpref::runner
