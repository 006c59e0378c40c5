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

// Deterministic fixture backend. It answers from the rendered prompt alone:
// the cited document is the block whose content contains the statement, a
// "(xx) " title prefix marks the block's language, and the citation is
// correct for a statement iff a seeded uniform draw falls below the rate
// configured for that language.

#include <atomic>
#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "langpref/digest.hpp"
#include "langpref/error.hpp"
#include "langpref/probe.hpp"
#include "langpref/prompts.hpp"

namespace langpref::backends {

// Language of a block tagged by the fixture translator, English otherwise.
inline std::string tagged_language(std::string_view title) {
  if (title.size() >= 5 && title[0] == '(' && title[3] == ')' && title[4] == ' ' &&
      LanguageTag::valid(title.substr(1, 2))) {
    return std::string(title.substr(1, 2));
  }
  return "en";
}

inline std::set<std::string> word_set(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.insert(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(std::move(cur));
  return out;
}

class ScriptedRateBackend : public ProbeBackend {
 public:
  ScriptedRateBackend(std::map<std::string, double> rates, std::uint64_t seed,
                      int layers = 8, std::string model_id = "scripted")
      : rates_(std::move(rates)), seed_(seed), layers_(layers),
        model_id_(std::move(model_id)) {
    for (const auto& [lang, r] : rates_) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("rate for " + lang + " outside [0,1]");
    }
  }

  // Parses "en=0.8,fr=0.7" (optionally with "seed=N" and "layers=N").
  static std::unique_ptr<ScriptedRateBackend> from_spec(std::string_view spec,
                                                        std::string model_id) {
    std::map<std::string, double> rates;
    std::uint64_t seed = 0;
    int layers = 8;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
      std::size_t end = spec.find(',', pos);
      if (end == std::string_view::npos) end = spec.size();
      const auto item = spec.substr(pos, end - pos);
      pos = end + 1;
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) throw ConfigError("bad scripted backend item '" + std::string(item) + "'");
      const std::string key(item.substr(0, eq));
      const std::string val(item.substr(eq + 1));
      try {
        if (key == "seed") seed = std::stoull(val);
        else if (key == "layers") layers = std::stoi(val);
        else rates[key] = std::stod(val);
      } catch (const std::exception&) {
        throw ConfigError("bad scripted backend value '" + val + "'");
      }
    }
    return std::make_unique<ScriptedRateBackend>(std::move(rates), seed, layers,
                                                 std::move(model_id));
  }

  std::string model_id() const override { return model_id_; }
  BackendCapabilities capabilities() const override { return {true, true, true}; }
  int layer_count() const override { return layers_; }
  std::size_t max_in_flight() const override { return 4; }

  double rate(const std::string& lang) const {
    if (auto it = rates_.find(lang); it != rates_.end()) return it->second;
    if (auto it = rates_.find("en"); it != rates_.end()) return it->second;
    return 0.5;
  }

  // Token the model "chooses" after the prompt.
  std::string choose(std::string_view prompt) const {
    const auto docs = prompts::parse_documents(prompt);
    const std::string statement = prompts::parse_probe_statement(prompt);
    std::size_t cited = docs.size();
    for (std::size_t i = 0; i < docs.size() && !statement.empty(); ++i) {
      if (docs[i].content.find(statement) != std::string::npos) {
        cited = i;
        break;
      }
    }
    if (cited == docs.size()) return "The";
    const double u = derive_uniform(seed_, statement);
    if (u < rate(tagged_language(docs[cited].title))) return std::to_string(docs[cited].id);
    if (docs.size() < 2) return "The";
    return std::to_string(docs[(cited + 1) % docs.size()].id);
  }

  TokenDistribution next_token(std::string_view prompt,
                               std::span<const std::string> /*candidates*/) override {
    ++next_token_calls;
    const std::string top = choose(prompt);
    const auto docs = prompts::parse_documents(prompt);
    std::string lang = "en";
    const std::string statement = prompts::parse_probe_statement(prompt);
    for (const auto& d : docs) {
      if (!statement.empty() && d.content.find(statement) != std::string::npos) {
        lang = tagged_language(d.title);
        break;
      }
    }
    const double p_top = 0.55 + 0.4 * rate(lang);
    TokenDistribution dist;
    dist.vocab_size = kVocab;
    dist.complete = true;
    const double rest = (1.0 - p_top) / (kVocab - 1);
    for (int id = 0; id < kVocab; ++id) {
      const std::string text = token_text(id);
      dist.entries.push_back({id, text, text == top ? p_top : rest});
    }
    return dist;
  }

  std::vector<std::string> layer_top1(std::string_view prompt) override {
    ++layer_calls;
    const std::string top = choose(prompt);
    std::vector<std::string> out(layers_);
    for (int l = 0; l < layers_; ++l) out[l] = l < layers_ / 2 ? "The" : top;
    return out;
  }

  double sequence_logprob(std::string_view prompt, std::string_view continuation) override {
    ++sequence_calls;
    const auto want = word_set(continuation);
    if (want.empty()) return 0.0;
    double best = 0.0;
    for (const auto& d : prompts::parse_documents(prompt)) {
      const auto have = word_set(d.content);
      int hit = 0;
      for (const auto& w : want) hit += have.count(w) ? 1 : 0;
      best = std::max(best, rate(tagged_language(d.title)) * hit / double(want.size()));
    }
    const double logit = -3.0 + 6.0 * best;
    return -std::log1p(std::exp(-logit));
  }

  int count_tokens(std::string_view text) override {
    if (text.size() == 1 && std::isdigit(static_cast<unsigned char>(text[0]))) return 1;
    return std::max<int>(1, static_cast<int>(word_set(text).size()));
  }

  std::atomic<int> next_token_calls{0};
  std::atomic<int> layer_calls{0};
  std::atomic<int> sequence_calls{0};

 private:
  static constexpr int kVocab = 12;

  static std::string token_text(int id) {
    if (id >= 1 && id <= 9) return std::to_string(id);
    if (id == 10) return "The";
    if (id == 11) return "]";
    return "[";
  }

  std::map<std::string, double> rates_;
  std::uint64_t seed_;
  int layers_;
  std::string model_id_;
};

}  // namespace langpref::backends
