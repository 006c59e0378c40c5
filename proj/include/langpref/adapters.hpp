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

// Adapter factories. Every adapter is either a built-in fixture or an
// external process reached through "cmd:<shell command>", which speaks the
// same line-delimited JSON transport as model backends:
//
//   translate         {op, text, target}        -> {text}
//   qe                {op, source, hypothesis}  -> {score}
//   generate / judge  {op, prompt}              -> {text}
//   nli               {op, premise, hypothesis} -> {entailed} or {label}

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "langpref/backends/pipe.hpp"
#include "langpref/backends/scripted.hpp"
#include "langpref/contextlab.hpp"
#include "langpref/corpus.hpp"
#include "langpref/error.hpp"
#include "langpref/filtergate.hpp"
#include "langpref/prompts.hpp"
#include "langpref/transport.hpp"

namespace langpref::adapters {

namespace detail {

inline bool has_prefix(std::string_view s, std::string_view p) {
  return s.substr(0, p.size()) == p;
}

inline std::shared_ptr<JsonLineClient> client_for(std::string_view spec) {
  return std::make_shared<JsonLineClient>(std::string(spec.substr(4)));
}

}  // namespace detail

// "identity" echoes the input; "tag" prefixes "(xx) ".
inline TranslateFn make_translator(std::string_view spec) {
  if (spec == "identity") {
    return [](std::string_view text, const LanguageTag&) { return std::string(text); };
  }
  if (spec == "tag") {
    return [](std::string_view text, const LanguageTag& target) {
      return "(" + target.code() + ") " + std::string(text);
    };
  }
  if (detail::has_prefix(spec, "cmd:")) {
    auto client = detail::client_for(spec);
    return [client](std::string_view text, const LanguageTag& target) {
      return client->request({{"op", "translate"}, {"text", text}, {"target", target.code()}})
          .at("text")
          .get<std::string>();
    };
  }
  throw ConfigError("unknown translator '" + std::string(spec) + "'");
}

// "constant:<v>" always returns v.
inline QualityFn make_quality_scorer(std::string_view spec) {
  if (detail::has_prefix(spec, "constant:")) {
    const double v = std::stod(std::string(spec.substr(9)));
    return [v](std::string_view, std::string_view) { return v; };
  }
  if (detail::has_prefix(spec, "cmd:")) {
    auto client = detail::client_for(spec);
    return [client](std::string_view src, std::string_view hyp) {
      return client->request({{"op", "qe"}, {"source", src}, {"hypothesis", hyp}})
          .at("score")
          .get<double>();
    };
  }
  throw ConfigError("unknown quality scorer '" + std::string(spec) + "'");
}

// "extractive" answers a report prompt with the first sentence of every
// document, each cited to its own document.
inline GenerateFn make_generator(std::string_view spec) {
  if (spec == "extractive") {
    return [](std::string_view prompt) {
      std::string out;
      for (const auto& d : prompts::parse_documents(prompt)) {
        const auto sentences = split_sentences(d.content);
        if (sentences.empty()) continue;
        if (!out.empty()) out += ' ';
        out += sentences.front() + " [" + std::to_string(d.id) + "]";
      }
      return out;
    };
  }
  if (detail::has_prefix(spec, "cmd:")) {
    auto client = detail::client_for(spec);
    return [client](std::string_view prompt) {
      return client->request({{"op", "generate"}, {"prompt", prompt}})
          .at("text")
          .get<std::string>();
    };
  }
  throw ConfigError("unknown generator '" + std::string(spec) + "'");
}

// Document whose content shares the largest fraction of the sentence's
// words; ties go to the lower ID.
inline std::string overlap_judgement(std::string_view prompt) {
  const auto want = backends::word_set(prompts::parse_cited_sentence(prompt));
  int best_id = 0;
  double best = -1.0;
  for (const auto& d : prompts::parse_documents(prompt)) {
    const auto have = backends::word_set(d.content);
    int hit = 0;
    for (const auto& w : want) hit += have.count(w) ? 1 : 0;
    const double frac = want.empty() ? 0.0 : hit / double(want.size());
    if (frac > best) {
      best = frac;
      best_id = d.id;
    }
  }
  return std::to_string(best_id);
}

// ';'-separated judge specs, each "overlap" or "cmd:...". IDs are
// judge1, judge2, ... in order.
inline std::vector<Judge> make_judges(std::string_view spec) {
  std::vector<Judge> judges;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    std::size_t end = spec.find(';', pos);
    if (end == std::string_view::npos) end = spec.size();
    const auto item = spec.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    Judge j;
    j.id = "judge" + std::to_string(judges.size() + 1);
    if (item == "overlap") {
      j.ask = [](std::string_view prompt) { return overlap_judgement(prompt); };
    } else if (detail::has_prefix(item, "cmd:")) {
      auto client = detail::client_for(item);
      j.ask = [client](std::string_view prompt) {
        return client->request({{"op", "judge"}, {"prompt", prompt}})
            .at("text")
            .get<std::string>();
      };
    } else {
      throw ConfigError("unknown judge '" + std::string(item) + "'");
    }
    judges.push_back(std::move(j));
  }
  if (judges.empty()) throw ConfigError("no judges configured");
  return judges;
}

// "substring": premise contains the hypothesis verbatim. "always" and
// "never" are constant.
inline EntailFn make_nli(std::string_view spec) {
  if (spec == "substring") {
    return [](std::string_view premise, std::string_view hypothesis) {
      return premise.find(langpref::detail::trim(hypothesis)) != std::string_view::npos;
    };
  }
  if (spec == "always") return [](std::string_view, std::string_view) { return true; };
  if (spec == "never") return [](std::string_view, std::string_view) { return false; };
  if (detail::has_prefix(spec, "cmd:")) {
    auto client = detail::client_for(spec);
    return [client](std::string_view premise, std::string_view hypothesis) {
      const auto resp =
          client->request({{"op", "nli"}, {"premise", premise}, {"hypothesis", hypothesis}});
      if (resp.contains("entailed")) return resp["entailed"].get<bool>();
      return entailment_from_label(resp.at("label").get<std::string>());
    };
  }
  throw ConfigError("unknown NLI adapter '" + std::string(spec) + "'");
}

// "scripted:<rates>" or "cmd:<command>".
inline std::unique_ptr<ProbeBackend> make_backend(std::string_view spec,
                                                  const std::string& model_id) {
  if (detail::has_prefix(spec, "scripted:")) {
    return backends::ScriptedRateBackend::from_spec(spec.substr(9), model_id);
  }
  if (detail::has_prefix(spec, "cmd:")) {
    return std::make_unique<backends::PipeBackend>(std::string(spec.substr(4)));
  }
  throw ConfigError("unknown backend '" + std::string(spec) + "'");
}

}  // namespace langpref::adapters
