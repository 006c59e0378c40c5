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

// Contrastive evidence contexts: which document is shown in which language,
// the cited document's position, and the rendered probe prompt.

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "langpref/corpus.hpp"
#include "langpref/digest.hpp"
#include "langpref/error.hpp"
#include "langpref/prompts.hpp"

namespace langpref {

enum class VariantKind {
  kCitedInLanguage,   // cited doc in the language, others English
  kAllTarget,         // every doc in the query language
  kAllTargetCitedEn,  // cited doc English, others in the query language
  kAllEn,             // every doc English
  kAllEnCitedTarget,  // cited doc in the query language, others English
  kRelEnIrrEn,
  kRelTgtIrrEn,
  kRelEnIrrTgt,
};

inline std::string_view to_string(VariantKind k) {
  switch (k) {
    case VariantKind::kCitedInLanguage: return "cited_in_language";
    case VariantKind::kAllTarget: return "all_target";
    case VariantKind::kAllTargetCitedEn: return "all_target_cited_en";
    case VariantKind::kAllEn: return "all_en";
    case VariantKind::kAllEnCitedTarget: return "all_en_cited_target";
    case VariantKind::kRelEnIrrEn: return "rel_en_irr_en";
    case VariantKind::kRelTgtIrrEn: return "rel_tgt_irr_en";
    case VariantKind::kRelEnIrrTgt: return "rel_en_irr_tgt";
  }
  return "unknown";
}

inline VariantKind variant_kind_from_string(std::string_view s) {
  for (auto k : {VariantKind::kCitedInLanguage, VariantKind::kAllTarget,
                 VariantKind::kAllTargetCitedEn, VariantKind::kAllEn,
                 VariantKind::kAllEnCitedTarget, VariantKind::kRelEnIrrEn,
                 VariantKind::kRelTgtIrrEn, VariantKind::kRelEnIrrTgt}) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown variant kind '" + std::string(s) + "'");
}

struct ContextVariant {
  VariantKind kind = VariantKind::kCitedInLanguage;
  LanguageTag language;

  bool operator==(const ContextVariant&) const = default;
  auto operator<=>(const ContextVariant&) const = default;
};

enum class PositionLabel { kFirst, kMiddle, kLast };

inline std::string_view to_string(PositionLabel p) {
  switch (p) {
    case PositionLabel::kFirst: return "First";
    case PositionLabel::kMiddle: return "Middle";
    case PositionLabel::kLast: return "Last";
  }
  return "unknown";
}

// First for ordinal 1 (including K = 1), Last for ordinal K >= 2.
inline PositionLabel label_position(int k, int ordinal) {
  if (ordinal < 1 || ordinal > k) {
    throw DomainError("label_position: ordinal " + std::to_string(ordinal) +
                      " outside 1.." + std::to_string(k));
  }
  if (ordinal == 1) return PositionLabel::kFirst;
  if (ordinal == k) return PositionLabel::kLast;
  return PositionLabel::kMiddle;
}

// One rendered document slot. `doc_id` indexes the source document set;
// `display_id` is the ID shown in the prompt (they differ only when a
// context is built from a subset of documents).
struct DocAssignment {
  int doc_id = 0;
  int display_id = 0;
  LanguageTag language;

  bool operator==(const DocAssignment&) const = default;
};

struct ContrastiveContext {
  Query query;
  std::vector<DocAssignment> assignments;
  int cited_id = 0;  // source doc id of the document to cite
  ContextVariant variant;
  PositionLabel position = PositionLabel::kFirst;

  // ID the model must produce.
  int cited_display_id() const {
    for (const auto& a : assignments) {
      if (a.doc_id == cited_id) return a.display_id;
    }
    throw DomainError("cited document not in context");
  }
  int size() const { return static_cast<int>(assignments.size()); }
};

struct PromptBundle {
  std::string context_text;
  std::string prefix;
  std::vector<std::string> citation_token_candidates;

  std::string full() const { return context_text + prefix; }
};

namespace detail {

inline void require_translation(const TranslationStore& store,
                                std::string_view query_id, int doc_id,
                                const LanguageTag& lang) {
  if (lang.is_english()) return;
  if (!store.find(query_id, doc_id, lang)) {
    throw DependencyError("missing translation for doc " +
                          std::to_string(doc_id) + " in " + lang.code() +
                          " (query " + std::string(query_id) + ")");
  }
}

inline ContrastiveContext make_context(const Query& query,
                                       const DocumentSet& docset,
                                       const TranslationStore& store,
                                       int cited_id, ContextVariant variant,
                                       const LanguageTag& cited_lang,
                                       const LanguageTag& others_lang) {
  ContrastiveContext c;
  c.query = query;
  c.cited_id = cited_id;
  c.variant = variant;
  bool found = false;
  for (const auto& d : docset.docs) {
    const LanguageTag& lang = d.doc_id == cited_id ? cited_lang : others_lang;
    require_translation(store, docset.query_id, d.doc_id, lang);
    c.assignments.push_back({d.doc_id, d.doc_id, lang});
    found = found || d.doc_id == cited_id;
  }
  if (!found) {
    throw DomainError("cited document " + std::to_string(cited_id) +
                      " not in query " + docset.query_id);
  }
  c.position = label_position(docset.size(), docset.ordinal(cited_id));
  return c;
}

}  // namespace detail

// Only the cited document is shown in `lang`; the rest stay English.
inline ContrastiveContext build_contrastive_context(
    const Query& query, const DocumentSet& docset,
    const TranslationStore& translations, int cited_id,
    const LanguageTag& lang) {
  return detail::make_context(query, docset, translations, cited_id,
                              {VariantKind::kCitedInLanguage, lang}, lang,
                              LanguageTag::english());
}

// The four query-language variants, in fixed order: all_target,
// all_target_cited_en, all_en, all_en_cited_target. `query` should already
// carry the translated query text.
inline std::vector<ContrastiveContext> build_query_language_variants(
    const Query& query, const DocumentSet& docset,
    const TranslationStore& translations, int cited_id,
    const LanguageTag& qlang) {
  const LanguageTag en = LanguageTag::english();
  return {
      detail::make_context(query, docset, translations, cited_id,
                           {VariantKind::kAllTarget, qlang}, qlang, qlang),
      detail::make_context(query, docset, translations, cited_id,
                           {VariantKind::kAllTargetCitedEn, qlang}, en, qlang),
      detail::make_context(query, docset, translations, cited_id,
                           {VariantKind::kAllEn, qlang}, en, en),
      detail::make_context(query, docset, translations, cited_id,
                           {VariantKind::kAllEnCitedTarget, qlang}, qlang, en),
  };
}

// Three relevance-vs-language variants over one relevant and one irrelevant
// document of `docset`. The pair keeps its dataset order and is shown with
// IDs 1 and 2.
inline std::vector<ContrastiveContext> build_relevance_variants(
    const Query& query, const DocumentSet& docset, int relevant_id,
    int irrelevant_id, const TranslationStore& translations,
    const LanguageTag& lang) {
  const auto& rel = docset.doc(relevant_id);
  const auto& irr = docset.doc(irrelevant_id);
  if (!rel.relevant || irr.relevant) {
    throw DomainError("relevance variants need one relevant and one irrelevant document");
  }
  const bool rel_first = docset.ordinal(relevant_id) < docset.ordinal(irrelevant_id);
  const LanguageTag en = LanguageTag::english();
  auto make = [&](VariantKind kind, const LanguageTag& rel_lang,
                  const LanguageTag& irr_lang) {
    detail::require_translation(translations, docset.query_id, relevant_id, rel_lang);
    detail::require_translation(translations, docset.query_id, irrelevant_id, irr_lang);
    ContrastiveContext c;
    c.query = query;
    c.cited_id = relevant_id;
    c.variant = {kind, lang};
    DocAssignment r{relevant_id, 0, rel_lang};
    DocAssignment i{irrelevant_id, 0, irr_lang};
    if (rel_first) {
      r.display_id = 1, i.display_id = 2;
      c.assignments = {r, i};
    } else {
      i.display_id = 1, r.display_id = 2;
      c.assignments = {i, r};
    }
    c.position = label_position(2, rel_first ? 1 : 2);
    return c;
  };
  return {make(VariantKind::kRelEnIrrEn, en, en),
          make(VariantKind::kRelTgtIrrEn, lang, en),
          make(VariantKind::kRelEnIrrTgt, en, lang)};
}

// Picks one irrelevant document deterministically from the seed and query id.
inline int choose_irrelevant(const DocumentSet& docset, std::uint64_t seed) {
  std::vector<int> ids;
  for (const auto& d : docset.docs) {
    if (!d.relevant) ids.push_back(d.doc_id);
  }
  if (ids.empty()) {
    throw DomainError("query " + docset.query_id + " has no irrelevant document");
  }
  return ids[derive_seed(seed, "irrelevant:" + docset.query_id) % ids.size()];
}

struct RenderedDocument {
  int display_id = 0;
  std::string title;
  std::string content;
};

inline std::vector<RenderedDocument> rendered_documents(
    const ContrastiveContext& ctx, const DocumentSet& docset,
    const TranslationStore& translations) {
  std::vector<RenderedDocument> out;
  for (const auto& a : ctx.assignments) {
    const auto& doc = docset.doc(a.doc_id);
    if (a.language == doc.language) {
      out.push_back({a.display_id, doc.title, doc.content});
    } else {
      const auto& rec = translations.at(docset.query_id, a.doc_id, a.language);
      out.push_back({a.display_id, rec.title_translated, rec.content_translated});
    }
  }
  return out;
}

inline std::vector<std::string> citation_candidates(int k) {
  std::vector<std::string> c;
  for (int i = 1; i <= k; ++i) c.push_back(std::to_string(i));
  return c;
}

inline PromptBundle render_prompt(const ContrastiveContext& ctx,
                                  const Statement& statement,
                                  const DocumentSet& docset,
                                  const TranslationStore& translations) {
  const auto docs = rendered_documents(ctx, docset, translations);
  std::vector<prompts::DocumentView> views;
  for (const auto& d : docs) views.push_back({d.display_id, d.title, d.content});
  PromptBundle b;
  b.context_text = prompts::information_section(views);
  b.prefix = prompts::citation_prefix(ctx.query.text, statement.text);
  b.citation_token_candidates = citation_candidates(ctx.size());
  return b;
}

// ---------------------------------------------------------------------------
// Sentence-level ablation

// Splits text after sentence-final punctuation followed by whitespace, after
// CJK/Indic full stops, and at newlines. Empty pieces are discarded.
inline std::vector<std::string> split_sentences(std::string_view text) {
  static constexpr std::string_view kWideStops[] = {
      "\xE3\x80\x82",  // ideographic full stop
      "\xEF\xBC\x81",  // fullwidth exclamation
      "\xEF\xBC\x9F",  // fullwidth question mark
      "\xE0\xA5\xA4",  // danda
  };
  std::vector<std::string> out;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    std::string s = detail::trim(text.substr(start, end - start));
    if (!s.empty()) out.push_back(std::move(s));
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      flush(i + 1);
      continue;
    }
    if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() &&
        std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      flush(i + 1);
      continue;
    }
    for (auto stop : kWideStops) {
      if (text.substr(i, stop.size()) == stop) {
        flush(i + stop.size());
        i += stop.size() - 1;
        break;
      }
    }
  }
  flush(text.size());
  return out;
}

struct ContextSentence {
  int doc_id = 0;  // source doc id
  std::string text;
};

// Sentences of every document's content in rendering order.
inline std::vector<ContextSentence> context_sentences(
    const ContrastiveContext& ctx, const DocumentSet& docset,
    const TranslationStore& translations) {
  std::vector<ContextSentence> out;
  const auto docs = rendered_documents(ctx, docset, translations);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (auto& s : split_sentences(prompts::normalize_field(docs[i].content))) {
      out.push_back({ctx.assignments[i].doc_id, std::move(s)});
    }
  }
  return out;
}

// Probe prompt with masked-out sentences omitted, ending in "Response: " so
// the statement is the continuation to score.
inline std::string render_masked_prompt(const ContrastiveContext& ctx,
                                        const DocumentSet& docset,
                                        const TranslationStore& translations,
                                        const std::vector<bool>& mask) {
  const auto docs = rendered_documents(ctx, docset, translations);
  std::vector<std::string> contents;
  std::size_t bit = 0;
  for (const auto& d : docs) {
    std::string kept;
    for (const auto& s : split_sentences(prompts::normalize_field(d.content))) {
      if (bit >= mask.size()) throw DomainError("mask shorter than sentence count");
      if (mask[bit++]) {
        if (!kept.empty()) kept += ' ';
        kept += s;
      }
    }
    contents.push_back(std::move(kept));
  }
  if (bit != mask.size()) throw DomainError("mask longer than sentence count");
  std::vector<prompts::DocumentView> views;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    views.push_back({docs[i].display_id, docs[i].title, contents[i]});
  }
  return prompts::information_section(views) +
         prompts::citation_instruction(ctx.query.text);
}

inline void to_json(nlohmann::json& j, const ContextVariant& v) {
  j = {{"kind", to_string(v.kind)}, {"language", v.language}};
}

inline void from_json(const nlohmann::json& j, ContextVariant& v) {
  v.kind = variant_kind_from_string(j.at("kind").get<std::string>());
  v.language = j.at("language").get<LanguageTag>();
}

}  // namespace langpref
