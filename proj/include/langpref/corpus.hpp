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

// Data model and ingestion: queries, evidence documents, translations,
// reference reports and citation-marker segmentation.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "langpref/error.hpp"
#include "langpref/language.hpp"
#include "langpref/log.hpp"
#include "langpref/prompts.hpp"

namespace langpref {

inline constexpr int kMaxDocuments = 9;

struct Query {
  std::string id;
  std::string text;
  LanguageTag language;
};

struct EvidenceDocument {
  int doc_id = 0;
  std::string title;
  std::string content;
  LanguageTag language;
  bool relevant = true;
};

struct DocumentSet {
  std::string query_id;
  std::vector<EvidenceDocument> docs;

  int size() const { return static_cast<int>(docs.size()); }

  const EvidenceDocument& doc(int doc_id) const {
    for (const auto& d : docs) {
      if (d.doc_id == doc_id) return d;
    }
    throw DomainError("query " + query_id + " has no document " +
                      std::to_string(doc_id));
  }

  // 1-based position of `doc_id` in rendering order.
  int ordinal(int doc_id) const {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (docs[i].doc_id == doc_id) return static_cast<int>(i) + 1;
    }
    throw DomainError("query " + query_id + " has no document " +
                      std::to_string(doc_id));
  }
};

// Checks 1 <= K <= 9 and that the ids are exactly {1..K}.
inline void validate_document_set(const DocumentSet& set) {
  const int k = set.size();
  if (k < 1 || k > kMaxDocuments) {
    throw ConstraintError("query " + set.query_id + ": " + std::to_string(k) +
                          " documents, expected 1.." +
                          std::to_string(kMaxDocuments));
  }
  std::vector<int> ids;
  for (const auto& d : set.docs) {
    if (d.content.empty()) {
      throw ConstraintError("query " + set.query_id + ": document " +
                            std::to_string(d.doc_id) + " has empty content");
    }
    ids.push_back(d.doc_id);
  }
  std::sort(ids.begin(), ids.end());
  for (int i = 0; i < k; ++i) {
    if (ids[i] != i + 1) {
      throw ConstraintError("query " + set.query_id + ": non-contiguous doc ids");
    }
  }
}

struct TranslationRecord {
  std::string query_id;
  int doc_id = 0;  // 0 holds the query text itself
  LanguageTag language;
  std::string title_translated;
  std::string content_translated;
  std::optional<double> qe_score;
};

struct Statement {
  int index = 0;
  std::string text;
  int citation_id = 0;
  bool verified = false;
};

enum class DropReason { kMultiCitation, kUncited, kInvalidId, kEmptyText };

inline std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::kMultiCitation: return "multi_citation";
    case DropReason::kUncited: return "uncited";
    case DropReason::kInvalidId: return "invalid_id";
    case DropReason::kEmptyText: return "empty_text";
  }
  return "unknown";
}

inline DropReason drop_reason_from_string(std::string_view s) {
  for (auto r : {DropReason::kMultiCitation, DropReason::kUncited,
                 DropReason::kInvalidId, DropReason::kEmptyText}) {
    if (to_string(r) == s) return r;
  }
  throw ParseError("unknown drop reason '" + std::string(s) + "'");
}

// A span the segmenter did not turn into a statement.
struct DroppedSpan {
  int ordinal = 0;      // position among all spans of the report, 0-based
  std::string text;     // trimmed text preceding the markers
  std::string markers;  // verbatim marker run, e.g. "[1][3]"; empty if uncited
  DropReason reason = DropReason::kUncited;
};

struct Segmentation {
  std::vector<Statement> statements;
  std::vector<DroppedSpan> dropped;
  std::vector<int> statement_ordinals;  // span ordinal of each statement
};

struct Report {
  std::string query_id;
  LanguageTag language;
  std::string raw_text;
  std::vector<Statement> statements;
  std::vector<DroppedSpan> dropped;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Matches "[d]" with a single ASCII digit at `pos`.
inline bool marker_at(std::string_view s, std::size_t pos) {
  return pos + 2 < s.size() && s[pos] == '[' &&
         std::isdigit(static_cast<unsigned char>(s[pos + 1])) &&
         s[pos + 2] == ']';
}

}  // namespace detail

// Splits a report at "[d]" citation markers. Text between consecutive marker
// runs is one span; a run of one marker yields a statement, longer runs and
// trailing unmarked text are dropped with a reason.
inline Segmentation segment_report(std::string_view raw, int k) {
  if (k < 1 || k > kMaxDocuments) {
    throw DomainError("segment_report: K must be in 1..9, got " +
                      std::to_string(k));
  }
  Segmentation out;
  int ordinal = 0;
  std::size_t span_begin = 0;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    if (!detail::marker_at(raw, pos)) {
      ++pos;
      continue;
    }
    const std::size_t span_end = pos;
    std::vector<int> digits;
    std::size_t run_end = pos;
    while (true) {
      std::size_t p = run_end;
      while (p < raw.size() && (raw[p] == ' ' || raw[p] == '\t')) ++p;
      if (!detail::marker_at(raw, p)) break;
      digits.push_back(raw[p + 1] - '0');
      run_end = p + 3;
    }
    const std::string text =
        detail::trim(raw.substr(span_begin, span_end - span_begin));
    const std::string markers = detail::trim(raw.substr(pos, run_end - pos));
    if (digits.size() > 1) {
      out.dropped.push_back({ordinal, text, markers, DropReason::kMultiCitation});
    } else if (digits[0] < 1 || digits[0] > k) {
      out.dropped.push_back({ordinal, text, markers, DropReason::kInvalidId});
    } else if (text.empty()) {
      out.dropped.push_back({ordinal, text, markers, DropReason::kEmptyText});
    } else {
      Statement st;
      st.index = static_cast<int>(out.statements.size()) + 1;
      st.text = text;
      st.citation_id = digits[0];
      out.statements.push_back(std::move(st));
      out.statement_ordinals.push_back(ordinal);
    }
    ++ordinal;
    span_begin = pos = run_end;
  }
  std::string tail = detail::trim(raw.substr(span_begin));
  if (!tail.empty()) {
    out.dropped.push_back({ordinal, std::move(tail), "", DropReason::kUncited});
  }
  return out;
}

// Inverse of segment_report up to whitespace.
inline std::string reconstruct_report(const Segmentation& seg) {
  std::map<int, std::string> spans;
  for (std::size_t i = 0; i < seg.statements.size(); ++i) {
    spans[seg.statement_ordinals[i]] =
        seg.statements[i].text + " [" +
        std::to_string(seg.statements[i].citation_id) + "]";
  }
  for (const auto& d : seg.dropped) {
    spans[d.ordinal] = d.markers.empty() ? d.text : d.text + " " + d.markers;
  }
  std::string out;
  for (const auto& [_, s] : spans) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON mapping

inline void to_json(nlohmann::json& j, const EvidenceDocument& d) {
  j = {{"doc_id", d.doc_id},     {"title", d.title},
       {"content", d.content},   {"language", d.language},
       {"relevant", d.relevant}};
}

inline void to_json(nlohmann::json& j, const TranslationRecord& r) {
  j = {{"query_id", r.query_id},
       {"doc_id", r.doc_id},
       {"language", r.language},
       {"title_translated", r.title_translated},
       {"content_translated", r.content_translated}};
  j["qe_score"] = r.qe_score ? nlohmann::json(*r.qe_score) : nlohmann::json();
}

inline void from_json(const nlohmann::json& j, TranslationRecord& r) {
  r.query_id = j.at("query_id").get<std::string>();
  r.doc_id = j.at("doc_id").get<int>();
  r.language = j.at("language").get<LanguageTag>();
  r.title_translated = j.value("title_translated", std::string());
  r.content_translated = j.at("content_translated").get<std::string>();
  if (j.contains("qe_score") && !j["qe_score"].is_null()) {
    r.qe_score = j["qe_score"].get<double>();
  } else {
    r.qe_score.reset();
  }
}

inline void to_json(nlohmann::json& j, const Statement& s) {
  j = {{"index", s.index},
       {"text", s.text},
       {"citation_id", s.citation_id},
       {"verified", s.verified}};
}

inline void from_json(const nlohmann::json& j, Statement& s) {
  s.index = j.at("index").get<int>();
  s.text = j.at("text").get<std::string>();
  s.citation_id = j.at("citation_id").get<int>();
  s.verified = j.value("verified", false);
}

inline void to_json(nlohmann::json& j, const DroppedSpan& d) {
  j = {{"ordinal", d.ordinal},
       {"text", d.text},
       {"markers", d.markers},
       {"reason", to_string(d.reason)}};
}

inline void from_json(const nlohmann::json& j, DroppedSpan& d) {
  d.ordinal = j.at("ordinal").get<int>();
  d.text = j.at("text").get<std::string>();
  d.markers = j.at("markers").get<std::string>();
  d.reason = drop_reason_from_string(j.at("reason").get<std::string>());
}

inline void to_json(nlohmann::json& j, const Report& r) {
  j = {{"query_id", r.query_id},     {"language", r.language},
       {"raw_text", r.raw_text},     {"statements", r.statements},
       {"dropped", r.dropped}};
}

inline void from_json(const nlohmann::json& j, Report& r) {
  r.query_id = j.at("query_id").get<std::string>();
  r.language = j.value("language", LanguageTag::english());
  r.raw_text = j.at("raw_text").get<std::string>();
  r.statements = j.at("statements").get<std::vector<Statement>>();
  r.dropped = j.value("dropped", std::vector<DroppedSpan>{});
}

// ---------------------------------------------------------------------------
// Dataset loading

enum class DatasetFormat { kEli5WebGpt, kMiracl };

inline DatasetFormat dataset_format_from_string(std::string_view s) {
  if (s == "eli5_webgpt") return DatasetFormat::kEli5WebGpt;
  if (s == "miracl") return DatasetFormat::kMiracl;
  throw ConfigError("unknown dataset format '" + std::string(s) + "'");
}

struct DatasetEntry {
  Query query;
  DocumentSet docset;
};

// Parses one dataset line. `line_no` is used in error messages only.
inline DatasetEntry parse_dataset_record(std::string_view line, long line_no,
                                         DatasetFormat format) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what(), line_no);
  }
  DatasetEntry e;
  try {
    e.query.id = j.at("query_id").get<std::string>();
    e.query.text = j.at("query_text").get<std::string>();
    e.query.language = LanguageTag(j.value("query_language", std::string("en")));
    e.docset.query_id = e.query.id;
    for (const auto& d : j.at("documents")) {
      EvidenceDocument doc;
      doc.doc_id = d.at("doc_id").get<int>();
      doc.title = d.value("title", std::string());
      doc.content = d.at("content").get<std::string>();
      doc.language = LanguageTag(d.value("language", std::string("en")));
      doc.relevant = d.value("relevant", true);
      e.docset.docs.push_back(std::move(doc));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed record: ") + ex.what(), line_no);
  } catch (const ConstraintError& ex) {
    throw ParseError(ex.what(), line_no);
  }
  if (e.query.text.empty()) {
    throw ConstraintError("query " + e.query.id + ": empty query text");
  }
  validate_document_set(e.docset);
  const auto relevant = std::count_if(e.docset.docs.begin(), e.docset.docs.end(),
                                      [](const auto& d) { return d.relevant; });
  if (format == DatasetFormat::kEli5WebGpt &&
      relevant != static_cast<long>(e.docset.docs.size())) {
    throw ConstraintError("query " + e.query.id +
                          ": eli5_webgpt records must have only relevant documents");
  }
  if (format == DatasetFormat::kMiracl && relevant != 1) {
    throw ConstraintError("query " + e.query.id +
                          ": miracl records need exactly one relevant document");
  }
  return e;
}

inline std::vector<DatasetEntry> load_dataset(std::istream& in,
                                              DatasetFormat format) {
  std::vector<DatasetEntry> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    out.push_back(parse_dataset_record(line, line_no, format));
  }
  return out;
}

inline std::vector<DatasetEntry> load_dataset(const std::filesystem::path& path,
                                              DatasetFormat format) {
  std::ifstream in(path);
  if (!in) throw DependencyError("cannot open dataset " + path.string());
  return load_dataset(in, format);
}

inline nlohmann::json dataset_record(const DatasetEntry& e) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& d : e.docset.docs) {
    docs.push_back({{"doc_id", d.doc_id},
                    {"title", d.title},
                    {"content", d.content},
                    {"relevant", d.relevant}});
  }
  return {{"query_id", e.query.id},
          {"query_text", e.query.text},
          {"query_language", e.query.language},
          {"documents", docs}};
}

// ---------------------------------------------------------------------------
// Translation

// Translates one text into `target`. May throw TransportError.
using TranslateFn =
    std::function<std::string(std::string_view text, const LanguageTag& target)>;
// Quality estimate of `hypothesis` as a translation of `source`, in [0,1].
using QualityFn =
    std::function<double(std::string_view source, std::string_view hypothesis)>;

// Write-once store of translation records keyed by (query, doc, language).
// Concurrent readers; writers are serialized.
class TranslationStore {
 public:
  using Key = std::tuple<std::string, int, std::string>;

  std::optional<TranslationRecord> find(std::string_view query_id, int doc_id,
                                        const LanguageTag& lang) const {
    std::shared_lock lock(mu_);
    auto it = records_.find(Key(std::string(query_id), doc_id, lang.code()));
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  const TranslationRecord& at(std::string_view query_id, int doc_id,
                              const LanguageTag& lang) const {
    std::shared_lock lock(mu_);
    auto it = records_.find(Key(std::string(query_id), doc_id, lang.code()));
    if (it == records_.end()) {
      throw DependencyError("missing translation for query " +
                            std::string(query_id) + " doc " +
                            std::to_string(doc_id) + " language " + lang.code());
    }
    return it->second;
  }

  // Inserts a record unless one exists; returns the stored record.
  TranslationRecord insert(TranslationRecord rec) {
    std::unique_lock lock(mu_);
    Key key(rec.query_id, rec.doc_id, rec.language.code());
    auto [it, inserted] = records_.emplace(std::move(key), std::move(rec));
    return it->second;
  }

  // Attaches a quality score. A score, once set, is never replaced.
  void set_qe_score(std::string_view query_id, int doc_id,
                    const LanguageTag& lang, double score) {
    std::unique_lock lock(mu_);
    auto it = records_.find(Key(std::string(query_id), doc_id, lang.code()));
    if (it == records_.end()) {
      throw DependencyError("no translation to score for query " +
                            std::string(query_id));
    }
    if (!it->second.qe_score) it->second.qe_score = score;
  }

  void purge() {
    std::unique_lock lock(mu_);
    records_.clear();
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return records_.size();
  }

  std::vector<TranslationRecord> records() const {
    std::shared_lock lock(mu_);
    std::vector<TranslationRecord> out;
    out.reserve(records_.size());
    for (const auto& [_, r] : records_) out.push_back(r);
    return out;
  }

  void load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DependencyError("cannot open translations " + path.string());
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      try {
        insert(nlohmann::json::parse(line).get<TranslationRecord>());
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed translation: ") + e.what(),
                         line_no);
      }
    }
  }

  // Writes records in key order so the file is byte-stable.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : records()) out << nlohmann::json(r).dump() << '\n';
  }

 private:
  mutable std::shared_mutex mu_;
  std::map<Key, TranslationRecord> records_;
};

namespace detail {
inline std::string translate_field(const TranslateFn& translator,
                                   std::string_view text,
                                   const LanguageTag& target, int doc_id,
                                   int attempts) {
  if (text.empty()) return {};
  std::string out;
  try {
    out = with_retries([&] { return translator(text, target); }, attempts);
  } catch (const TransportError& e) {
    throw TransportError(e.what(), doc_id);
  }
  if (trim(out).empty()) {
    throw InvalidOutputError("empty translation for doc " +
                             std::to_string(doc_id) + " into " + target.code());
  }
  return out;
}
}  // namespace detail

// Translates title and content of every document independently. Records
// already present in `store` are reused without calling the translator.
inline std::vector<TranslationRecord> translate_document_set(
    const DocumentSet& docset, const LanguageTag& target,
    const TranslateFn& translator, TranslationStore& store, int attempts = 3) {
  std::vector<TranslationRecord> out;
  out.reserve(docset.docs.size());
  for (const auto& doc : docset.docs) {
    if (doc.language == target) {
      throw DomainError("document " + std::to_string(doc.doc_id) +
                        " is already in " + target.code());
    }
    if (auto hit = store.find(docset.query_id, doc.doc_id, target)) {
      out.push_back(std::move(*hit));
      continue;
    }
    TranslationRecord rec;
    rec.query_id = docset.query_id;
    rec.doc_id = doc.doc_id;
    rec.language = target;
    rec.title_translated =
        detail::translate_field(translator, doc.title, target, doc.doc_id, attempts);
    rec.content_translated = detail::translate_field(translator, doc.content,
                                                     target, doc.doc_id, attempts);
    out.push_back(store.insert(std::move(rec)));
  }
  return out;
}

// Query translation is stored as doc_id 0 with an empty title.
inline TranslationRecord translate_query(const Query& query,
                                         const LanguageTag& target,
                                         const TranslateFn& translator,
                                         TranslationStore& store,
                                         int attempts = 3) {
  if (auto hit = store.find(query.id, 0, target)) return *hit;
  TranslationRecord rec;
  rec.query_id = query.id;
  rec.doc_id = 0;
  rec.language = target;
  rec.content_translated =
      detail::translate_field(translator, query.text, target, 0, attempts);
  return store.insert(std::move(rec));
}

inline double score_translation_quality(std::string_view source,
                                        std::string_view hypothesis,
                                        const QualityFn& scorer,
                                        int attempts = 3) {
  if (source.empty() || hypothesis.empty()) {
    throw DomainError("quality scoring needs non-empty source and hypothesis");
  }
  const double score =
      with_retries([&] { return scorer(source, hypothesis); }, attempts);
  if (!(score >= 0.0 && score <= 1.0)) {
    throw RangeError("quality score " + std::to_string(score) +
                     " outside [0,1]");
  }
  return score;
}

// Scores a stored translation's content and records the score on it.
inline double score_record(TranslationStore& store, const EvidenceDocument& src,
                           const TranslationRecord& rec, const QualityFn& scorer) {
  const double s =
      score_translation_quality(src.content, rec.content_translated, scorer);
  store.set_qe_score(rec.query_id, rec.doc_id, rec.language, s);
  return s;
}

// Returns a copy of `docset` with every document replaced by its `lang`
// translation. English returns the input unchanged.
inline DocumentSet localized_document_set(const DocumentSet& docset,
                                          const TranslationStore& store,
                                          const LanguageTag& lang) {
  DocumentSet out = docset;
  for (auto& d : out.docs) {
    if (d.language == lang) continue;
    const auto& rec = store.at(docset.query_id, d.doc_id, lang);
    d.title = rec.title_translated;
    d.content = rec.content_translated;
    d.language = lang;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reference reports

using GenerateFn = std::function<std::string(std::string_view prompt)>;

inline std::vector<prompts::DocumentView> document_views(const DocumentSet& set) {
  std::vector<prompts::DocumentView> v;
  v.reserve(set.docs.size());
  for (const auto& d : set.docs) v.push_back({d.doc_id, d.title, d.content});
  return v;
}

inline std::string report_prompt(const Query& query, const DocumentSet& docset,
                                 int total_words = prompts::kDefaultTotalWords) {
  const auto views = document_views(docset);
  return prompts::report_generation(views, query.text, total_words,
                                    query.language.name());
}

// Prompts the generator with the report template and segments its answer.
// The report language follows the query language.
inline Report generate_reference_report(
    const Query& query, const DocumentSet& docset, const GenerateFn& generator,
    int total_words = prompts::kDefaultTotalWords, int attempts = 3) {
  const std::string prompt = report_prompt(query, docset, total_words);
  Report r;
  r.query_id = query.id;
  r.language = query.language;
  r.raw_text = with_retries([&] { return generator(prompt); }, attempts);
  auto seg = segment_report(r.raw_text, docset.size());
  r.statements = std::move(seg.statements);
  r.dropped = std::move(seg.dropped);
  if (r.statements.empty()) {
    log_warning("report for query " + query.id + " has no usable statements");
  }
  return r;
}

}  // namespace langpref
