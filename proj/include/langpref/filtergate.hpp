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

// Two-stage statement verification: majority-vote relevance judging followed
// by an entailment gate, with retain-rate accounting.

#include <cctype>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "langpref/corpus.hpp"
#include "langpref/error.hpp"
#include "langpref/log.hpp"
#include "langpref/parallel.hpp"
#include "langpref/prompts.hpp"

namespace langpref {

inline constexpr int kMajorityVotes = 2;

struct JudgeVerdict {
  std::string judge_id;
  int statement_index = 0;
  int selected_doc_id = 0;  // 0 when the reply did not name a valid document
};

enum class FilterReason { kKept, kJudgeMinority, kNliFail, kSkippedMulticite };

inline std::string_view to_string(FilterReason r) {
  switch (r) {
    case FilterReason::kKept: return "kept";
    case FilterReason::kJudgeMinority: return "judge_minority";
    case FilterReason::kNliFail: return "nli_fail";
    case FilterReason::kSkippedMulticite: return "skipped_multicite";
  }
  return "unknown";
}

struct FilterOutcome {
  std::string query_id;
  LanguageTag language;
  int statement_index = 0;  // 0 for skipped multi-citation spans
  int votes = 0;
  bool entailed = false;
  bool retained = false;
  FilterReason reason = FilterReason::kJudgeMinority;
};

struct PoolStats {
  int total = 0;
  int judge_retained = 0;
  int nli_retained = 0;
  double judge_retain_rate = 0.0;
  double nli_retain_rate = 0.0;
  int pool_size = 0;
};

// A verified statement together with the report it came from.
struct PooledStatement {
  std::string query_id;
  LanguageTag language;
  Statement statement;
};

// Judges answer a rendered prompt with free text.
struct Judge {
  std::string id;
  std::function<std::string(std::string_view prompt)> ask;
};

// Binary entailment: does `premise` entail `hypothesis`?
using EntailFn =
    std::function<bool(std::string_view premise, std::string_view hypothesis)>;

// Three-way NLI labels collapse to entailment vs. everything else.
inline bool entailment_from_label(std::string_view label) {
  std::string l;
  for (char c : label) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return l == "entailment" || l == "entails" || l == "entailed";
}

inline int tally_votes(std::span<const JudgeVerdict> verdicts, int cited_id) {
  std::set<std::string> seen;
  int votes = 0;
  for (const auto& v : verdicts) {
    if (!seen.insert(v.judge_id).second) {
      throw ConfigError("duplicate judge id '" + v.judge_id + "'");
    }
    if (v.selected_doc_id == cited_id) ++votes;
  }
  return votes;
}

// First standalone run of digits in the reply, if it names a document 1..K.
inline std::optional<int> parse_judge_reply(std::string_view reply, int k) {
  auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
    if (i > 0 && alnum(reply[i - 1])) {
      while (i < reply.size() && alnum(reply[i])) ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j < reply.size() && std::isalpha(static_cast<unsigned char>(reply[j]))) {
      i = j;
      continue;
    }
    if (j - i != 1) return std::nullopt;
    const int id = reply[i] - '0';
    if (id < 1 || id > k) return std::nullopt;
    return id;
  }
  return std::nullopt;
}

struct JudgeResult {
  int votes = 0;
  bool pass = false;
  std::vector<JudgeVerdict> verdicts;
};

inline std::string judge_prompt(const Query& query, const DocumentSet& docset,
                                const Statement& statement) {
  const auto views = document_views(docset);
  return prompts::relevance_judge(views, query.text, statement.text);
}

// Asks every judge which document best supports the statement. Unparsable
// replies and judges that keep failing count as non-matching votes.
inline JudgeResult judge_filter(const Statement& statement, const Query& query,
                                const DocumentSet& docset,
                                std::span<const Judge> judges,
                                int attempts = 3) {
  const std::string prompt = judge_prompt(query, docset, statement);
  JudgeResult r;
  for (const auto& judge : judges) {
    JudgeVerdict v{judge.id, statement.index, 0};
    try {
      const std::string reply =
          with_retries([&] { return judge.ask(prompt); }, attempts);
      if (auto id = parse_judge_reply(reply, docset.size())) {
        v.selected_doc_id = *id;
      } else {
        log_warning("judge " + judge.id + " gave unparsable reply for query " +
                    query.id + " statement " +
                    std::to_string(statement.index) + ": '" + reply + "'");
      }
    } catch (const TransportError& e) {
      log_warning("judge " + judge.id + " failed for query " + query.id +
                  " statement " + std::to_string(statement.index) +
                  ", counted as non-matching: " + e.what());
    }
    r.verdicts.push_back(std::move(v));
  }
  r.votes = tally_votes(r.verdicts, statement.citation_id);
  r.pass = r.votes >= kMajorityVotes;
  return r;
}

// Premise is the cited document's content, hypothesis the statement.
inline bool nli_filter(const Statement& statement,
                       const EvidenceDocument& cited_doc, const EntailFn& nli,
                       int attempts = 3) {
  if (cited_doc.doc_id != statement.citation_id) {
    throw DomainError("nli_filter: document " + std::to_string(cited_doc.doc_id) +
                      " is not the cited document " +
                      std::to_string(statement.citation_id));
  }
  try {
    return with_retries([&] { return nli(cited_doc.content, statement.text); },
                        attempts);
  } catch (const TransportError& e) {
    log_warning("entailment check failed for statement " +
                std::to_string(statement.index) + ", marked nli_fail: " +
                e.what());
    return false;
  }
}

struct FilterInput {
  const Query* query = nullptr;
  const DocumentSet* docset = nullptr;  // documents in the report's language
  const Report* report = nullptr;
};

struct StatementPool {
  std::vector<PooledStatement> pool;
  PoolStats stats;
  std::vector<FilterOutcome> outcomes;
};

inline PoolStats pool_stats(std::span<const FilterOutcome> outcomes) {
  PoolStats s;
  for (const auto& o : outcomes) {
    if (o.reason == FilterReason::kSkippedMulticite) continue;
    ++s.total;
    if (o.votes >= kMajorityVotes) ++s.judge_retained;
    if (o.retained) ++s.nli_retained;
  }
  s.pool_size = s.nli_retained;
  s.judge_retain_rate = s.total ? double(s.judge_retained) / s.total : 0.0;
  s.nli_retain_rate =
      s.judge_retained ? double(s.nli_retained) / s.judge_retained : 0.0;
  return s;
}

// Runs both stages over every statement of every report. The entailment
// gate only sees judge-passed statements. Pool order is report order, then
// statement index.
inline StatementPool build_statement_pool(std::span<const FilterInput> inputs,
                                          std::span<const Judge> judges,
                                          const EntailFn& nli,
                                          std::size_t workers = 1) {
  struct Task {
    const FilterInput* input;
    const Statement* statement;
  };
  std::vector<Task> tasks;
  for (const auto& in : inputs) {
    if (!in.query || !in.docset || !in.report) {
      throw DomainError("build_statement_pool: incomplete input");
    }
    if (in.report->query_id != in.docset->query_id) {
      throw DomainError("report " + in.report->query_id +
                        " does not match document set " + in.docset->query_id);
    }
    for (const auto& st : in.report->statements) tasks.push_back({&in, &st});
  }

  auto outcomes = parallel_map(tasks.size(), workers, [&](std::size_t i) {
    const auto& t = tasks[i];
    FilterOutcome o;
    o.query_id = t.input->report->query_id;
    o.language = t.input->report->language;
    o.statement_index = t.statement->index;
    const auto jr = judge_filter(*t.statement, *t.input->query,
                                 *t.input->docset, judges);
    o.votes = jr.votes;
    if (!jr.pass) {
      o.reason = FilterReason::kJudgeMinority;
      return o;
    }
    o.entailed = nli_filter(*t.statement,
                            t.input->docset->doc(t.statement->citation_id), nli);
    o.retained = o.entailed;
    o.reason = o.entailed ? FilterReason::kKept : FilterReason::kNliFail;
    return o;
  });

  StatementPool result;
  std::size_t next = 0;
  for (const auto& in : inputs) {
    for (const auto& d : in.report->dropped) {
      if (d.reason != DropReason::kMultiCitation) continue;
      FilterOutcome o;
      o.query_id = in.report->query_id;
      o.language = in.report->language;
      o.reason = FilterReason::kSkippedMulticite;
      result.outcomes.push_back(o);
    }
    for (const auto& st : in.report->statements) {
      const auto& o = outcomes[next++];
      result.outcomes.push_back(o);
      if (o.retained) {
        Statement v = st;
        v.verified = true;
        result.pool.push_back({in.report->query_id, in.report->language, v});
      }
    }
  }
  result.stats = pool_stats(result.outcomes);
  return result;
}

inline void to_json(nlohmann::json& j, const FilterOutcome& o) {
  j = {{"query_id", o.query_id},
       {"language", o.language},
       {"statement_index", o.statement_index},
       {"votes", o.votes},
       {"entailed", o.entailed},
       {"retained", o.retained},
       {"reason", to_string(o.reason)}};
}

inline void from_json(const nlohmann::json& j, FilterOutcome& o) {
  o.query_id = j.at("query_id").get<std::string>();
  o.language = j.at("language").get<LanguageTag>();
  o.statement_index = j.at("statement_index").get<int>();
  o.votes = j.at("votes").get<int>();
  o.entailed = j.at("entailed").get<bool>();
  o.retained = j.at("retained").get<bool>();
  const auto reason = j.at("reason").get<std::string>();
  for (auto r : {FilterReason::kKept, FilterReason::kJudgeMinority, FilterReason::kNliFail,
                 FilterReason::kSkippedMulticite}) {
    if (to_string(r) == reason) {
      o.reason = r;
      return;
    }
  }
  throw ParseError("unknown filter reason '" + reason + "'");
}

inline void to_json(nlohmann::json& j, const PoolStats& s) {
  j = {{"total", s.total},
       {"judge_retained", s.judge_retained},
       {"nli_retained", s.nli_retained},
       {"judge_retain_rate", s.judge_retain_rate},
       {"nli_retain_rate", s.nli_retain_rate},
       {"pool_size", s.pool_size}};
}

inline void to_json(nlohmann::json& j, const PooledStatement& p) {
  j = {{"query_id", p.query_id},
       {"language", p.language},
       {"statement", p.statement}};
}

inline void from_json(const nlohmann::json& j, PooledStatement& p) {
  p.query_id = j.at("query_id").get<std::string>();
  p.language = j.value("language", LanguageTag::english());
  p.statement = j.at("statement").get<Statement>();
}

}  // namespace langpref
