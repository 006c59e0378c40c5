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


#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "filter_fixture.hpp"
#include "langpref/filtergate.hpp"
#include "langpref/log.hpp"

namespace langpref {
namespace {

class QuietLog : public ::testing::Test {
 protected:
  void SetUp() override {
    old_ = set_log_sink([this](LogLevel, std::string_view line) { lines.emplace_back(line); });
  }
  void TearDown() override { set_log_sink(old_); }
  std::vector<std::string> lines;

 private:
  LogSink old_;
};

std::vector<JudgeVerdict> Picks(std::vector<int> ids) {
  std::vector<JudgeVerdict> v;
  for (std::size_t i = 0; i < ids.size(); ++i) v.push_back({"j" + std::to_string(i), 1, ids[i]});
  return v;
}

Judge Fixed(std::string id, std::string reply) {
  return {std::move(id), [reply](std::string_view) { return reply; }};
}

TEST(TallyTest, CountsAgreementWithCitation) {
  EXPECT_EQ(tally_votes(Picks({2, 2, 2}), 2), 3);
  EXPECT_EQ(tally_votes(Picks({2, 2, 1}), 2), 2);
  EXPECT_EQ(tally_votes(Picks({1, 3, 1}), 2), 0);
  auto dup = Picks({1, 1});
  dup[1].judge_id = dup[0].judge_id;
  EXPECT_THROW(tally_votes(dup, 1), ConfigError);
}

TEST(JudgeReplyTest, FirstStandaloneDigit) {
  EXPECT_EQ(parse_judge_reply("2", 3), 2);
  EXPECT_EQ(parse_judge_reply("Document ID: 3.", 3), 3);
  EXPECT_EQ(parse_judge_reply("[1]", 3), 1);
  EXPECT_EQ(parse_judge_reply("7", 3), std::nullopt);
  EXPECT_EQ(parse_judge_reply("12", 9), std::nullopt);
  EXPECT_EQ(parse_judge_reply("none", 3), std::nullopt);
  EXPECT_EQ(parse_judge_reply("doc2 or 3", 3), 3);
  EXPECT_EQ(parse_judge_reply("0", 3), std::nullopt);
}

class JudgeFilterTest : public QuietLog {
 protected:
  DocumentSet set = testing::make_docset("q", {"a", "b", "c"});
  Query query{"q", "question", LanguageTag::english()};
  Statement st{1, "claim", 2, false};
};

TEST_F(JudgeFilterTest, TwoOfThreePass) {
  const std::vector<Judge> judges = {Fixed("a", "2"), Fixed("b", "2"), Fixed("c", "1")};
  const auto r = judge_filter(st, query, set, judges);
  EXPECT_EQ(r.votes, 2);
  EXPECT_TRUE(r.pass);
}

TEST_F(JudgeFilterTest, OneOfThreeFails) {
  const std::vector<Judge> judges = {Fixed("a", "2"), Fixed("b", "3"), Fixed("c", "1")};
  const auto r = judge_filter(st, query, set, judges);
  EXPECT_EQ(r.votes, 1);
  EXPECT_FALSE(r.pass);
}

TEST_F(JudgeFilterTest, OutOfRangeReplyIsNonMatchingAndLogged) {
  const std::vector<Judge> judges = {Fixed("a", "7"), Fixed("b", "2"), Fixed("c", "2")};
  const auto r = judge_filter(st, query, set, judges);
  EXPECT_EQ(r.votes, 2);
  EXPECT_EQ(r.verdicts[0].selected_doc_id, 0);
  EXPECT_EQ(lines.size(), 1u);
}

TEST_F(JudgeFilterTest, FailingJudgeCountsAsNonMatching) {
  int calls = 0;
  Judge down{"down", [&](std::string_view) -> std::string {
               ++calls;
               throw TransportError("unreachable");
             }};
  const std::vector<Judge> judges = {down, Fixed("b", "2"), Fixed("c", "2")};
  const auto r = judge_filter(st, query, set, judges, 3);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(r.votes, 2);
  EXPECT_TRUE(r.pass);
  EXPECT_FALSE(lines.empty());
}

TEST_F(JudgeFilterTest, JudgesSeeTheRelevancePrompt) {
  std::string seen;
  const std::vector<Judge> judges = {{"a", [&](std::string_view p) {
                                        seen = p;
                                        return std::string("2");
                                      }}};
  judge_filter(st, query, set, judges);
  EXPECT_EQ(seen, prompts::relevance_judge(document_views(set), "question", "claim"));
}

TEST(NliTest, SubstringAndConstantAdapters) {
  EvidenceDocument doc{1, "t", "The sky is blue. It is vast.", LanguageTag::english(), true};
  const Statement st{1, "The sky is blue.", 1, false};
  EntailFn substring = [](std::string_view p, std::string_view h) {
    return p.find(h) != std::string_view::npos;
  };
  EntailFn never = [](std::string_view, std::string_view) { return false; };
  EXPECT_TRUE(nli_filter(st, doc, substring));
  EXPECT_FALSE(nli_filter(st, doc, never));
  doc.doc_id = 2;
  EXPECT_THROW(nli_filter(st, doc, substring), DomainError);
}

TEST(NliTest, LabelsCollapseToBinary) {
  EXPECT_TRUE(entailment_from_label("ENTAILMENT"));
  EXPECT_FALSE(entailment_from_label("neutral"));
  EXPECT_FALSE(entailment_from_label("contradiction"));
}

TEST_F(JudgeFilterTest, PersistentNliFailureIsNotRetained) {
  EvidenceDocument doc{2, "t", "b", LanguageTag::english(), true};
  EntailFn down = [](std::string_view, std::string_view) -> bool { throw TransportError("x"); };
  EXPECT_FALSE(nli_filter(st, doc, down));
  EXPECT_FALSE(lines.empty());
}

class PoolTest : public QuietLog {};

TEST_F(PoolTest, TwentyStatementFixtureMatchesHandCount) {
  testing::FilterFixture fx;
  const auto inputs = fx.inputs();
  const auto pool = build_statement_pool(inputs, fx.judges, fx.nli, 4);
  EXPECT_EQ(pool.stats.total, 20);
  EXPECT_EQ(pool.stats.judge_retained, testing::kExpectedJudgePassed);
  EXPECT_EQ(pool.stats.nli_retained, 11);
  EXPECT_EQ(pool.stats.pool_size, 11);
  EXPECT_DOUBLE_EQ(pool.stats.judge_retain_rate, 14.0 / 20.0);
  EXPECT_DOUBLE_EQ(pool.stats.nli_retain_rate, 11.0 / 14.0);
  EXPECT_EQ(fx.nli_calls->load(), testing::kExpectedJudgePassed);
  ASSERT_EQ(pool.pool.size(), testing::kExpectedRetained.size());
  for (std::size_t i = 0; i < pool.pool.size(); ++i) {
    EXPECT_EQ(fx.plan_index.at(pool.pool[i].statement.text), testing::kExpectedRetained[i]);
    EXPECT_TRUE(pool.pool[i].statement.verified);
  }
  int skipped = 0;
  for (const auto& o : pool.outcomes) {
    if (o.reason == FilterReason::kSkippedMulticite) {
      ++skipped;
      continue;
    }
    EXPECT_EQ(o.retained, o.votes >= 2 && o.entailed);
    const FilterReason want = o.votes < 2   ? FilterReason::kJudgeMinority
                              : !o.entailed ? FilterReason::kNliFail
                                            : FilterReason::kKept;
    EXPECT_EQ(o.reason, want);
  }
  EXPECT_EQ(skipped, 1);
}

TEST_F(PoolTest, TenStatementsNineThenEight) {
  testing::FilterFixture fx;
  // Ten statements: judges reject one, entailment rejects one more.
  std::vector<Query> q = {fx.queries[0]};
  std::vector<DocumentSet> d = {fx.docsets[0]};
  Report rep;
  rep.query_id = q[0].id;
  rep.language = LanguageTag::english();
  for (int i = 1; i <= 10; ++i) rep.statements.push_back({i, "s" + std::to_string(i), 1, false});
  std::vector<Judge> judges = {{"a", [](std::string_view p) {
                                  return prompts::parse_cited_sentence(p) == "s10" ? "2" : "1";
                                }},
                               Fixed("b", "x"), {"c", [](std::string_view p) {
                                  return prompts::parse_cited_sentence(p) == "s10" ? "3" : "1";
                                }}};
  EntailFn nli = [](std::string_view, std::string_view h) { return h != "s9"; };
  const std::vector<FilterInput> in = {{&q[0], &d[0], &rep}};
  const auto pool = build_statement_pool(in, judges, nli);
  EXPECT_DOUBLE_EQ(pool.stats.judge_retain_rate, 0.9);
  EXPECT_DOUBLE_EQ(pool.stats.nli_retain_rate, 8.0 / 9.0);
  EXPECT_EQ(pool.stats.pool_size, 8);
}

TEST_F(PoolTest, AllPassIsIdentityOnSingleCitationStatements) {
  testing::FilterFixture fx;
  auto agree = [](std::string_view p) {
    // The fixture cites row % 3 + 1; recover it from the statement text.
    const auto s = prompts::parse_cited_sentence(p);
    const int r = s[11] - '0', n = s[14] - '0';
    return std::to_string((5 * r + n) % 3 + 1);
  };
  const std::vector<Judge> all = {{"a", agree}, {"b", agree}, {"c", agree}};
  EntailFn yes = [](std::string_view, std::string_view) { return true; };
  const auto inputs = fx.inputs();
  const auto pool = build_statement_pool(inputs, all, yes);
  EXPECT_EQ(pool.stats.pool_size, pool.stats.total);
  ASSERT_EQ(pool.pool.size(), 20u);
  std::size_t i = 0;
  for (const auto& r : fx.reports) {
    for (const auto& st : r.statements) {
      EXPECT_EQ(pool.pool[i].statement.text, st.text);
      EXPECT_EQ(pool.pool[i].statement.index, st.index);
      ++i;
    }
  }
}

TEST_F(PoolTest, PermutingReportsPermutesThePool) {
  testing::FilterFixture fx;
  auto inputs = fx.inputs();
  const auto base = build_statement_pool(inputs, fx.judges, fx.nli);
  std::reverse(inputs.begin(), inputs.end());
  const auto rev = build_statement_pool(inputs, fx.judges, fx.nli, 3);
  auto key = [](const PooledStatement& p) { return p.query_id + "#" + std::to_string(p.statement.index); };
  std::vector<std::string> a, b;
  for (const auto& p : base.pool) a.push_back(key(p));
  for (const auto& p : rev.pool) b.push_back(key(p));
  EXPECT_NE(a, b);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_EQ(base.stats.pool_size, rev.stats.pool_size);
}

TEST_F(PoolTest, MismatchedReportIsRejected) {
  testing::FilterFixture fx;
  auto inputs = fx.inputs();
  inputs[0].docset = &fx.docsets[1];
  EXPECT_THROW(build_statement_pool(inputs, fx.judges, fx.nli), DomainError);
}

TEST(PoolStatsTest, RatesMultiplyToPoolFraction) {
  std::vector<FilterOutcome> o;
  for (int i = 0; i < 7; ++i) {
    FilterOutcome f;
    f.votes = i < 5 ? 2 : 1;
    f.entailed = i < 3;
    f.retained = f.votes >= 2 && f.entailed;
    o.push_back(f);
  }
  const auto s = pool_stats(o);
  EXPECT_NEAR(s.judge_retain_rate * s.nli_retain_rate, double(s.pool_size) / s.total, 1e-12);
  EXPECT_LE(s.pool_size, s.judge_retained);
  EXPECT_LE(s.judge_retained, s.total);
  EXPECT_EQ(pool_stats({}).judge_retain_rate, 0.0);
}

TEST(FilterJsonTest, OutcomeRoundTrip) {
  FilterOutcome o{"q", LanguageTag("fr"), 3, 2, false, false, FilterReason::kNliFail};
  const auto back = nlohmann::json(o).get<FilterOutcome>();
  EXPECT_EQ(nlohmann::json(back).dump(), nlohmann::json(o).dump());
}

}  // namespace
}  // namespace langpref
