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

#include <cmath>
#include <filesystem>

#include "langpref/backends/pipe.hpp"
#include "langpref/backends/scripted.hpp"
#include "langpref/contextlab.hpp"
#include "langpref/metrics.hpp"
#include "langpref/probe.hpp"
#include "test_support.hpp"

#ifndef LANGPREF_TEST_DIR
#define LANGPREF_TEST_DIR "tests"
#endif

namespace langpref {
namespace {

namespace fs = std::filesystem;

// Backend returning a fixed distribution and counting its calls.
class FixedBackend : public ProbeBackend {
 public:
  explicit FixedBackend(TokenDistribution d) : dist_(std::move(d)) {}
  std::string model_id() const override { return "fixed"; }
  BackendCapabilities capabilities() const override { return caps; }
  int layer_count() const override { return static_cast<int>(trace.size()); }
  TokenDistribution next_token(std::string_view, std::span<const std::string>) override {
    ++calls;
    if (failures_left > 0) {
      --failures_left;
      throw TransportError("flaky");
    }
    return dist_;
  }
  std::vector<std::string> layer_top1(std::string_view) override { return trace; }
  double sequence_logprob(std::string_view, std::string_view) override { return logprob; }
  int count_tokens(std::string_view text) override {
    return text == split_token ? 2 : 1;
  }

  BackendCapabilities caps{true, true, true};
  std::vector<std::string> trace = {"The", "3", "2"};
  double logprob = std::log(0.5);
  std::string split_token;
  int failures_left = 0;
  int calls = 0;

 private:
  TokenDistribution dist_;
};

TokenDistribution one_hot(int hot, int v = 12) {
  TokenDistribution d;
  d.vocab_size = v;
  for (int i = 0; i < v; ++i) d.entries.push_back({i, i >= 1 && i <= 9 ? std::to_string(i) : "w" + std::to_string(i), i == hot ? 1.0 : 0.0});
  return d;
}

TokenDistribution uniform_digits() {
  TokenDistribution d;
  d.vocab_size = 9;
  for (int i = 1; i <= 9; ++i) d.entries.push_back({i, std::to_string(i), 1.0 / 9});
  return d;
}

struct PromptFixture {
  Query query{"q1", "What is it?", LanguageTag::english()};
  DocumentSet set = testing::make_docset("q1", {"First fact. Extra.", "Second fact.", "Third fact."});
  TranslationStore store;

  PromptBundle bundle(int cited, const std::string& statement) const {
    const auto ctx = build_contrastive_context(query, set, store, cited, LanguageTag::english());
    return render_prompt(ctx, {0, statement, cited, true}, set, store);
  }
};

TEST(Entropy, OneHotIsZero) {
  EXPECT_EQ(distribution_entropy(one_hot(3)), 0.0);
}

TEST(Entropy, UniformOverNineIsLogNine) {
  EXPECT_NEAR(distribution_entropy(uniform_digits()), std::log(9.0), 1e-9);
  EXPECT_NEAR(distribution_entropy(uniform_digits()), 2.1972246, 1e-7);
}

TEST(Entropy, PartialDistributionNeedsBackendValue) {
  auto d = one_hot(2);
  d.complete = false;
  EXPECT_THROW(distribution_entropy(d), DomainError);
  d.entropy = 1.25;
  EXPECT_EQ(distribution_entropy(d), 1.25);
}

TEST(Argmax, TiesGoToSmallestId) {
  TokenDistribution d;
  d.entries = {{7, "7", 0.4}, {3, "3", 0.4}, {5, "5", 0.2}};
  EXPECT_EQ(argmax_token(d).id, 3);
  EXPECT_THROW(argmax_token(TokenDistribution{}), DomainError);
}

TEST(Validate, RejectsBadDistributions) {
  auto d = uniform_digits();
  d.entries[0].prob = -0.1;
  EXPECT_THROW(validate_distribution(d), InvalidOutputError);
  auto e = uniform_digits();
  e.entries[0].prob += 0.1;
  EXPECT_THROW(validate_distribution(e), InvalidOutputError);
  auto f = uniform_digits();
  f.entries[0].prob = std::nan("");
  EXPECT_THROW(validate_distribution(f), InvalidOutputError);
}

TEST(NextCitation, CorrectWhenTopTokenMatches) {
  PromptFixture f;
  FixedBackend b(one_hot(2));
  const auto p = next_citation_distribution(b, f.bundle(2, "Second fact."), 2);
  EXPECT_TRUE(p.correct);
  EXPECT_EQ(p.top1_token, "2");
  EXPECT_EQ(p.p_correct, 1.0);
  EXPECT_EQ(p.entropy, 0.0);
}

TEST(NextCitation, NonDigitTopTokenIsIncorrect) {
  PromptFixture f;
  auto d = uniform_digits();
  for (auto& e : d.entries) e.prob = 0.05;
  d.entries.push_back({10, "The", 1.0 - 0.45});
  d.vocab_size = 10;
  FixedBackend b(d);
  const auto p = next_citation_distribution(b, f.bundle(1, "First fact."), 1);
  EXPECT_FALSE(p.correct);
  EXPECT_EQ(p.top1_token, "The");
  EXPECT_DOUBLE_EQ(p.p_correct, 0.05);
}

TEST(NextCitation, PrefixMustEndWithBracket) {
  PromptFixture f;
  FixedBackend b(one_hot(1));
  auto bundle = f.bundle(1, "First fact.");
  bundle.prefix.pop_back();
  EXPECT_THROW(next_citation_distribution(b, bundle, 1), DomainError);
}

TEST(NextCitation, RetriesTransportFailures) {
  PromptFixture f;
  FixedBackend b(one_hot(1));
  b.failures_left = 2;
  EXPECT_TRUE(next_citation_distribution(b, f.bundle(1, "First fact."), 1).correct);
  EXPECT_EQ(b.calls, 3);
  b.failures_left = 3;
  EXPECT_THROW(next_citation_distribution(b, f.bundle(1, "Other."), 1), TransportError);
}

TEST(SingleTokenIds, ScriptedAndSplitting) {
  backends::ScriptedRateBackend s({{"en", 0.8}}, 1);
  EXPECT_TRUE(check_single_token_ids(s, 9));
  FixedBackend b(one_hot(1));
  b.split_token = "9";
  EXPECT_TRUE(check_single_token_ids(b, 8));
  EXPECT_FALSE(check_single_token_ids(b, 9));
  b.caps.tokenizer = false;
  EXPECT_THROW(check_single_token_ids(b, 3), CapabilityError);
}

TEST(LayerTraceTest, LengthAndFinalLayerAgreeWithNextToken) {
  PromptFixture f;
  backends::ScriptedRateBackend s({{"en", 0.8}}, 3, 6);
  for (int cited = 1; cited <= 3; ++cited) {
    const std::string statement = cited == 1 ? "First fact." : cited == 2 ? "Second fact." : "Third fact.";
    const auto bundle = f.bundle(cited, statement);
    const auto t = layer_trace(s, bundle);
    ASSERT_EQ(t.per_layer_top1.size(), 6u);
    const auto p = next_citation_distribution(s, bundle, cited);
    EXPECT_EQ(t.per_layer_top1.back(), p.top1_token);
    const auto classes = classify_layers(t.per_layer_top1, cited, 3);
    EXPECT_EQ(classes.back() == LayerClass::kCorrect, p.correct);
  }
}

TEST(LayerTraceTest, CapabilityAndLengthChecks) {
  PromptFixture f;
  FixedBackend b(one_hot(1));
  EXPECT_EQ(layer_trace(b, f.bundle(1, "x")).per_layer_top1.size(), 3u);
  FixedBackend wrong(one_hot(1));
  struct Liar : FixedBackend {
    using FixedBackend::FixedBackend;
    int layer_count() const override { return 5; }
  } liar(one_hot(1));
  EXPECT_THROW(layer_trace(liar, f.bundle(1, "x")), InvalidOutputError);
  wrong.caps.layer_trace = false;
  EXPECT_THROW(layer_trace(wrong, f.bundle(1, "x")), CapabilityError);
}

TEST(Ablation, LogitScaling) {
  FixedBackend b(one_hot(1));
  const std::vector<bool> m = {true, false};
  EXPECT_NEAR(ablation_logit_prob(b, "ctx", "s", m), 0.0, 1e-12);
  b.logprob = std::log(0.9);
  EXPECT_NEAR(ablation_logit_prob(b, "ctx", "s", m), std::log(9.0), 1e-12);
  b.logprob = 0.0;
  EXPECT_NEAR(ablation_logit_prob(b, "ctx", "s", m), std::log((1 - 1e-9) / 1e-9), 1e-6);
  b.logprob = -1e6;
  EXPECT_NEAR(ablation_logit_prob(b, "ctx", "s", m), std::log(1e-9 / (1 - 1e-9)), 1e-6);
  b.logprob = 0.5;
  EXPECT_THROW(ablation_logit_prob(b, "ctx", "s", m), InvalidOutputError);
  b.caps.sequence_logprob = false;
  EXPECT_THROW(ablation_logit_prob(b, "ctx", "s", m), CapabilityError);
}

TEST(Ablation, FullMaskBeatsEmptyMask) {
  PromptFixture f;
  backends::ScriptedRateBackend s({{"en", 0.9}}, 3);
  const auto ctx = build_contrastive_context(f.query, f.set, f.store, 2, LanguageTag::english());
  const auto n = context_sentences(ctx, f.set, f.store).size();
  const std::vector<bool> full(n, true), none(n, false);
  const double hi = ablation_logit_prob(s, render_masked_prompt(ctx, f.set, f.store, full), "Second fact.", full);
  const double lo = ablation_logit_prob(s, render_masked_prompt(ctx, f.set, f.store, none), "Second fact.", none);
  EXPECT_GT(hi, lo);
}

TEST(Cache, PutGetAndDistinctKeys) {
  ProbeCache c;
  const auto k1 = ProbeCache::key("m", "next_token", "prompt");
  const auto k2 = ProbeCache::key("m", "next_token", "prompt ");
  const auto k3 = ProbeCache::key("n", "next_token", "prompt");
  const auto k4 = ProbeCache::key("m", "layer_trace", "prompt");
  EXPECT_NE(k1, k2);
  EXPECT_NE(k1, k3);
  EXPECT_NE(k1, k4);
  EXPECT_EQ(k1, ProbeCache::key("m", "next_token", "prompt"));
  EXPECT_FALSE(c.get(k1));
  c.put(k1, 42);
  EXPECT_EQ(c.get(k1)->get<int>(), 42);
  c.put(k1, 43);
  EXPECT_EQ(c.get(k1)->get<int>(), 42);
}

TEST(Cache, PersistsAndDropsCorruptEntries) {
  const auto dir = testing::scratch_dir("probe_cache");
  const auto key = ProbeCache::key("m", "op", "p");
  {
    ProbeCache c(dir);
    c.put(key, nlohmann::json{{"x", 1}});
  }
  {
    ProbeCache c(dir);
    ASSERT_TRUE(c.get(key));
    EXPECT_EQ((*c.get(key))["x"], 1);
  }
  fs::path file;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) file = e.path();
  }
  ASSERT_FALSE(file.empty());
  testing::spit(file, "{not json");
  ProbeCache c(dir);
  EXPECT_FALSE(c.get(key));
  EXPECT_FALSE(fs::exists(file));
  fs::remove_all(dir);
}

TEST(Cache, CorruptEntryIsRecomputed) {
  const auto dir = testing::scratch_dir("probe_recompute");
  PromptFixture f;
  FixedBackend b(one_hot(2));
  const auto bundle = f.bundle(2, "Second fact.");
  {
    ProbeCache c(dir);
    next_citation_distribution(b, bundle, 2, &c);
  }
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) testing::spit(e.path(), "garbage");
  }
  ProbeCache c(dir);
  EXPECT_TRUE(next_citation_distribution(b, bundle, 2, &c).correct);
  EXPECT_EQ(b.calls, 2);
  fs::remove_all(dir);
}

TEST(Cache, WarmRunMakesNoCalls) {
  const auto dir = testing::scratch_dir("probe_warm");
  PromptFixture f;
  backends::ScriptedRateBackend s({{"en", 0.7}}, 9);
  std::vector<CitationPrediction> first, second;
  {
    ProbeCache c(dir);
    for (int i = 0; i < 100; ++i) {
      first.push_back(next_citation_distribution(s, f.bundle(1 + i % 3, "Claim " + std::to_string(i) + "."), 1 + i % 3, &c));
    }
  }
  EXPECT_EQ(s.next_token_calls, 100);
  ProbeCache c(dir);
  for (int i = 0; i < 100; ++i) {
    second.push_back(next_citation_distribution(s, f.bundle(1 + i % 3, "Claim " + std::to_string(i) + "."), 1 + i % 3, &c));
  }
  EXPECT_EQ(s.next_token_calls, 100);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(nlohmann::json(first[i]).dump(), nlohmann::json(second[i]).dump());
  }
  fs::remove_all(dir);
}

TEST(Scripted, RatesShapeAccuracy) {
  PromptFixture f;
  backends::ScriptedRateBackend s({{"en", 0.8}}, 17);
  int correct = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    auto set = f.set;
    const std::string sentence = "Unique claim " + std::to_string(i) + ".";
    set.docs[1].content = sentence;
    const auto ctx = build_contrastive_context(f.query, set, f.store, 2, LanguageTag::english());
    correct += next_citation_distribution(s, render_prompt(ctx, {0, sentence, 2, true}, set, f.store), 2).correct;
  }
  EXPECT_NEAR(correct / double(n), 0.8, 0.03);
  EXPECT_THROW(backends::ScriptedRateBackend::from_spec("en=1.5", "m"), ConfigError);
  EXPECT_THROW(backends::ScriptedRateBackend::from_spec("en", "m"), ConfigError);
  EXPECT_EQ(backends::ScriptedRateBackend::from_spec("en=0.5,layers=5,seed=2", "m")->layer_count(), 5);
}

class PipeTest : public ::testing::Test {
 protected:
  static std::string command() {
    return "python3 " + std::string(LANGPREF_TEST_DIR) + "/fixtures/fake_backend.py";
  }
  void SetUp() override {
    if (std::system("python3 -c pass >/dev/null 2>&1") != 0) GTEST_SKIP() << "python3 not available";
  }
};

TEST_F(PipeTest, RoundTripsEveryOperation) {
  backends::PipeBackend b(command());
  EXPECT_EQ(b.model_id(), "fake-pipe");
  EXPECT_EQ(b.layer_count(), 4);
  EXPECT_EQ(b.max_in_flight(), 2u);
  EXPECT_TRUE(b.capabilities().layer_trace);
  EXPECT_TRUE(check_single_token_ids(b, 9));
  PromptFixture f;
  const auto bundle = f.bundle(2, "Second fact.");
  const auto p = next_citation_distribution(b, bundle, 2);
  EXPECT_TRUE(p.correct);
  EXPECT_NEAR(p.p_correct, 0.55, 1e-12);
  EXPECT_EQ(layer_trace(b, bundle).per_layer_top1.back(), "2");
  EXPECT_NEAR(ablation_logit_prob(b, "ctx", "s", {true}), 0.0, 1e-12);
  EXPECT_EQ(b.count_tokens("two words"), 2);
}

TEST_F(PipeTest, ErrorsMapToExceptions) {
  backends::PipeBackend b(command());
  PromptFixture f;
  EXPECT_THROW(next_citation_distribution(b, f.bundle(1, "FATAL claim."), 1), InvalidOutputError);
  EXPECT_THROW(next_citation_distribution(b, f.bundle(1, "CRASH claim."), 1), TransportError);
  // The client restarts the server after a crash.
  EXPECT_TRUE(next_citation_distribution(b, f.bundle(2, "Second fact."), 2).correct);
}

TEST(Transport, MissingCommandIsTransportError) {
  JsonLineClient c("exec /nonexistent/langpref-server");
  EXPECT_THROW(c.request({{"op", "info"}}), TransportError);
}

TEST(PredictionJson, RoundTrip) {
  CitationPrediction p;
  p.query_id = "q7";
  p.statement_index = 3;
  p.variant = {VariantKind::kAllTarget, LanguageTag("ko")};
  p.citation_id = 2;
  p.top1_token = "The";
  p.p_correct = 0.25;
  p.entropy = 1.5;
  const nlohmann::json j = p;
  const auto back = j.get<CitationPrediction>();
  EXPECT_EQ(nlohmann::json(back), j);
}

}  // namespace
}  // namespace langpref
