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

// Model-probe backend contract and probing operations: next-token citation
// distributions, per-layer logit-lens readouts, ablation log-probabilities,
// tokenizer checks, and a content-addressed result cache.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "langpref/contextlab.hpp"
#include "langpref/digest.hpp"
#include "langpref/error.hpp"
#include "langpref/log.hpp"

namespace langpref {

struct TokenProb {
  int id = 0;
  std::string text;
  double prob = 0.0;
};

// A next-token distribution. When `complete` is false the entries are a
// truncated top-k plus any requested candidates, and `entropy` must carry
// the full-distribution entropy computed by the backend.
struct TokenDistribution {
  std::vector<TokenProb> entries;
  int vocab_size = 0;
  bool complete = true;
  std::optional<double> entropy;
};

// Shannon entropy in nats; 0 log 0 = 0.
inline double shannon_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

inline double distribution_entropy(const TokenDistribution& d) {
  if (d.entropy) return *d.entropy;
  if (!d.complete) {
    throw DomainError("entropy needs the full distribution or a backend-supplied value");
  }
  std::vector<double> p;
  p.reserve(d.entries.size());
  for (const auto& e : d.entries) p.push_back(e.prob);
  return shannon_entropy(p);
}

// Highest-probability entry; ties go to the smallest token id.
inline const TokenProb& argmax_token(const TokenDistribution& d) {
  if (d.entries.empty()) throw DomainError("empty token distribution");
  const TokenProb* best = &d.entries.front();
  for (const auto& e : d.entries) {
    if (e.prob > best->prob || (e.prob == best->prob && e.id < best->id)) best = &e;
  }
  return *best;
}

inline void validate_distribution(const TokenDistribution& d) {
  double sum = 0.0;
  for (const auto& e : d.entries) {
    if (!(e.prob >= 0.0) || !std::isfinite(e.prob)) {
      throw InvalidOutputError("negative or non-finite probability for token '" +
                               e.text + "'");
    }
    sum += e.prob;
  }
  if (d.complete && std::abs(sum - 1.0) > 1e-4) {
    throw InvalidOutputError("full distribution sums to " + std::to_string(sum));
  }
  if (!d.complete && sum > 1.0 + 1e-4) {
    throw InvalidOutputError("partial distribution sums past 1");
  }
}

struct BackendCapabilities {
  bool tokenizer = false;
  bool layer_trace = false;
  bool sequence_logprob = false;
};

// Interface every model backend implements. Responses must be deterministic
// for identical prompt bytes.
class ProbeBackend {
 public:
  virtual ~ProbeBackend() = default;

  virtual std::string model_id() const = 0;
  virtual BackendCapabilities capabilities() const = 0;
  virtual int layer_count() const { return 0; }
  virtual std::size_t max_in_flight() const { return 1; }

  // Next-token distribution after `prompt`. `candidates` are token strings
  // whose probabilities must be present even in a truncated answer.
  virtual TokenDistribution next_token(std::string_view prompt,
                                       std::span<const std::string> candidates) = 0;

  // Top-1 token string per layer at the prompt's last position.
  virtual std::vector<std::string> layer_top1(std::string_view /*prompt*/) {
    throw CapabilityError(model_id() + " does not support layer traces");
  }

  // Natural-log probability of generating `continuation` after `prompt`.
  virtual double sequence_logprob(std::string_view /*prompt*/,
                                  std::string_view /*continuation*/) {
    throw CapabilityError(model_id() + " does not support sequence log-probabilities");
  }

  // Number of tokens `text` encodes to, without special tokens.
  virtual int count_tokens(std::string_view /*text*/) {
    throw CapabilityError(model_id() + " does not expose its tokenizer");
  }
};

// ---------------------------------------------------------------------------
// Cache

// Thread-safe key/value cache of probe results. With a directory, every
// entry is also one JSON file named by its key.
class ProbeCache {
 public:
  ProbeCache() = default;
  explicit ProbeCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  static std::string key(std::string_view model_id, std::string_view op,
                         std::string_view prompt, std::string_view extra = {}) {
    return DigestBuilder().add(model_id).add(op).add(prompt).add(extra).hex();
  }

  std::optional<nlohmann::json> get(const std::string& key) {
    {
      std::lock_guard lock(mu_);
      if (auto it = memory_.find(key); it != memory_.end()) return it->second;
    }
    if (dir_.empty()) return std::nullopt;
    const auto path = file_for(key);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    nlohmann::json value;
    try {
      nlohmann::json doc = nlohmann::json::parse(in);
      if (doc.at("key").get<std::string>() != key) throw Error("key mismatch");
      value = doc.at("value");
    } catch (const std::exception& e) {
      log_warning("discarding corrupt cache entry " + path.string() + ": " + e.what());
      in.close();
      std::error_code ec;
      std::filesystem::remove(path, ec);
      return std::nullopt;
    }
    std::lock_guard lock(mu_);
    memory_.emplace(key, value);
    return value;
  }

  void put(const std::string& key, const nlohmann::json& value) {
    {
      std::lock_guard lock(mu_);
      if (!memory_.emplace(key, value).second) return;
    }
    if (dir_.empty()) return;
    const auto path = file_for(key);
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp" +
                     std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << nlohmann::json{{"key", key}, {"value", value}}.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
  }

  std::size_t memory_size() const {
    std::lock_guard lock(mu_);
    return memory_.size();
  }

 private:
  std::filesystem::path file_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
  }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, nlohmann::json> memory_;
};

// ---------------------------------------------------------------------------
// Probing operations

inline bool check_single_token_ids(ProbeBackend& backend, int k) {
  if (!backend.capabilities().tokenizer) {
    throw CapabilityError(backend.model_id() + " does not expose its tokenizer");
  }
  for (int i = 1; i <= k; ++i) {
    if (backend.count_tokens(std::to_string(i)) != 1) return false;
  }
  return true;
}

struct CitationPrediction {
  std::string query_id;
  int statement_index = 0;
  ContextVariant variant;
  int citation_id = 0;  // the correct ID as shown in the prompt
  std::string top1_token;
  double p_correct = 0.0;
  double entropy = 0.0;
  bool correct = false;
};

// What the cache keeps for one next-token call: enough to rebuild any
// CitationPrediction for the same prompt.
struct NextTokenSummary {
  std::string top1_token;
  double top1_prob = 0.0;
  double entropy = 0.0;
  std::map<std::string, double> candidate_probs;
};

inline void to_json(nlohmann::json& j, const NextTokenSummary& s) {
  j = {{"top1_token", s.top1_token},
       {"top1_prob", s.top1_prob},
       {"entropy", s.entropy},
       {"candidate_probs", s.candidate_probs}};
}

inline void from_json(const nlohmann::json& j, NextTokenSummary& s) {
  s.top1_token = j.at("top1_token").get<std::string>();
  s.top1_prob = j.at("top1_prob").get<double>();
  s.entropy = j.at("entropy").get<double>();
  s.candidate_probs = j.at("candidate_probs").get<std::map<std::string, double>>();
}

inline NextTokenSummary summarize(const TokenDistribution& d,
                                  std::span<const std::string> candidates) {
  validate_distribution(d);
  NextTokenSummary s;
  const auto& top = argmax_token(d);
  s.top1_token = top.text;
  s.top1_prob = top.prob;
  s.entropy = distribution_entropy(d);
  for (const auto& c : candidates) {
    const TokenProb* hit = nullptr;
    for (const auto& e : d.entries) {
      if (e.text == c && (!hit || e.id < hit->id)) hit = &e;
    }
    s.candidate_probs[c] = hit ? hit->prob : 0.0;
  }
  return s;
}

inline NextTokenSummary next_token_summary(ProbeBackend& backend,
                                           const PromptBundle& bundle,
                                           ProbeCache* cache,
                                           int attempts = 3) {
  if (bundle.prefix.empty() || bundle.prefix.back() != '[') {
    throw DomainError("probe prefix must end with '['");
  }
  const std::string prompt = bundle.full();
  const std::string key = ProbeCache::key(backend.model_id(), "next_token", prompt);
  if (cache) {
    if (auto hit = cache->get(key)) return hit->get<NextTokenSummary>();
  }
  const auto dist = with_retries(
      [&] { return backend.next_token(prompt, bundle.citation_token_candidates); },
      attempts);
  auto s = summarize(dist, bundle.citation_token_candidates);
  if (cache) cache->put(key, s);
  return s;
}

// Top-1 over the full vocabulary; a non-digit top token is simply incorrect.
inline CitationPrediction next_citation_distribution(ProbeBackend& backend,
                                                     const PromptBundle& bundle,
                                                     int citation_id,
                                                     ProbeCache* cache = nullptr) {
  const auto s = next_token_summary(backend, bundle, cache);
  const std::string want = std::to_string(citation_id);
  CitationPrediction p;
  p.citation_id = citation_id;
  p.top1_token = s.top1_token;
  auto it = s.candidate_probs.find(want);
  p.p_correct = it == s.candidate_probs.end() ? 0.0 : it->second;
  p.entropy = s.entropy;
  p.correct = s.top1_token == want;
  return p;
}

struct LayerTrace {
  std::string query_id;
  int statement_index = 0;
  ContextVariant variant;
  std::vector<std::string> per_layer_top1;
};

inline LayerTrace layer_trace(ProbeBackend& backend, const PromptBundle& bundle,
                              ProbeCache* cache = nullptr, int attempts = 3) {
  if (!backend.capabilities().layer_trace) {
    throw CapabilityError(backend.model_id() + " does not support layer traces");
  }
  const std::string prompt = bundle.full();
  const std::string key = ProbeCache::key(backend.model_id(), "layer_trace", prompt);
  LayerTrace t;
  if (cache) {
    if (auto hit = cache->get(key)) {
      t.per_layer_top1 = hit->get<std::vector<std::string>>();
      return t;
    }
  }
  t.per_layer_top1 = with_retries([&] { return backend.layer_top1(prompt); }, attempts);
  if (static_cast<int>(t.per_layer_top1.size()) != backend.layer_count()) {
    throw InvalidOutputError("layer trace has " +
                             std::to_string(t.per_layer_top1.size()) +
                             " entries, backend reports " +
                             std::to_string(backend.layer_count()) + " layers");
  }
  if (cache) cache->put(key, t.per_layer_top1);
  return t;
}

inline constexpr double kProbClamp = 1e-9;

// logit(p) with p clamped to [1e-9, 1 - 1e-9].
inline double logit_of_logprob(double logprob) {
  double p = std::exp(logprob);
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return std::log(p / (1.0 - p));
}

inline std::string mask_bytes(const std::vector<bool>& mask) {
  std::string s;
  s.reserve(mask.size());
  for (bool b : mask) s.push_back(b ? '1' : '0');
  return s;
}

// Logit-scaled probability of generating `statement` after the masked
// context prompt.
inline double ablation_logit_prob(ProbeBackend& backend,
                                  std::string_view masked_prompt,
                                  std::string_view statement,
                                  const std::vector<bool>& mask,
                                  ProbeCache* cache = nullptr, int attempts = 3) {
  if (!backend.capabilities().sequence_logprob) {
    throw CapabilityError(backend.model_id() +
                          " does not support sequence log-probabilities");
  }
  const std::string key =
      ProbeCache::key(backend.model_id(), "sequence_logprob",
                      std::string(masked_prompt) + '\x1f' + std::string(statement),
                      mask_bytes(mask));
  double logprob;
  if (auto hit = cache ? cache->get(key) : std::nullopt) {
    logprob = hit->get<double>();
  } else {
    logprob = with_retries(
        [&] { return backend.sequence_logprob(masked_prompt, statement); }, attempts);
    if (std::isnan(logprob) || logprob > 1e-9) {
      throw InvalidOutputError("sequence log-probability must be <= 0");
    }
    if (cache) cache->put(key, logprob);
  }
  return logit_of_logprob(logprob);
}

inline void to_json(nlohmann::json& j, const CitationPrediction& p) {
  j = {{"query_id", p.query_id},       {"statement_index", p.statement_index},
       {"variant", p.variant},         {"citation_id", p.citation_id},
       {"top1_token", p.top1_token},   {"p_correct", p.p_correct},
       {"entropy", p.entropy},         {"correct", p.correct}};
}

inline void from_json(const nlohmann::json& j, CitationPrediction& p) {
  p.query_id = j.at("query_id").get<std::string>();
  p.statement_index = j.at("statement_index").get<int>();
  p.variant = j.at("variant").get<ContextVariant>();
  p.citation_id = j.at("citation_id").get<int>();
  p.top1_token = j.at("top1_token").get<std::string>();
  p.p_correct = j.at("p_correct").get<double>();
  p.entropy = j.at("entropy").get<double>();
  p.correct = j.at("correct").get<bool>();
}

}  // namespace langpref
