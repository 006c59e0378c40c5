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

// Out-of-process model backend speaking line-delimited JSON over a pipe.
//
// Requests carry {op, model_id, ...}; ops are "info", "next_token",
// "layer_trace", "sequence_logprob" and "count_tokens". Prompt bytes are
// sent verbatim. See tools/hf_backend.py for a reference server.

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "langpref/probe.hpp"
#include "langpref/transport.hpp"

namespace langpref::backends {

class PipeBackend : public ProbeBackend {
 public:
  explicit PipeBackend(std::string command, int top_k = 20)
      : client_(std::make_unique<JsonLineClient>(std::move(command))), top_k_(top_k) {
    const auto info = client_->request({{"op", "info"}});
    model_id_ = info.at("model_id").get<std::string>();
    layer_count_ = info.value("layer_count", 0);
    max_in_flight_ = info.value("max_in_flight", 1);
    const auto caps = info.value("capabilities", nlohmann::json::object());
    caps_.tokenizer = caps.value("tokenizer", false);
    caps_.layer_trace = caps.value("layer_trace", false);
    caps_.sequence_logprob = caps.value("sequence_logprob", false);
  }

  std::string model_id() const override { return model_id_; }
  BackendCapabilities capabilities() const override { return caps_; }
  int layer_count() const override { return layer_count_; }
  std::size_t max_in_flight() const override { return max_in_flight_; }

  TokenDistribution next_token(std::string_view prompt,
                               std::span<const std::string> candidates) override {
    const auto resp = client_->request({{"op", "next_token"},
                                        {"model_id", model_id_},
                                        {"prompt", prompt},
                                        {"top_k", top_k_},
                                        {"candidates", candidates}});
    TokenDistribution d;
    for (const auto& e : resp.at("distribution")) {
      d.entries.push_back({e.at("id").get<int>(), e.at("text").get<std::string>(),
                           e.at("prob").get<double>()});
    }
    d.vocab_size = resp.value("vocab_size", static_cast<int>(d.entries.size()));
    d.complete = resp.value("complete", false);
    if (resp.contains("entropy")) d.entropy = resp["entropy"].get<double>();
    return d;
  }

  std::vector<std::string> layer_top1(std::string_view prompt) override {
    if (!caps_.layer_trace) return ProbeBackend::layer_top1(prompt);
    const auto resp = client_->request(
        {{"op", "layer_trace"}, {"model_id", model_id_}, {"prompt", prompt}});
    return resp.at("trace").get<std::vector<std::string>>();
  }

  double sequence_logprob(std::string_view prompt, std::string_view continuation) override {
    if (!caps_.sequence_logprob) return ProbeBackend::sequence_logprob(prompt, continuation);
    const auto resp = client_->request({{"op", "sequence_logprob"},
                                        {"model_id", model_id_},
                                        {"prompt", prompt},
                                        {"continuation", continuation}});
    return resp.at("logprob").get<double>();
  }

  int count_tokens(std::string_view text) override {
    if (!caps_.tokenizer) return ProbeBackend::count_tokens(text);
    const auto resp = client_->request(
        {{"op", "count_tokens"}, {"model_id", model_id_}, {"text", text}});
    return resp.at("count").get<int>();
  }

 private:
  std::unique_ptr<JsonLineClient> client_;
  int top_k_;
  std::string model_id_;
  int layer_count_ = 0;
  std::size_t max_in_flight_ = 1;
  BackendCapabilities caps_;
};

}  // namespace langpref::backends
