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

// Fixture builders shared by the unit and acceptance tests.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "langpref/corpus.hpp"

namespace langpref::testing {

// Fresh, empty scratch directory unique to this process.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("langpref_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline DocumentSet make_docset(const std::string& query_id,
                               const std::vector<std::string>& contents) {
  DocumentSet s;
  s.query_id = query_id;
  for (std::size_t i = 0; i < contents.size(); ++i) {
    s.docs.push_back({static_cast<int>(i) + 1, "Title " + std::to_string(i + 1), contents[i],
                      LanguageTag::english(), true});
  }
  return s;
}

// First sentence of document d of query q. Every sentence carries words no
// other document shares, so overlap judges and substring matching find
// exactly one source.
inline std::string synthetic_sentence(int q, int d) {
  return "Record q" + std::to_string(q) + " item d" + std::to_string(d) + " states fact f" +
         std::to_string(q) + "x" + std::to_string(d) + ".";
}

// `queries` records of `k` English documents, each with two sentences. For
// miracl, document 1 is the single relevant one.
inline std::string synthetic_dataset(int queries, int k, bool miracl = false) {
  std::string out;
  for (int q = 1; q <= queries; ++q) {
    nlohmann::json docs = nlohmann::json::array();
    for (int d = 1; d <= k; ++d) {
      docs.push_back({{"doc_id", d},
                      {"title", "Source " + std::to_string(q) + "-" + std::to_string(d)},
                      {"content", synthetic_sentence(q, d) + " Background b" + std::to_string(q) +
                                      "y" + std::to_string(d) + " follows."},
                      {"relevant", !miracl || d == 1}});
    }
    nlohmann::json rec = {{"query_id", "q" + std::to_string(q)},
                          {"query_text", "What is known about record " + std::to_string(q) + "?"},
                          {"query_language", "en"},
                          {"documents", docs}};
    out += rec.dump() + "\n";
  }
  return out;
}

}  // namespace langpref::testing
