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

// Bit-exact prompt templates for report generation, relevance judging and
// next-token citation probing. Every template shares the same "Information"
// section: one block per document, each followed by a "---" line.

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace langpref::prompts {

struct DocumentView {
  int id = 0;
  std::string_view title;
  std::string_view content;
};

// CRLF/CR become LF and trailing whitespace is stripped.
inline std::string normalize_field(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      out.push_back(text[i]);
    }
  }
  while (!out.empty() && (out.back() == ' ' || out.back() == '\t' ||
                          out.back() == '\n' || out.back() == '\f' ||
                          out.back() == '\v')) {
    out.pop_back();
  }
  return out;
}

inline std::string document_block(const DocumentView& doc) {
  std::string s = "Document ID: ";
  s += std::to_string(doc.id);
  s += "\nTitle: ";
  s += normalize_field(doc.title);
  s += "\nContent: ";
  s += normalize_field(doc.content);
  s += "\n---\n";
  return s;
}

inline std::string information_section(std::span<const DocumentView> docs) {
  std::string s = "Information:\n";
  for (const auto& d : docs) s += document_block(d);
  return s;
}

inline constexpr int kDefaultTotalWords = 200;

// Gold report generation prompt.
inline std::string report_generation(std::span<const DocumentView> docs,
                                     std::string_view query, int total_words,
                                     std::string_view language_name) {
  std::string s = information_section(docs);
  s += "Using the above information, respond to the following query or task: ";
  s += normalize_field(query);
  s += ".\n"
       "The response should focus on the answer to the query, should be well "
       "structured, informative, and concise, with facts and numbers if "
       "available.\n"
       "\n"
       "Please follow all of the following guidelines in your response:\n"
       "- You MUST write in a single paragraph and at most ";
  s += std::to_string(total_words);
  s += " words.\n"
       "- You MUST write the response in the following language: ";
  s += language_name;
  s += ".\n"
       "- You MUST cite your sources, especially for relevant sentences that "
       "answer the question.\n"
       "- When using information that comes from the documents, use citation "
       "which refer to the Document ID at the end of the sentence (e.g., "
       "[1]).\n"
       "- Do NOT cite multiple documents at the end of the sentence (e.g., "
       "[1][2]).\n"
       "- If multiple documents support the sentence, only cite the most "
       "relevant document.\n"
       "- It is important to ensure that the Document ID is a valid string "
       "from the information above and that the information in the sentence "
       "is present in the document.\n"
       "\n"
       "Response:";
  return s;
}

// Relevance judge prompt: the judge picks the best supporting document.
inline std::string relevance_judge(std::span<const DocumentView> docs,
                                   std::string_view query,
                                   std::string_view statement) {
  std::string s =
      "Instruction: You are given a query, a document, and a sentence from a "
      "generated response that cites the document in answering the query. "
      "Determine which document best supports the information in the cited "
      "sentence. Respond only with the exact document ID. Do not provide any "
      "additional explanation.\n"
      "\n"
      "Query: ";
  s += normalize_field(query);
  s += "\n";
  s += information_section(docs);
  s += "\nCited sentence: ";
  s += normalize_field(statement);
  s += "\nResponse:";
  return s;
}

// Instruction block that follows the information section in the citation
// probe, up to and including "Response: ".
inline std::string citation_instruction(std::string_view query) {
  std::string s =
      "Using the above information, the response is the answer to the query "
      "or task: ";
  s += normalize_field(query);
  s += " in a single sentence.\n"
       "You MUST cite the most relevant document by including only its "
       "Document ID in brackets at the end of the sentence (e.g., [Document "
       "ID]).\n"
       "Do NOT include any additional words inside or outside the brackets.\n"
       "Please output ONLY the number of the Document ID that is most "
       "relevant to the sentence.\n"
       "\n"
       "Response: ";
  return s;
}

// Probe prefix: instruction, the statement, one space, and the opening
// bracket the citation token must follow.
inline std::string citation_prefix(std::string_view query,
                                   std::string_view statement) {
  std::string s = citation_instruction(query);
  s += normalize_field(statement);
  s += " [";
  return s;
}

// Recovers the document blocks from a rendered prompt. Used by fixture
// adapters that answer from the prompt text alone.
struct ParsedDocument {
  int id = 0;
  std::string title;
  std::string content;
};

inline std::vector<ParsedDocument> parse_documents(std::string_view prompt) {
  std::vector<ParsedDocument> out;
  constexpr std::string_view kId = "Document ID: ";
  constexpr std::string_view kTitle = "\nTitle: ";
  constexpr std::string_view kContent = "\nContent: ";
  constexpr std::string_view kEnd = "\n---\n";
  std::size_t pos = 0;
  while ((pos = prompt.find(kId, pos)) != std::string_view::npos) {
    if (pos > 0 && prompt[pos - 1] != '\n') {
      pos += kId.size();
      continue;
    }
    const std::size_t t = prompt.find(kTitle, pos);
    const std::size_t c = t == std::string_view::npos ? t : prompt.find(kContent, t);
    const std::size_t e = c == std::string_view::npos ? c : prompt.find(kEnd, c);
    if (e == std::string_view::npos) break;
    ParsedDocument d;
    const auto id_text = prompt.substr(pos + kId.size(), t - pos - kId.size());
    for (char ch : id_text) {
      if (ch < '0' || ch > '9') break;
      d.id = d.id * 10 + (ch - '0');
    }
    d.title = std::string(prompt.substr(t + kTitle.size(), c - t - kTitle.size()));
    d.content = std::string(prompt.substr(c + kContent.size(), e - c - kContent.size()));
    out.push_back(std::move(d));
    pos = e + kEnd.size();
  }
  return out;
}

// Text between the last "Response: " and a trailing " [", if present.
inline std::string parse_probe_statement(std::string_view prompt) {
  constexpr std::string_view kResp = "Response: ";
  const std::size_t r = prompt.rfind(kResp);
  if (r == std::string_view::npos) return {};
  std::string_view rest = prompt.substr(r + kResp.size());
  if (rest.size() >= 2 && rest.substr(rest.size() - 2) == " [") {
    rest.remove_suffix(2);
  }
  return std::string(rest);
}

// Text after "Cited sentence: " up to the next newline.
inline std::string parse_cited_sentence(std::string_view prompt) {
  constexpr std::string_view kCited = "Cited sentence: ";
  const std::size_t p = prompt.rfind(kCited);
  if (p == std::string_view::npos) return {};
  const std::size_t b = p + kCited.size();
  const std::size_t e = prompt.find('\n', b);
  return std::string(prompt.substr(b, e == std::string_view::npos ? e : e - b));
}

}  // namespace langpref::prompts
