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

#include <compare>
#include <string>
#include <string_view>

#include "json.hpp"
#include "langpref/error.hpp"

namespace langpref {

// Two-letter ISO 639-1 code. "en" is the pivot language.
class LanguageTag {
 public:
  LanguageTag() : code_("en") {}
  explicit LanguageTag(std::string_view code) : code_(code) {
    if (!valid(code)) {
      throw ConstraintError("invalid language code '" + std::string(code) +
                            "': expected two lowercase ASCII letters");
    }
  }

  static bool valid(std::string_view code) {
    return code.size() == 2 && code[0] >= 'a' && code[0] <= 'z' &&
           code[1] >= 'a' && code[1] <= 'z';
  }
  static LanguageTag english() { return LanguageTag("en"); }

  const std::string& code() const { return code_; }
  bool is_english() const { return code_ == "en"; }

  // English display name used inside generation prompts.
  std::string name() const {
    static constexpr std::pair<std::string_view, std::string_view> kNames[] = {
        {"ar", "Arabic"},  {"bn", "Bengali"}, {"de", "German"},
        {"en", "English"}, {"es", "Spanish"}, {"fr", "French"},
        {"hi", "Hindi"},   {"it", "Italian"}, {"ja", "Japanese"},
        {"ko", "Korean"},  {"pt", "Portuguese"}, {"ru", "Russian"},
        {"sw", "Swahili"}, {"zh", "Chinese"},
    };
    for (const auto& [code, name] : kNames) {
      if (code == code_) return std::string(name);
    }
    return code_;
  }

  auto operator<=>(const LanguageTag&) const = default;

 private:
  std::string code_;
};

inline void to_json(nlohmann::json& j, const LanguageTag& t) { j = t.code(); }
inline void from_json(const nlohmann::json& j, LanguageTag& t) {
  t = LanguageTag(j.get<std::string>());
}

}  // namespace langpref
