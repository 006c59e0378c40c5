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

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace langpref {

enum class LogLevel { kInfo, kWarning };

using LogSink = std::function<void(LogLevel, std::string_view)>;

namespace detail {
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
inline LogSink& log_sink() {
  static LogSink sink = [](LogLevel level, std::string_view msg) {
    std::cerr << (level == LogLevel::kWarning ? "[warn] " : "[info] ") << msg
              << '\n';
  };
  return sink;
}
}  // namespace detail

// Replaces the process-wide log sink; returns the previous one.
inline LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(detail::log_mutex());
  LogSink old = std::move(detail::log_sink());
  detail::log_sink() = std::move(sink);
  return old;
}

inline void log(LogLevel level, std::string_view msg) {
  std::lock_guard lock(detail::log_mutex());
  if (detail::log_sink()) detail::log_sink()(level, msg);
}

inline void log_warning(std::string_view msg) { log(LogLevel::kWarning, msg); }
inline void log_info(std::string_view msg) { log(LogLevel::kInfo, msg); }

}  // namespace langpref
