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

// Line-delimited JSON over a child process's stdin/stdout. One request line
// out, one response line back; requests are serialized.

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <mutex>
#include <string>

#include "json.hpp"
#include "langpref/error.hpp"

namespace langpref {

class Subprocess {
 public:
  explicit Subprocess(std::string command) : command_(std::move(command)) {}
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;
  ~Subprocess() { stop(); }

  const std::string& command() const { return command_; }
  bool running() const { return pid_ > 0; }

  void start() {
    if (running()) return;
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0) throw TransportError("pipe failed");
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw TransportError("pipe failed");
    }
    const pid_t pid = fork();
    if (pid < 0) throw TransportError("fork failed");
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    pid_ = pid;
    in_ = to_child[1];
    out_ = fdopen(from_child[0], "r");
  }

  void stop() {
    if (!running()) return;
    close(in_);
    if (out_) fclose(out_);
    out_ = nullptr;
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }

  void write_line(const std::string& line) {
    std::string buf = line + '\n';
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
      const ssize_t n = ::write(in_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError("write to '" + command_ + "' failed");
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    std::string line;
    int c;
    while ((c = fgetc(out_)) != EOF) {
      if (c == '\n') return line;
      line.push_back(static_cast<char>(c));
    }
    throw TransportError("'" + command_ + "' closed its output");
  }

 private:
  std::string command_;
  pid_t pid_ = -1;
  int in_ = -1;
  FILE* out_ = nullptr;
};

class JsonLineClient {
 public:
  explicit JsonLineClient(std::string command) : proc_(std::move(command)) {
    signal(SIGPIPE, SIG_IGN);
  }

  // Sends one request and returns the response object. A response with an
  // "error" field becomes a TransportError unless "retryable" is false.
  nlohmann::json request(const nlohmann::json& req) {
    std::lock_guard lock(mu_);
    nlohmann::json resp;
    try {
      proc_.start();
      proc_.write_line(req.dump());
      resp = nlohmann::json::parse(proc_.read_line());
    } catch (const TransportError&) {
      proc_.stop();
      throw;
    } catch (const nlohmann::json::exception& e) {
      proc_.stop();
      throw TransportError(std::string("bad response from '") + proc_.command() +
                           "': " + e.what());
    }
    if (resp.contains("error")) {
      const std::string msg = resp["error"].is_string() ? resp["error"].get<std::string>()
                                                       : resp["error"].dump();
      if (!resp.value("retryable", true)) throw InvalidOutputError(msg);
      throw TransportError(msg);
    }
    return resp;
  }

 private:
  std::mutex mu_;
  Subprocess proc_;
};

}  // namespace langpref
