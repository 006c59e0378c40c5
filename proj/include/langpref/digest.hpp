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

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "langpref/error.hpp"

namespace langpref {

using Sha256 = std::array<unsigned char, 32>;

inline Sha256 sha256(std::string_view data) {
  Sha256 out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("sha256 failed");
  }
  return out;
}

inline std::string to_hex(const Sha256& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(d.size() * 2);
  for (unsigned char c : d) {
    s.push_back(kHex[c >> 4]);
    s.push_back(kHex[c & 15]);
  }
  return s;
}

inline std::string sha256_hex(std::string_view data) {
  return to_hex(sha256(data));
}

// Builds an unambiguous byte string from fields: each field is length-prefixed
// so ("ab","c") and ("a","bc") never collide.
class DigestBuilder {
 public:
  DigestBuilder& add(std::string_view field) {
    buf_ += std::to_string(field.size());
    buf_ += ':';
    buf_ += field;
    return *this;
  }
  DigestBuilder& add(std::int64_t v) { return add(std::to_string(v)); }
  std::string hex() const { return sha256_hex(buf_); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

// Stable 64-bit value derived from a seed and a key. Adding keys never
// changes the value for existing ones.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  DigestBuilder b;
  b.add(static_cast<std::int64_t>(seed)).add(key);
  const Sha256 d = sha256(b.bytes());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
  return v;
}

// Uniform value in [0,1) derived from a seed and a key.
inline double derive_uniform(std::uint64_t seed, std::string_view key) {
  return static_cast<double>(derive_seed(seed, key) >> 11) * 0x1.0p-53;
}

}  // namespace langpref
