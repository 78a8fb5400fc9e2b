/*
 * Copyright 2026 The soundexpl Authors.
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

// Run manifests: configuration, seeds and SHA-256 digests of the files a
// command read and wrote.

#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <map>
#include <string>

#include "json.hpp"
#include "soundexpl/error.hpp"

namespace soundexpl {

inline constexpr const char* kToolName = "soundexpl";
inline constexpr const char* kToolVersion = "0.1.0";

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    out += buf;
  }
  return out;
}

struct RunManifest {
  std::string subcommand;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256

  nlohmann::json to_json() const {
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"subcommand", subcommand},
            {"config", config},
            {"seeds", seeds},
            {"inputs", inputs},
            {"outputs", outputs}};
  }
};

}  // namespace soundexpl
