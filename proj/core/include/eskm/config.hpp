// Copyright 2026 The eskmeans Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace eskm {

// Flat `key = value` configuration with `#` comments. Keys are consumed as
// they are read; anything left unconsumed is treated as an unknown key so
// that typos fail loudly instead of silently using a default.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_file(const std::filesystem::path& path);
  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin = "<string>");

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key);
  std::string get_string(const std::string& key, const std::string& fallback);
  long long get_int(const std::string& key);
  long long get_int(const std::string& key, long long fallback);
  double get_real(const std::string& key);
  double get_real(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback);

  // Whitespace-separated list of reals, e.g. `sweep_values = 1e-5 1e-3`.
  std::vector<double> get_real_list(const std::string& key);

  void set(const std::string& key, const std::string& value);

  std::vector<std::string> unconsumed_keys() const;
  // Throws ConfigError naming the first unknown key.
  void require_all_consumed() const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  const std::string& origin() const { return origin_; }

 private:
  struct Entry;
  std::string raw(const std::string& key);  // marks consumed
  std::string location(const std::string& key) const;

  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::map<std::string, bool> consumed_;
  std::string origin_;
};

}  // namespace eskm
