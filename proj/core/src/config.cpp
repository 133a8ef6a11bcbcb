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

#include "eskm/config.hpp"

#include <fstream>
#include <sstream>

#include "eskm/error.hpp"

namespace eskm {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path.string());
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text,
                                            const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected `key = value`, got: " + line);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (cfg.values_.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": duplicate key: " + key);
    }
    cfg.values_[key] = value;
    cfg.lines_[key] = lineno;
    cfg.consumed_[key] = false;
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string KeyValueConfig::location(const std::string& key) const {
  auto it = lines_.find(key);
  if (it == lines_.end()) return origin_;
  return origin_ + ":" + std::to_string(it->second);
}

std::string KeyValueConfig::raw(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError(origin_ + ": missing required key: " + key);
  }
  consumed_[key] = true;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key) {
  return raw(key);
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) {
  return has(key) ? raw(key) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key) {
  const std::string v = raw(key);
  try {
    size_t pos = 0;
    const long long out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(location(key) + ": expected integer for `" + key +
                      "`, got: " + v);
  }
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) {
  return has(key) ? get_int(key) : fallback;
}

double KeyValueConfig::get_real(const std::string& key) {
  const std::string v = raw(key);
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(location(key) + ": expected real for `" + key +
                      "`, got: " + v);
  }
}

double KeyValueConfig::get_real(const std::string& key, double fallback) {
  return has(key) ? get_real(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const std::string v = raw(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(location(key) + ": expected boolean for `" + key +
                    "`, got: " + v);
}

std::uint64_t KeyValueConfig::get_seed(const std::string& key,
                                       std::uint64_t fallback) {
  if (!has(key)) return fallback;
  const std::string v = raw(key);
  try {
    size_t pos = 0;
    const std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(location(key) + ": expected unsigned integer for `" +
                      key + "`, got: " + v);
  }
}

std::vector<double> KeyValueConfig::get_real_list(const std::string& key) {
  const std::string v = raw(key);
  std::istringstream in(v);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError(location(key) + ": expected list of reals for `" +
                        key + "`, got token: " + tok);
    }
  }
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  if (!consumed_.count(key)) consumed_[key] = false;
}

std::vector<std::string> KeyValueConfig::unconsumed_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, used] : consumed_) {
    if (!used) out.push_back(key);
  }
  return out;
}

void KeyValueConfig::require_all_consumed() const {
  const auto leftover = unconsumed_keys();
  if (!leftover.empty()) {
    throw ConfigError(location(leftover.front()) +
                      ": unknown config key: " + leftover.front());
  }
}

}  // namespace eskm
