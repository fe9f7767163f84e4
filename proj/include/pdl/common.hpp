#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace pdl {

/// JSON document type used throughout; insertion order is preserved so that
/// serialized files are stable across reruns.
using json = nlohmann::ordered_json;

/// Malformed or inconsistent input data (files, configs, shape mismatches).
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure (divergence, non-finite estimate, singular system).
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot open file for writing: " + path);
  out << text;
  if (!out) throw data_error("failed writing file: " + path);
}

/// FNV-1a 64-bit content hash, hex encoded. Used for input fingerprints in
/// run manifests.
inline std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace pdl
