#pragma once

#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "lnp/errors.hpp"

namespace lnp {

using json = nlohmann::json;

// Calls fn(line_number, parsed_object) for every non-blank line of a JSONL
// file. Line numbers are 1-based. Parse failures report file and line.
inline void for_each_jsonl(const std::string& path,
                           const std::function<void(int, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw data_error(path + ":" + std::to_string(line_no) +
                       ": malformed JSON line: " + e.what());
    }
    if (!obj.is_object())
      throw data_error(path + ":" + std::to_string(line_no) +
                       ": expected a JSON object");
    fn(line_no, obj);
  }
}

inline const json& require_field(const json& obj, const char* key,
                                 const std::string& path, int line_no) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw data_error(path + ":" + std::to_string(line_no) +
                     ": missing field \"" + key + "\"");
  return *it;
}

inline std::string require_string(const json& obj, const char* key,
                                  const std::string& path, int line_no) {
  const json& v = require_field(obj, key, path, line_no);
  if (!v.is_string())
    throw data_error(path + ":" + std::to_string(line_no) + ": field \"" +
                     key + "\" must be a string");
  return v.get<std::string>();
}

inline double require_number(const json& obj, const char* key,
                             const std::string& path, int line_no) {
  const json& v = require_field(obj, key, path, line_no);
  if (!v.is_number())
    throw data_error(path + ":" + std::to_string(line_no) + ": field \"" +
                     key + "\" must be a number");
  return v.get<double>();
}

inline bool require_bool(const json& obj, const char* key,
                         const std::string& path, int line_no) {
  const json& v = require_field(obj, key, path, line_no);
  if (!v.is_boolean())
    throw data_error(path + ":" + std::to_string(line_no) + ": field \"" +
                     key + "\" must be a boolean");
  return v.get<bool>();
}

}  // namespace lnp
