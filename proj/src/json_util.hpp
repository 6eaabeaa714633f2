#pragma once

#include <initializer_list>
#include <string>

#include "intercnn/error.hpp"
#include "json.hpp"

namespace icnn::detail {

using nlohmann::json;

/// Rejects keys of obj not listed in allowed.
inline void require_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::Config, where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) fail(ErrorKind::Config, "unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, where + "." + key + ": " + e.what());
  }
}

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "cannot parse " + where + ": " + e.what());
  }
}

}  // namespace icnn::detail
