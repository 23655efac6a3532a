#pragma once

#include "gmddf/gm_json.hpp"

#include <filesystem>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace gmddf {

/// Reads a TOML (by .toml extension) or JSON config into a JSON document.
inline Json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  if (std::filesystem::path(path).extension() == ".toml") {
    try {
      const auto tbl = toml::parse_file(path);
      std::ostringstream os;
      os << toml::json_formatter{tbl};
      return Json::parse(os.str());
    } catch (const toml::parse_error& e) {
      std::ostringstream os;
      os << path << ":" << e.source().begin.line << ": " << e.description();
      throw InputError(os.str());
    }
  }
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

/// Typed lookup with a default; type errors name the key.
template <typename T>
T config_get(const Json& j, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw InputError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace gmddf
