#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "rodenet/error.hpp"

namespace rodenet {

/// Rejects objects with missing or unknown keys.
inline void require_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (auto k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
  for (auto k : keys)
    if (!j.contains(std::string(k))) throw ConfigError("missing key '" + std::string(k) + "' in " + where);
}

/// Runs a parser and reports JSON type errors as configuration errors.
template <class F>
auto parse_config(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid " + where + ": " + e.what());
  }
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp);
    out << j.dump() << '\n';
    if (!out) throw IoError("failed while writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("malformed JSON in " + path + ": " + e.what());
  }
}

/// Copy of `j` with a "provenance" member, or `j` itself when `prov` is null.
inline nlohmann::json with_provenance(nlohmann::json j, const nlohmann::json& prov) {
  if (!prov.is_null() && j.is_object()) j["provenance"] = prov;
  return j;
}

/// Copy of `j` without its "provenance" member.
inline nlohmann::json without_provenance(nlohmann::json j) {
  if (j.is_object()) j.erase("provenance");
  return j;
}

}  // namespace rodenet
