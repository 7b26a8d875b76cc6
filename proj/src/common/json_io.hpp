#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "saegraph/common.hpp"

namespace saegraph::detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) {
    if (!std::filesystem::exists(path)) throw MissingInputError(what + " not found: " + path.string());
    throw IoError("cannot open " + path.string());
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// indent < 0 writes compact JSON.
inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc,
                            int indent = 2) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(indent) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace saegraph::detail
