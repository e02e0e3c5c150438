#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tit/core/error.hpp"

namespace tit {

namespace fs = std::filesystem;

/// Reads one JSON value per non-blank line.
inline std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string(), {{"path", path.string()}});
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what(),
                  {{"path", path.string()}, {"line", lineno}});
    }
  }
  return out;
}

template <class T>
std::vector<T> read_jsonl_as(const fs::path& path) {
  std::vector<T> out;
  std::size_t lineno = 0;
  for (const auto& j : read_jsonl(path)) {
    ++lineno;
    try {
      out.push_back(j.get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, path.string() + ": record " + std::to_string(lineno) + ": " + e.what(),
                  {{"path", path.string()}, {"record", lineno}});
    }
  }
  return out;
}

/// Writes `content` to `path` through a temporary file and rename, so readers
/// see either the old or the new file.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string(), {{"path", tmp.string()}});
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(Errc::IoError, "write failed for " + tmp.string(), {{"path", tmp.string()}});
  }
  fs::rename(tmp, path);
}

template <class Range>
void write_jsonl(const fs::path& path, const Range& records) {
  std::string buf;
  for (const auto& r : records) {
    buf += nlohmann::json(r).dump();
    buf += '\n';
  }
  write_file_atomic(path, buf);
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string(), {{"path", path.string()}});
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what(), {{"path", path.string()}});
  }
}

}  // namespace tit
