#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tit/core/error.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/core/text.hpp"
#include "tit/gateway/templates.hpp"

namespace tit::gateway {

enum class ProfileKind { vlm, embedder, judge };

inline std::string_view to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::vlm: return "vlm";
    case ProfileKind::embedder: return "embedder";
    case ProfileKind::judge: return "judge";
  }
  return "";
}

inline ProfileKind parse_kind(std::string_view s) {
  if (s == "vlm") return ProfileKind::vlm;
  if (s == "embedder") return ProfileKind::embedder;
  if (s == "judge") return ProfileKind::judge;
  throw Error(Errc::ConfigError, "unknown profile kind '" + std::string(s) + "'");
}

struct ModelProfile {
  std::string profile_id;
  std::string endpoint_url;  // base URL, e.g. http://host:8000/v1
  std::string model_name;
  std::string api_key_env;   // empty: no Authorization header
  ProfileKind kind = ProfileKind::vlm;
  double request_timeout = 120.0;  // seconds
  int max_retries = 3;
  double temperature = 0.0;
  int retry_backoff_ms = 500;

  friend bool operator==(const ModelProfile&, const ModelProfile&) = default;
};

/// Which profiles a metric uses.
struct MetricConfig {
  std::string metric_id;
  std::string vlm_profile_id;
  std::optional<std::string> embedder_profile_id;
  std::optional<std::string> judge_profile_id;
  std::string template_id;  // caption template (tit, tit-llm, self-eval) or direct-score template

  friend bool operator==(const MetricConfig&, const MetricConfig&) = default;
};

/// [run] table of a profiles file; every field optional.
struct RunDefaults {
  std::optional<int> concurrency;
  std::optional<std::string> cache_dir;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

struct ProfileSet {
  std::map<std::string, ModelProfile> profiles;
  std::map<std::string, MetricConfig> metrics;
  RunDefaults run;

  const ModelProfile& get(const std::string& id) const {
    auto it = profiles.find(id);
    if (it == profiles.end()) throw Error(Errc::UnknownProfile, "unknown profile '" + id + "'", {{"profile_id", id}});
    return it->second;
  }

  /// First profile of a kind in id order.
  std::optional<std::string> first_of(ProfileKind k) const {
    for (const auto& [id, p] : profiles)
      if (p.kind == k) return id;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// TOML subset reader: [table] / [a.b] headers, key = value with basic
// strings, integers, floats and booleans, '#' comments. Enough for
// profile files; arrays and inline tables are rejected.

namespace detail {

inline nlohmann::json parse_toml_value(const std::string& raw, std::size_t lineno) {
  const auto v = trim(raw);
  auto fail = [&](const std::string& why) {
    return Error(Errc::ConfigError, "line " + std::to_string(lineno) + ": " + why, {{"line", lineno}});
  };
  if (v.empty()) throw fail("missing value");
  if (v.front() == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < v.size() && v[i] != '"'; ++i) {
      if (v[i] == '\\' && i + 1 < v.size()) {
        const char e = v[++i];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: throw fail(std::string("unsupported escape \\") + e);
        }
      } else {
        out += v[i];
      }
    }
    if (i >= v.size()) throw fail("unterminated string");
    if (!trim(v.substr(i + 1)).empty()) throw fail("trailing characters after string");
    return out;
  }
  if (v.front() == '\'') {
    const auto end = v.find('\'', 1);
    if (end == std::string::npos) throw fail("unterminated literal string");
    return v.substr(1, end - 1);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::string num;
  for (char c : v)
    if (c != '_') num += c;
  try {
    std::size_t pos = 0;
    if (num.find_first_of(".eE") == std::string::npos) {
      const long long i = std::stoll(num, &pos);
      if (pos == num.size()) return i;
    } else {
      const double d = std::stod(num, &pos);
      if (pos == num.size()) return d;
    }
  } catch (const std::exception&) {
  }
  throw fail("unsupported value '" + v + "'");
}

inline std::string strip_comment(const std::string& line) {
  bool in_basic = false, in_literal = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && !in_literal && (i == 0 || line[i - 1] != '\\')) in_basic = !in_basic;
    else if (c == '\'' && !in_basic) in_literal = !in_literal;
    else if (c == '#' && !in_basic && !in_literal) return line.substr(0, i);
  }
  return line;
}

}  // namespace detail

/// Parses the TOML subset into a JSON object tree.
inline nlohmann::json parse_toml(std::istream& in) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json::json_pointer current("");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(detail::strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3 || t[1] == '[')
        throw Error(Errc::ConfigError, "line " + std::to_string(lineno) + ": malformed table header", {{"line", lineno}});
      std::string ptr;
      std::stringstream parts(t.substr(1, t.size() - 2));
      std::string part;
      while (std::getline(parts, part, '.')) {
        auto name = trim(part);
        if (name.size() >= 2 && name.front() == '"' && name.back() == '"') name = name.substr(1, name.size() - 2);
        if (name.empty())
          throw Error(Errc::ConfigError, "line " + std::to_string(lineno) + ": empty table name", {{"line", lineno}});
        ptr += "/" + name;
      }
      current = nlohmann::json::json_pointer(ptr);
      if (!root.contains(current)) root[current] = nlohmann::json::object();
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::ConfigError, "line " + std::to_string(lineno) + ": expected key = value", {{"line", lineno}});
    auto key = trim(t.substr(0, eq));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    root[current][key] = detail::parse_toml_value(t.substr(eq + 1), lineno);
  }
  return root;
}

namespace detail {

inline ModelProfile profile_from_json(const std::string& id, const nlohmann::json& j) {
  try {
    ModelProfile p;
    p.profile_id = id;
    p.endpoint_url = j.at("endpoint").get<std::string>();
    p.model_name = j.at("model_name").get<std::string>();
    p.kind = parse_kind(j.at("kind").get<std::string>());
    p.api_key_env = j.value("api_key_env", "");
    p.request_timeout = j.value("timeout", p.request_timeout);
    p.max_retries = j.value("retries", p.max_retries);
    p.temperature = j.value("temperature", 0.0);
    p.retry_backoff_ms = j.value("retry_backoff_ms", p.retry_backoff_ms);
    while (!p.endpoint_url.empty() && p.endpoint_url.back() == '/') p.endpoint_url.pop_back();
    if (p.max_retries < 0 || p.request_timeout <= 0)
      throw Error(Errc::ConfigError, "profile '" + id + "': retries must be >= 0 and timeout > 0");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, "profile '" + id + "': " + e.what(), {{"profile_id", id}});
  }
}

}  // namespace detail

/// Resolves and checks a metric configuration against the profile set.
inline void check_metric(const MetricConfig& m, const ProfileSet& set) {
  auto need_kind = [&](const std::string& id, std::initializer_list<ProfileKind> kinds, const char* role) {
    const auto& p = set.get(id);
    for (auto k : kinds)
      if (p.kind == k) return;
    throw Error(Errc::ProfileKindMismatch,
                "metric '" + m.metric_id + "': profile '" + id + "' (kind " + std::string(to_string(p.kind)) +
                    ") cannot serve as " + role,
                {{"metric_id", m.metric_id}, {"profile_id", id}});
  };
  auto fail = [&](const std::string& why) {
    return Error(Errc::ConfigError, "metric '" + m.metric_id + "': " + why, {{"metric_id", m.metric_id}});
  };
  need_kind(m.vlm_profile_id, {ProfileKind::vlm}, "vlm");
  if (m.metric_id == "tit") {
    if (!m.embedder_profile_id) throw fail("requires an embedder profile");
    need_kind(*m.embedder_profile_id, {ProfileKind::embedder}, "embedder");
  } else if (m.metric_id == "tit-llm") {
    if (!m.judge_profile_id) throw fail("requires a judge profile");
    need_kind(*m.judge_profile_id, {ProfileKind::judge, ProfileKind::vlm}, "judge");
  } else if (m.metric_id == "self-eval") {
    if (m.judge_profile_id != m.vlm_profile_id) throw fail("judge profile must equal the vlm profile");
  } else if (m.metric_id != "lmm-direct") {
    throw fail("unknown metric id (expected tit, tit-llm, lmm-direct or self-eval)");
  }
}

/// Builds a MetricConfig from a [metrics.<id>] table, or from the first
/// profile of each needed kind when the table is absent.
inline MetricConfig resolve_metric(const std::string& metric_id, const ProfileSet& set) {
  if (auto it = set.metrics.find(metric_id); it != set.metrics.end()) {
    check_metric(it->second, set);
    return it->second;
  }
  MetricConfig m;
  m.metric_id = metric_id;
  m.template_id = default_template_for(metric_id);
  auto vlm = set.first_of(ProfileKind::vlm);
  if (!vlm) throw Error(Errc::ConfigError, "no vlm profile configured", {{"metric_id", metric_id}});
  m.vlm_profile_id = *vlm;
  if (metric_id == "tit") m.embedder_profile_id = set.first_of(ProfileKind::embedder);
  if (metric_id == "tit-llm") m.judge_profile_id = set.first_of(ProfileKind::judge);
  if (metric_id == "self-eval") m.judge_profile_id = m.vlm_profile_id;
  check_metric(m, set);
  return m;
}

inline ProfileSet profile_set_from_json(const nlohmann::json& root) {
  ProfileSet set;
  if (root.contains("profiles"))
    for (const auto& [id, j] : root.at("profiles").items()) set.profiles[id] = detail::profile_from_json(id, j);
  if (root.contains("metrics")) {
    for (const auto& [id, j] : root.at("metrics").items()) {
      MetricConfig m;
      m.metric_id = id;
      m.vlm_profile_id = j.at("vlm").get<std::string>();
      if (j.contains("embedder")) m.embedder_profile_id = j.at("embedder").get<std::string>();
      if (j.contains("judge")) m.judge_profile_id = j.at("judge").get<std::string>();
      m.template_id = j.value("template_id", default_template_for(id));
      set.metrics[id] = std::move(m);
    }
  }
  if (root.contains("run")) {
    const auto& r = root.at("run");
    if (r.contains("concurrency")) set.run.concurrency = r.at("concurrency").get<int>();
    if (r.contains("cache_dir")) set.run.cache_dir = r.at("cache_dir").get<std::string>();
    if (r.contains("out")) set.run.out = r.at("out").get<std::string>();
    if (r.contains("seed")) set.run.seed = r.at("seed").get<std::uint64_t>();
  }
  for (const auto& [id, m] : set.metrics) check_metric(m, set);
  return set;
}

/// Loads a profiles file (.toml subset, or .json).
inline ProfileSet load_profiles(const fs::path& path) {
  if (path.extension() == ".json") return profile_set_from_json(read_json(path));
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string(), {{"path", path.string()}});
  return profile_set_from_json(parse_toml(in));
}

}  // namespace tit::gateway
