#pragma once

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "tit/core/error.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/gateway/profile.hpp"

namespace tit::harness {

struct RunConfig {
  fs::path benchmark;
  fs::path profiles;
  std::vector<std::string> metrics;
  int concurrency = 4;
  fs::path cache_dir = "cache";
  fs::path out = "out";
  std::uint64_t seed = 0;
  int retry_length = 0;
};

/// Values given on the command line; unset fields fall back to the
/// environment, then the profiles file [run] table, then defaults.
struct RunOverrides {
  std::optional<int> concurrency;
  std::optional<std::string> cache_dir;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

namespace detail {

inline std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

template <class T>
T parse_env_number(const char* name, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<T>(n);
  } catch (const std::exception&) {
    throw Error(Errc::ConfigError, std::string(name) + " must be an integer, got '" + v + "'", {{"variable", name}});
  }
}

}  // namespace detail

/// CLI flags > TITSCORE_* environment > profiles file [run] > defaults.
inline void apply_precedence(RunConfig& cfg, const RunOverrides& cli, const gateway::RunDefaults& file) {
  using detail::env;
  if (cli.concurrency) cfg.concurrency = *cli.concurrency;
  else if (auto v = env("TITSCORE_CONCURRENCY")) cfg.concurrency = detail::parse_env_number<int>("TITSCORE_CONCURRENCY", *v);
  else if (file.concurrency) cfg.concurrency = *file.concurrency;

  if (cli.cache_dir) cfg.cache_dir = *cli.cache_dir;
  else if (auto v = env("TITSCORE_CACHE_DIR")) cfg.cache_dir = *v;
  else if (file.cache_dir) cfg.cache_dir = *file.cache_dir;

  if (cli.out) cfg.out = *cli.out;
  else if (auto v = env("TITSCORE_OUT")) cfg.out = *v;
  else if (file.out) cfg.out = *file.out;

  if (cli.seed) cfg.seed = *cli.seed;
  else if (auto v = env("TITSCORE_SEED")) cfg.seed = detail::parse_env_number<std::uint64_t>("TITSCORE_SEED", *v);
  else if (file.seed) cfg.seed = *file.seed;

  if (cfg.concurrency < 1)
    throw Error(Errc::ConfigError, "concurrency must be >= 1", {{"concurrency", cfg.concurrency}});
}

}  // namespace tit::harness
