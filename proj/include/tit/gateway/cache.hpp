#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "tit/core/error.hpp"
#include "tit/core/hash.hpp"
#include "tit/core/jsonl.hpp"

namespace tit::gateway {

enum class CacheKind { caption, embedding, judgment, direct };

inline std::string_view to_string(CacheKind k) {
  switch (k) {
    case CacheKind::caption: return "caption";
    case CacheKind::embedding: return "embedding";
    case CacheKind::judgment: return "judgment";
    case CacheKind::direct: return "direct";
  }
  return "";
}

/// Key over (operation kind, input hashes, profile id, template id).
inline Digest cache_key(CacheKind kind, std::initializer_list<std::string_view> input_hashes,
                        std::string_view profile_id, std::string_view template_id) {
  Sha256 h;
  auto field = [&](std::string_view f) { h.update(std::to_string(f.size())).update(":").update(f); };
  field(to_string(kind));
  for (auto ih : input_hashes) field(ih);
  field(profile_id);
  field(template_id);
  return h.hex();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct CacheStats {
  std::size_t distinct_keys = 0;      // keys looked up during this session
  std::size_t preexisting_hits = 0;   // of those, present on disk before the session
  double hit_rate() const {
    return distinct_keys == 0 ? 0.0 : static_cast<double>(preexisting_hits) / static_cast<double>(distinct_keys);
  }
};

/// Persistent content-addressed cache. Layout:
///
///   <root>/<kind>/<first 2 hex of key>/<key>.json
///
/// Each entry file is {"key", "kind", "created_at", "payload"} written via
/// temp file + rename. Entries are immutable once stored. Reads are shared;
/// stores are serialized through one writer lock.
class Cache {
 public:
  explicit Cache(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& root() const { return root_; }

  fs::path path_for(CacheKind kind, const Digest& key) const {
    return root_ / std::string(to_string(kind)) / key.substr(0, 2) / (key + ".json");
  }

  std::optional<nlohmann::json> lookup(CacheKind kind, const Digest& key) {
    {
      std::shared_lock lock(mu_);
      if (auto it = index_.find(key); it != index_.end()) {
        note_lookup(key, false);
        return it->second;
      }
    }
    std::unique_lock lock(mu_);
    if (auto it = index_.find(key); it != index_.end()) {
      note_lookup(key, false);
      return it->second;
    }
    const auto path = path_for(kind, key);
    if (fs::exists(path)) {
      try {
        auto entry = read_json(path);
        if (entry.value("key", "") == key && entry.contains("payload")) {
          auto payload = entry.at("payload");
          index_[key] = payload;
          note_lookup(key, true);
          return payload;
        }
      } catch (const Error&) {
        // unreadable entry: treated as a miss and overwritten by the next store
      }
    }
    note_lookup(key, false);
    return std::nullopt;
  }

  void store(CacheKind kind, const Digest& key, const nlohmann::json& payload) {
    std::unique_lock lock(mu_);
    if (index_.count(key)) return;
    nlohmann::json entry{{"key", key}, {"kind", std::string(to_string(kind))}, {"created_at", utc_timestamp()},
                         {"payload", payload}};
    write_file_atomic(path_for(kind, key), entry.dump() + "\n");
    index_[key] = payload;
  }

  CacheStats stats() const {
    std::lock_guard g(stats_mu_);
    return {seen_.size(), preexisting_.size()};
  }

 private:
  // A key counts as pre-existing when its first lookup in this session was
  // answered from disk.
  void note_lookup(const Digest& key, bool from_disk) {
    std::lock_guard g(stats_mu_);
    if (seen_.insert(key).second && from_disk) preexisting_.insert(key);
  }

  fs::path root_;
  mutable std::shared_mutex mu_;
  std::map<Digest, nlohmann::json> index_;
  mutable std::mutex stats_mu_;
  std::set<Digest> seen_;
  std::set<Digest> preexisting_;
};

}  // namespace tit::gateway
