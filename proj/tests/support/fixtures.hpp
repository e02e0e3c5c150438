#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tit/core/benchmark.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/core/types.hpp"

namespace tit::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("tit-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

/// A prompt of `words` words that mentions `tag` so prompts differ.
inline std::string long_prompt(const std::string& tag, int words = 260) {
  static const char* pool[] = {"a",     "lighthouse", "stands", "on",   "a",     "rocky", "cliff",  "above",
                               "the",   "grey",       "sea",    "while", "warm", "amber", "light",  "spills",
                               "from",  "its",        "lamp",   "over", "wet",   "stone", "and",    "moss"};
  std::string s = tag;
  for (int i = 1; i < words; ++i) {
    s += ' ';
    s += pool[i % 24];
  }
  return s;
}

/// Not a real PNG, just the magic bytes and a unique body.
inline std::string fake_png(const std::string& id) { return std::string("\x89PNG\r\n\x1a\n", 8) + "payload:" + id; }

inline const std::vector<std::string>& fixture_models() {
  static const std::vector<std::string> m{"model-alpha", "model-beta", "model-gamma"};
  return m;
}

/// prompts.jsonl, images.jsonl and payloads for n_prompts x models.
inline BenchmarkSet make_benchmark(const fs::path& root, int n_prompts,
                                   const std::vector<std::string>& models = fixture_models()) {
  std::vector<PromptRecord> prompts;
  std::vector<std::pair<ImageRecord, std::string>> images;
  for (int p = 0; p < n_prompts; ++p) {
    const auto id = "p" + std::to_string(p + 1);
    prompts.push_back(validate_prompt(id, long_prompt(id), {"Nature & Ecology"}, {"coastal"}));
    for (const auto& m : models) {
      ImageRecord im;
      im.prompt_id = id;
      im.model_id = m;
      images.emplace_back(im, fake_png(id + "/" + m));
    }
  }
  write_benchmark(root, prompts, images);
  return load_benchmark(root);
}

/// Profiles for vlm, embedder and judge on one endpoint.
inline nlohmann::json profiles_json(const std::string& base_url, int retries = 1) {
  auto prof = [&](const char* kind, const char* model) {
    return nlohmann::json{{"endpoint", base_url}, {"model_name", model}, {"kind", kind},
                          {"retries", retries},   {"retry_backoff_ms", 5}, {"timeout", 10}};
  };
  return {{"profiles",
           {{"vlm-mock", prof("vlm", "mock-vlm")},
            {"embed-mock", prof("embedder", "mock-embed")},
            {"judge-mock", prof("judge", "mock-judge")}}},
          {"metrics",
           {{"tit", {{"vlm", "vlm-mock"}, {"embedder", "embed-mock"}}},
            {"tit-llm", {{"vlm", "vlm-mock"}, {"judge", "judge-mock"}}},
            {"self-eval", {{"vlm", "vlm-mock"}, {"judge", "vlm-mock"}}},
            {"lmm-direct", {{"vlm", "vlm-mock"}}}}}};
}

inline fs::path write_profiles(const fs::path& path, const std::string& base_url, int retries = 1) {
  write_json(path, profiles_json(base_url, retries));
  return path;
}

}  // namespace tit::testing
