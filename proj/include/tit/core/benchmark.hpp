#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tit/core/error.hpp"
#include "tit/core/hash.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/core/types.hpp"

namespace tit {

/// A benchmark set on disk:
///
///   <root>/prompts.jsonl   one PromptRecord per line
///   <root>/images.jsonl    one ImageRecord per line
///   <root>/images/<hash>   image payloads addressed by content hash
struct BenchmarkSet {
  fs::path root;
  std::vector<PromptRecord> prompts;
  std::vector<ImageRecord> images;

  const PromptRecord& prompt(std::string_view id) const {
    for (const auto& p : prompts)
      if (p.id == id) return p;
    throw Error(Errc::KeyMismatch, "unknown prompt id '" + std::string(id) + "'", {{"prompt_id", id}});
  }

  std::vector<const ImageRecord*> images_for(std::string_view prompt_id) const {
    std::vector<const ImageRecord*> out;
    for (const auto& im : images)
      if (im.prompt_id == prompt_id) out.push_back(&im);
    return out;
  }

  fs::path payload_path(const ImageRecord& im) const {
    fs::path p(im.media_path);
    return p.is_absolute() ? p : root / p;
  }

  /// Reads the payload and checks it against the recorded content hash.
  std::string load_payload(const ImageRecord& im) const {
    const auto path = payload_path(im);
    if (!fs::exists(path))
      throw Error(Errc::MissingPayload, "missing image payload for " + im.content_hash,
                  {{"content_hash", im.content_hash}, {"path", path.string()}});
    auto bytes = read_file_bytes(path);
    if (content_hash(bytes) != im.content_hash)
      throw Error(Errc::HashMismatch, "payload does not match content hash " + im.content_hash,
                  {{"content_hash", im.content_hash}, {"path", path.string()}});
    return bytes;
  }

  /// image content hash -> model id
  std::map<Digest, std::string> model_of_image() const {
    std::map<Digest, std::string> m;
    for (const auto& im : images) m[im.content_hash] = im.model_id;
    return m;
  }
};

struct ValidationIssue {
  Errc code;
  std::string message;
  nlohmann::json context;
};

/// Loads prompts.jsonl and images.jsonl. Structural errors (unparseable
/// records, duplicate ids) throw; per-record admission problems are left for
/// validate_benchmark.
inline BenchmarkSet load_benchmark(const fs::path& root) {
  BenchmarkSet b;
  b.root = root;
  if (!fs::is_directory(root))
    throw Error(Errc::IoError, "benchmark directory not found: " + root.string(), {{"path", root.string()}});
  b.prompts = read_jsonl_as<PromptRecord>(root / "prompts.jsonl");
  b.images = read_jsonl_as<ImageRecord>(root / "images.jsonl");

  std::set<std::string> ids;
  for (const auto& p : b.prompts)
    if (!ids.insert(p.id).second) throw Error(Errc::ParseError, "duplicate prompt id '" + p.id + "'", {{"id", p.id}});
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& im : b.images) {
    if (!ids.count(im.prompt_id))
      throw Error(Errc::KeyMismatch, "image references unknown prompt '" + im.prompt_id + "'",
                  {{"prompt_id", im.prompt_id}, {"content_hash", im.content_hash}});
    if (!keys.emplace(im.prompt_id, im.model_id).second)
      throw Error(Errc::DuplicateImage, "duplicate (prompt_id, model_id) pair",
                  {{"prompt_id", im.prompt_id}, {"model_id", im.model_id}});
  }
  return b;
}

/// Full check: admission of every prompt, payload presence and hash match.
inline std::vector<ValidationIssue> validate_benchmark(const BenchmarkSet& b) {
  std::vector<ValidationIssue> issues;
  for (const auto& p : b.prompts) {
    if (!p.admitted)
      issues.push_back({Errc::WordCountBelowMinimum,
                        "prompt '" + p.id + "' has " + std::to_string(p.word_count) + " words",
                        {{"id", p.id}, {"word_count", p.word_count}}});
  }
  for (const auto& im : b.images) {
    try {
      (void)b.load_payload(im);
    } catch (const Error& e) {
      issues.push_back({e.code(), e.what(), e.context()});
    }
  }
  return issues;
}

/// Writes a benchmark set; payloads are stored under images/<hash>.
inline void write_benchmark(const fs::path& root, const std::vector<PromptRecord>& prompts,
                            const std::vector<std::pair<ImageRecord, std::string>>& images_with_bytes) {
  fs::create_directories(root / "images");
  std::vector<ImageRecord> images;
  for (auto [im, bytes] : images_with_bytes) {
    im.content_hash = content_hash(bytes);
    im.media_path = "images/" + im.content_hash;
    write_file_atomic(root / im.media_path, bytes);
    images.push_back(std::move(im));
  }
  write_jsonl(root / "prompts.jsonl", prompts);
  write_jsonl(root / "images.jsonl", images);
}

}  // namespace tit
