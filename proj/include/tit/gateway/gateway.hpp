#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "tit/core/error.hpp"
#include "tit/core/hash.hpp"
#include "tit/core/text.hpp"
#include "tit/core/types.hpp"
#include "tit/gateway/cache.hpp"
#include "tit/gateway/profile.hpp"
#include "tit/gateway/templates.hpp"
#include "tit/gateway/transport.hpp"

namespace tit::gateway {

using json = nlohmann::json;

/// Produces image bytes on demand; only invoked on a cache miss.
using PayloadLoader = std::function<std::string()>;

struct GatewayOptions {
  int concurrency = 4;
  /// Extra caption requests when the word count falls outside [250, 350].
  int retry_length = 0;
};

inline std::string image_mime_type(std::string_view bytes) {
  auto starts = [&](std::string_view magic) { return bytes.substr(0, magic.size()) == magic; };
  if (starts("\x89PNG")) return "image/png";
  if (starts("\xFF\xD8\xFF")) return "image/jpeg";
  if (starts("GIF8")) return "image/gif";
  if (bytes.size() >= 12 && starts("RIFF") && bytes.substr(8, 4) == "WEBP") return "image/webp";
  return "application/octet-stream";
}

/// Client for OpenAI-compatible chat-completions and embeddings endpoints,
/// fronted by the persistent cache. Concurrent requests for the same key are
/// coalesced into one network call.
class Gateway {
 public:
  Gateway(std::shared_ptr<Cache> cache, GatewayOptions opts = {},
          std::shared_ptr<Transport> transport = std::make_shared<HttpTransport>())
      : cache_(std::move(cache)),
        opts_(opts),
        transport_(std::move(transport)),
        slots_(std::make_unique<std::counting_semaphore<>>(std::max(1, opts.concurrency))) {}

  Cache& cache() { return *cache_; }
  std::size_t network_requests() const { return requests_.load(); }

  // -------------------------------------------------------------------------

  CaptionRecord generate_caption(const ImageRecord& image, const PayloadLoader& load_bytes, const ModelProfile& profile,
                                 std::string_view template_id = kCaptionTemplateId) {
    require_kind(profile, {ProfileKind::vlm}, "caption generation");
    const auto key = cache_key(CacheKind::caption, {image.content_hash}, profile.profile_id, template_id);
    auto payload = fetch(CacheKind::caption, key, [&] {
      const auto bytes = load_bytes();
      const json content = json::array({
          {{"type", "text"}, {"text", kCaptionTemplate}},
          {{"type", "image_url"}, {"image_url", {{"url", data_url(bytes)}}}},
      });
      const json messages = json::array({{{"role", "user"}, {"content", content}}});
      std::string text;
      std::size_t words = 0;
      for (int attempt = 0; attempt <= opts_.retry_length; ++attempt) {
        text = to_single_paragraph(chat(profile, messages));
        words = count_words(text);
        if (words >= kCaptionMinWords && words <= kCaptionMaxWords) break;
        spdlog::warn("caption for {} has {} words (target {}-{}){}", image.content_hash.substr(0, 12), words,
                     kCaptionMinWords, kCaptionMaxWords, attempt < opts_.retry_length ? ", retrying" : "");
      }
      CaptionRecord rec{image.content_hash, profile.profile_id, std::string(template_id), text, words, utc_timestamp()};
      return json(rec);
    });
    return payload.get<CaptionRecord>();
  }

  EmbeddingVector embed_text(std::string_view text, const ModelProfile& profile) {
    require_kind(profile, {ProfileKind::embedder}, "embedding");
    if (trim(text).empty()) throw Error(Errc::EmptyText, "cannot embed empty text");
    const auto text_hash = content_hash(text);
    const auto key = cache_key(CacheKind::embedding, {text_hash}, profile.profile_id, "embedding-v1");
    auto payload = fetch(CacheKind::embedding, key, [&] {
      const json body{{"model", profile.model_name}, {"input", text}};
      const auto res = post(profile, "/embeddings", body);
      EmbeddingVector v;
      v.source_text_hash = text_hash;
      v.model_profile_id = profile.profile_id;
      try {
        v.values = res.at("data").at(0).at("embedding").get<std::vector<double>>();
      } catch (const json::exception& e) {
        throw Error(Errc::EmptyResponse, std::string("embedding response missing data[0].embedding: ") + e.what(),
                    {{"profile_id", profile.profile_id}});
      }
      check_embedding(v);
      return json(v);
    });
    auto v = payload.get<EmbeddingVector>();
    check_embedding(v);
    check_dimension(profile.profile_id, v.dim());
    return v;
  }

  struct Judgment {
    double score = 0.0;
    std::string reply;
  };

  /// Judge LLM rates prompt/caption consistency on [0, 100].
  Judgment judge_similarity(std::string_view prompt_text, std::string_view caption_text, const ModelProfile& profile) {
    require_kind(profile, {ProfileKind::judge, ProfileKind::vlm}, "judging");
    if (trim(prompt_text).empty() || trim(caption_text).empty())
      throw Error(Errc::EmptyText, "judge inputs must be non-empty");
    const auto key = cache_key(CacheKind::judgment, {content_hash(prompt_text), content_hash(caption_text)},
                               profile.profile_id, kJudgeTemplateId);
    auto payload = fetch(CacheKind::judgment, key, [&] {
      const json messages = json::array({
          {{"role", "system"}, {"content", kJudgeSystem}},
          {{"role", "user"}, {"content", judge_user_message(prompt_text, caption_text)}},
      });
      const auto reply = chat(profile, messages);
      const double score = parse_judgment(reply);
      return json{{"template_id", kJudgeTemplateId}, {"profile_id", profile.profile_id}, {"reply", reply},
                  {"score", score}};
    });
    return {payload.at("score").get<double>(), payload.at("reply").get<std::string>()};
  }

  /// One multimodal request: the VLM sees prompt and image and returns a
  /// consistency number on [0, 100].
  Judgment direct_score(std::string_view prompt_text, const ImageRecord& image, const PayloadLoader& load_bytes,
                        const ModelProfile& profile, std::string_view template_id = kDirectTemplateId) {
    require_kind(profile, {ProfileKind::vlm}, "direct scoring");
    const auto key =
        cache_key(CacheKind::direct, {content_hash(prompt_text), image.content_hash}, profile.profile_id, template_id);
    auto payload = fetch(CacheKind::direct, key, [&] {
      const auto bytes = load_bytes();
      std::string instruction(kDirectInstruction);
      instruction += prompt_text;
      const json content = json::array({
          {{"type", "text"}, {"text", instruction}},
          {{"type", "image_url"}, {"image_url", {{"url", data_url(bytes)}}}},
      });
      const auto reply = chat(profile, json::array({{{"role", "user"}, {"content", content}}}));
      const double score = parse_judgment(reply);
      return json{{"template_id", template_id}, {"profile_id", profile.profile_id}, {"reply", reply}, {"score", score}};
    });
    return {payload.at("score").get<double>(), payload.at("reply").get<std::string>()};
  }

 private:
  static void require_kind(const ModelProfile& p, std::initializer_list<ProfileKind> kinds, const char* what) {
    for (auto k : kinds)
      if (p.kind == k) return;
    throw Error(Errc::ProfileKindMismatch,
                "profile '" + p.profile_id + "' of kind " + std::string(to_string(p.kind)) + " cannot be used for " + what,
                {{"profile_id", p.profile_id}});
  }

  static std::string data_url(std::string_view bytes) {
    return "data:" + image_mime_type(bytes) + ";base64," + base64_encode(bytes);
  }

  void check_dimension(const std::string& profile_id, std::size_t dim) {
    std::lock_guard g(dims_mu_);
    auto [it, inserted] = dims_.emplace(profile_id, dim);
    if (!inserted && it->second != dim)
      throw Error(Errc::DimensionMismatch, "embedding dimension changed for profile '" + profile_id + "'",
                  {{"profile_id", profile_id}, {"expected", it->second}, {"got", dim}});
  }

  /// Cache lookup, then a single in-flight computation per key.
  template <class Compute>
  json fetch(CacheKind kind, const Digest& key, Compute&& compute) {
    if (auto hit = cache_->lookup(kind, key)) return *hit;
    std::shared_future<json> fut;
    std::promise<json> promise;
    bool owner = false;
    {
      std::lock_guard g(inflight_mu_);
      if (auto it = inflight_.find(key); it != inflight_.end()) {
        fut = it->second;
      } else {
        fut = promise.get_future().share();
        inflight_.emplace(key, fut);
        owner = true;
      }
    }
    if (!owner) return fut.get();
    try {
      auto hit = cache_->lookup(kind, key);  // a previous owner may have finished in between
      json payload = hit ? *hit : compute();
      if (!hit) cache_->store(kind, key, payload);
      promise.set_value(payload);
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
    {
      std::lock_guard g(inflight_mu_);
      inflight_.erase(key);
    }
    return fut.get();
  }

  std::string chat(const ModelProfile& profile, const json& messages) {
    const json body{{"model", profile.model_name}, {"temperature", profile.temperature}, {"messages", messages}};
    const auto res = post(profile, "/chat/completions", body);
    std::string text;
    try {
      const auto& content = res.at("choices").at(0).at("message").at("content");
      if (content.is_string()) {
        text = content.get<std::string>();
      } else if (content.is_array()) {
        for (const auto& part : content)
          if (part.value("type", "") == "text") text += part.value("text", "");
      }
    } catch (const json::exception&) {
      throw Error(Errc::EmptyResponse, "chat response has no choices[0].message.content",
                  {{"profile_id", profile.profile_id}});
    }
    if (trim(text).empty())
      throw Error(Errc::EmptyResponse, "model returned an empty message", {{"profile_id", profile.profile_id}});
    return text;
  }

  json post(const ModelProfile& profile, const std::string& path, const json& body) {
    std::map<std::string, std::string> headers;
    if (!profile.api_key_env.empty()) {
      const char* key = std::getenv(profile.api_key_env.c_str());
      if (key == nullptr || *key == '\0')
        throw Error(Errc::AuthError, "environment variable " + profile.api_key_env + " is not set",
                    {{"profile_id", profile.profile_id}, {"api_key_env", profile.api_key_env}});
      headers["Authorization"] = std::string("Bearer ") + key;
    }
    const auto url = profile.endpoint_url + path;
    const auto payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= profile.max_retries; ++attempt) {
      if (attempt > 0) {
        const auto delay = std::chrono::milliseconds(static_cast<long>(profile.retry_backoff_ms) << (attempt - 1));
        std::this_thread::sleep_for(delay);
      }
      HttpResponse res;
      {
        slots_->acquire();
        ++requests_;
        try {
          res = transport_->post_json(url, payload, headers, profile.request_timeout);
        } catch (...) {
          slots_->release();
          throw;
        }
        slots_->release();
      }
      if (res.status == 401 || res.status == 403)
        throw Error(Errc::AuthError, "endpoint rejected credentials (HTTP " + std::to_string(res.status) + ")",
                    {{"profile_id", profile.profile_id}, {"status", res.status}, {"url", url}});
      if (res.status >= 200 && res.status < 300) {
        try {
          return json::parse(res.body);
        } catch (const json::exception& e) {
          last_error = std::string("malformed JSON response: ") + e.what();
          continue;
        }
      }
      last_error = res.status == 0 ? res.transport_error : "HTTP " + std::to_string(res.status);
      const bool retryable = res.status == 0 || res.status == 408 || res.status == 429 || res.status >= 500;
      if (!retryable)
        throw Error(Errc::TransportError, "request to " + url + " failed: " + last_error,
                    {{"profile_id", profile.profile_id}, {"status", res.status}, {"url", url}, {"body", res.body}});
    }
    throw Error(Errc::TransportError,
                "request to " + url + " failed after " + std::to_string(profile.max_retries + 1) + " attempt(s): " + last_error,
                {{"profile_id", profile.profile_id}, {"url", url}, {"attempts", profile.max_retries + 1}});
  }

  std::shared_ptr<Cache> cache_;
  GatewayOptions opts_;
  std::shared_ptr<Transport> transport_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
  std::atomic<std::size_t> requests_{0};
  std::mutex inflight_mu_;
  std::map<Digest, std::shared_future<json>> inflight_;
  std::mutex dims_mu_;
  std::map<std::string, std::size_t> dims_;
};

}  // namespace tit::gateway
