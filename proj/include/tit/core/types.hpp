#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tit/core/error.hpp"
#include "tit/core/hash.hpp"
#include "tit/core/text.hpp"

namespace tit {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kMinPromptWords = 250;

// ---------------------------------------------------------------------------
// Themes

enum class Theme {
  SciFiFuture,
  FantasyMythology,
  HistoryCulture,
  SurrealAbstract,
  NatureEcology,
  UrbanDailyLife,
};

inline constexpr std::array<std::pair<Theme, std::string_view>, 6> kThemeNames{{
    {Theme::SciFiFuture, "Sci-Fi & Future"},
    {Theme::FantasyMythology, "Fantasy & Mythology"},
    {Theme::HistoryCulture, "History & Culture"},
    {Theme::SurrealAbstract, "Surreal & Abstract"},
    {Theme::NatureEcology, "Nature & Ecology"},
    {Theme::UrbanDailyLife, "Urban & Daily Life"},
}};

inline std::string_view to_string(Theme t) {
  for (auto& [theme, name] : kThemeNames)
    if (theme == t) return name;
  return "";
}

inline std::optional<Theme> parse_theme(std::string_view name) {
  for (auto& [theme, n] : kThemeNames)
    if (n == name) return theme;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Records

struct PromptRecord {
  std::string id;
  std::string text;
  std::size_t word_count = 0;
  std::set<Theme> primary_themes;
  std::set<std::string> secondary_tags;
  bool admitted = false;

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

struct ImageRecord {
  std::string prompt_id;
  std::string model_id;
  Digest content_hash;
  std::string media_path;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct CaptionRecord {
  Digest image_hash;
  std::string vlm_profile_id;
  std::string template_id;
  std::string text;
  std::size_t word_count = 0;
  std::string created_at;

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

struct EmbeddingVector {
  Digest source_text_hash;
  std::string model_profile_id;
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Checks dim > 0, finite values and non-zero norm.
inline void check_embedding(const EmbeddingVector& v) {
  if (v.values.empty()) throw Error(Errc::DimensionMismatch, "embedding has dimension 0");
  for (double x : v.values)
    if (!std::isfinite(x)) throw Error(Errc::ParseError, "embedding contains a non-finite value");
  if (!(v.norm() > 0.0)) throw Error(Errc::ZeroVector, "embedding has zero norm", {{"dim", v.dim()}});
}

struct Scale {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Scale&, const Scale&) = default;
};

inline constexpr Scale kCosineScale{-1.0, 1.0};
inline constexpr Scale kJudgeScale{0.0, 100.0};

struct ScoreRecord {
  std::string prompt_id;
  Digest image_hash;
  std::string metric_id;
  double value = 0.0;
  Scale scale;

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

inline void check_score(const ScoreRecord& s) {
  if (!std::isfinite(s.value) || !s.scale.contains(s.value))
    throw Error(Errc::ParseError, "score value outside declared scale",
                {{"metric_id", s.metric_id}, {"value", s.value}, {"lo", s.scale.lo}, {"hi", s.scale.hi}});
}

// ---------------------------------------------------------------------------
// Prompt validation

/// Builds a PromptRecord without enforcing the admission threshold; the
/// `admitted` flag reports whether it holds. Throws on invalid input that
/// can never be admitted (invalid UTF-8, empty text, unknown/empty themes).
inline PromptRecord inspect_prompt(std::string id, std::string text, const std::set<std::string>& themes,
                                   std::set<std::string> tags) {
  if (!is_valid_utf8(text)) throw Error(Errc::InvalidUtf8, "prompt text is not valid UTF-8", {{"id", id}});
  PromptRecord r;
  r.word_count = count_words(text);
  if (r.word_count == 0) throw Error(Errc::EmptyText, "prompt text is empty", {{"id", id}});
  if (themes.empty())
    throw Error(Errc::UnknownThemeCategory, "prompt has no primary theme", {{"id", id}});
  for (const auto& t : themes) {
    auto theme = parse_theme(t);
    if (!theme) throw Error(Errc::UnknownThemeCategory, "unknown theme category '" + t + "'", {{"id", id}, {"theme", t}});
    r.primary_themes.insert(*theme);
  }
  r.id = std::move(id);
  r.text = std::move(text);
  r.secondary_tags = std::move(tags);
  r.admitted = r.word_count >= kMinPromptWords && !r.primary_themes.empty();
  return r;
}

/// Validates a prompt for admission to a benchmark set.
inline PromptRecord validate_prompt(std::string id, std::string text, const std::set<std::string>& themes,
                                    std::set<std::string> tags = {}) {
  auto r = inspect_prompt(std::move(id), std::move(text), themes, std::move(tags));
  if (!r.admitted)
    throw Error(Errc::WordCountBelowMinimum,
                "prompt has " + std::to_string(r.word_count) + " words, minimum is " + std::to_string(kMinPromptWords),
                {{"id", r.id}, {"word_count", r.word_count}, {"minimum", kMinPromptWords}});
  return r;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const Theme& t) { j = std::string(to_string(t)); }

inline void from_json(const nlohmann::json& j, Theme& t) {
  auto parsed = parse_theme(j.get<std::string>());
  if (!parsed) throw Error(Errc::UnknownThemeCategory, "unknown theme category '" + j.get<std::string>() + "'");
  t = *parsed;
}

inline void to_json(nlohmann::json& j, const PromptRecord& r) {
  j = {{"schema_version", kSchemaVersion},
       {"id", r.id},
       {"text", r.text},
       {"word_count", r.word_count},
       {"primary_themes", r.primary_themes},
       {"secondary_tags", r.secondary_tags}};
}

/// Parses and re-validates; the stored word_count must match the text.
inline void from_json(const nlohmann::json& j, PromptRecord& r) {
  std::set<std::string> themes;
  for (const auto& t : j.at("primary_themes")) themes.insert(t.get<std::string>());
  auto tags = j.value("secondary_tags", std::set<std::string>{});
  r = inspect_prompt(j.at("id").get<std::string>(), j.at("text").get<std::string>(), themes, std::move(tags));
  if (j.contains("word_count") && j.at("word_count").get<std::size_t>() != r.word_count)
    throw Error(Errc::ParseError, "stored word_count does not match text",
                {{"id", r.id}, {"stored", j.at("word_count")}, {"recomputed", r.word_count}});
}

inline void to_json(nlohmann::json& j, const ImageRecord& r) {
  j = {{"schema_version", kSchemaVersion},
       {"prompt_id", r.prompt_id},
       {"model_id", r.model_id},
       {"content_hash", r.content_hash},
       {"media_path", r.media_path}};
}

inline void from_json(const nlohmann::json& j, ImageRecord& r) {
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.content_hash = j.at("content_hash").get<std::string>();
  if (!is_digest(r.content_hash))
    throw Error(Errc::ParseError, "content_hash is not a 64-char lowercase hex digest", {{"content_hash", r.content_hash}});
  r.media_path = j.value("media_path", "images/" + r.content_hash);
}

inline void to_json(nlohmann::json& j, const CaptionRecord& r) {
  j = {{"schema_version", kSchemaVersion},
       {"image_hash", r.image_hash},
       {"vlm_profile_id", r.vlm_profile_id},
       {"template_id", r.template_id},
       {"text", r.text},
       {"word_count", r.word_count},
       {"created_at", r.created_at}};
}

inline void from_json(const nlohmann::json& j, CaptionRecord& r) {
  r.image_hash = j.at("image_hash").get<std::string>();
  r.vlm_profile_id = j.at("vlm_profile_id").get<std::string>();
  r.template_id = j.at("template_id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.word_count = j.at("word_count").get<std::size_t>();
  r.created_at = j.value("created_at", "");
}

inline void to_json(nlohmann::json& j, const EmbeddingVector& v) {
  j = {{"schema_version", kSchemaVersion},
       {"source_text_hash", v.source_text_hash},
       {"model_profile_id", v.model_profile_id},
       {"dim", v.dim()},
       {"values", v.values}};
}

inline void from_json(const nlohmann::json& j, EmbeddingVector& v) {
  v.source_text_hash = j.at("source_text_hash").get<std::string>();
  v.model_profile_id = j.at("model_profile_id").get<std::string>();
  v.values = j.at("values").get<std::vector<double>>();
  if (j.contains("dim") && j.at("dim").get<std::size_t>() != v.values.size())
    throw Error(Errc::DimensionMismatch, "stored dim does not match values length");
}

inline void to_json(nlohmann::json& j, const ScoreRecord& s) {
  j = {{"schema_version", kSchemaVersion},
       {"prompt_id", s.prompt_id},
       {"image_hash", s.image_hash},
       {"metric_id", s.metric_id},
       {"value", s.value},
       {"scale", {s.scale.lo, s.scale.hi}}};
}

inline void from_json(const nlohmann::json& j, ScoreRecord& s) {
  s.prompt_id = j.at("prompt_id").get<std::string>();
  s.image_hash = j.at("image_hash").get<std::string>();
  s.metric_id = j.at("metric_id").get<std::string>();
  s.value = j.at("value").get<double>();
  const auto& sc = j.at("scale");
  s.scale = {sc.at(0).get<double>(), sc.at(1).get<double>()};
  check_score(s);
}

}  // namespace tit
