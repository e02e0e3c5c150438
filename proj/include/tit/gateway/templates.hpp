#pragma once

#include <cmath>
#include <optional>
#include <regex>
#include <string>
#include <string_view>

#include "tit/core/error.hpp"
#include "tit/core/text.hpp"

namespace tit::gateway {

// Template ids are part of every cache key; bump the version suffix whenever
// the text changes so scores from different wordings never mix.

inline constexpr std::string_view kCaptionTemplateId = "caption-v1";
inline constexpr std::string_view kCaptionTemplate =
    "Please provide a detailed, single-paragraph description of the image in English, "
    "using between 250 and 350 words.";
inline constexpr std::size_t kCaptionMinWords = 250;
inline constexpr std::size_t kCaptionMaxWords = 350;

inline constexpr std::string_view kJudgeTemplateId = "judge-v1";
inline constexpr std::string_view kJudgeSystem =
    "You compare two texts. Rate the semantic consistency between TEXT A (original prompt) and "
    "TEXT B (image description) as a single number from 0 to 100, where 100 means TEXT B describes "
    "exactly what TEXT A asks for and 0 means they are unrelated. Output only the number.";

inline std::string judge_user_message(std::string_view prompt_text, std::string_view caption_text) {
  std::string s = "TEXT A (original prompt):\n";
  s += prompt_text;
  s += "\n\nTEXT B (image description):\n";
  s += caption_text;
  return s;
}

inline constexpr std::string_view kDirectTemplateId = "lmm-direct-v1";
inline constexpr std::string_view kDirectInstruction =
    "Rate how consistently the attached image follows the text prompt below, as a single number from "
    "0 to 100, where 100 means every element of the prompt is depicted faithfully and 0 means the image "
    "is unrelated. Output only the number.\n\nPROMPT:\n";

inline std::string default_template_for(const std::string& metric_id) {
  return metric_id == "lmm-direct" ? std::string(kDirectTemplateId) : std::string(kCaptionTemplateId);
}

/// Extracts a score in [0, 100] from a model reply. The whole trimmed reply
/// is tried as a number first; otherwise the first \d+(\.\d+)? match is used.
inline double parse_judgment(std::string_view reply) {
  const auto t = trim(reply);
  auto in_range = [&](double v) {
    if (v < 0.0 || v > 100.0)
      throw Error(Errc::UnparseableJudgment, "judgment " + std::to_string(v) + " is outside [0, 100]",
                  {{"reply", std::string(reply)}});
    return v;
  };
  if (!t.empty()) {
    std::optional<double> whole;
    try {
      std::size_t pos = 0;
      const double v = std::stod(std::string(t), &pos);
      if (pos == t.size() && std::isfinite(v)) whole = v;
    } catch (const std::exception&) {
    }
    if (whole) return in_range(*whole);
  }
  static const std::regex number(R"(\d+(\.\d+)?)");
  std::smatch m;
  const std::string s(t);
  if (std::regex_search(s, m, number)) return in_range(std::stod(m.str()));
  throw Error(Errc::UnparseableJudgment, "no numeric judgment in reply", {{"reply", std::string(reply)}});
}

}  // namespace tit::gateway
