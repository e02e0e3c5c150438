#pragma once

#include <string>

#include "tit/core/benchmark.hpp"
#include "tit/core/error.hpp"
#include "tit/core/types.hpp"
#include "tit/gateway/gateway.hpp"
#include "tit/gateway/profile.hpp"
#include "tit/metric/cosine.hpp"

namespace tit::metric {

using gateway::Gateway;
using gateway::MetricConfig;
using gateway::PayloadLoader;
using gateway::ProfileSet;

namespace detail {

/// Runs `f`, tagging any tit::Error with the pipeline stage.
template <class F>
auto at_stage(Stage stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw e.with_stage(stage);
  }
}

inline void require_metric(const MetricConfig& cfg, std::initializer_list<std::string_view> ids) {
  for (auto id : ids)
    if (cfg.metric_id == id) return;
  throw Error(Errc::ConfigError, "metric config '" + cfg.metric_id + "' used with the wrong scorer",
              {{"metric_id", cfg.metric_id}});
}

}  // namespace detail

/// Everything a scorer needs besides the (prompt, image) pair.
struct ScoringContext {
  Gateway& gateway;
  const ProfileSet& profiles;
};

/// Caption the image, embed prompt and caption, cosine of the two vectors.
inline ScoreRecord tit_score(const PromptRecord& prompt, const ImageRecord& image, const PayloadLoader& bytes,
                             const MetricConfig& cfg, ScoringContext ctx) {
  detail::require_metric(cfg, {"tit"});
  const auto& vlm = ctx.profiles.get(cfg.vlm_profile_id);
  const auto& embedder = ctx.profiles.get(cfg.embedder_profile_id.value_or(""));
  const auto caption = detail::at_stage(Stage::caption, [&] {
    return ctx.gateway.generate_caption(image, bytes, vlm, cfg.template_id);
  });
  const double value = detail::at_stage(Stage::embed, [&] {
    const auto vp = ctx.gateway.embed_text(prompt.text, embedder);
    const auto vc = ctx.gateway.embed_text(caption.text, embedder);
    return cosine_similarity(vp, vc);
  });
  return {prompt.id, image.content_hash, cfg.metric_id, value, kCosineScale};
}

/// Caption the image, then a judge model rates prompt/caption consistency.
/// Also serves "self-eval", where the judge is the captioning VLM.
inline ScoreRecord tit_score_llm(const PromptRecord& prompt, const ImageRecord& image, const PayloadLoader& bytes,
                                 const MetricConfig& cfg, ScoringContext ctx) {
  detail::require_metric(cfg, {"tit-llm", "self-eval"});
  const auto& vlm = ctx.profiles.get(cfg.vlm_profile_id);
  const auto& judge = ctx.profiles.get(cfg.judge_profile_id.value_or(""));
  const auto caption = detail::at_stage(Stage::caption, [&] {
    return ctx.gateway.generate_caption(image, bytes, vlm, cfg.template_id);
  });
  const double value = detail::at_stage(Stage::judge, [&] {
    return ctx.gateway.judge_similarity(prompt.text, caption.text, judge).score;
  });
  return {prompt.id, image.content_hash, cfg.metric_id, value, kJudgeScale};
}

/// The VLM scores prompt/image consistency in one call.
inline ScoreRecord lmm_direct_score(const PromptRecord& prompt, const ImageRecord& image, const PayloadLoader& bytes,
                                    const MetricConfig& cfg, ScoringContext ctx) {
  detail::require_metric(cfg, {"lmm-direct"});
  const auto& vlm = ctx.profiles.get(cfg.vlm_profile_id);
  const double value = detail::at_stage(Stage::judge, [&] {
    return ctx.gateway.direct_score(prompt.text, image, bytes, vlm, cfg.template_id).score;
  });
  return {prompt.id, image.content_hash, cfg.metric_id, value, kJudgeScale};
}

/// Dispatches on metric_id.
inline ScoreRecord score(const PromptRecord& prompt, const ImageRecord& image, const PayloadLoader& bytes,
                         const MetricConfig& cfg, ScoringContext ctx) {
  if (cfg.metric_id == "tit") return tit_score(prompt, image, bytes, cfg, ctx);
  if (cfg.metric_id == "tit-llm" || cfg.metric_id == "self-eval") return tit_score_llm(prompt, image, bytes, cfg, ctx);
  if (cfg.metric_id == "lmm-direct") return lmm_direct_score(prompt, image, bytes, cfg, ctx);
  throw Error(Errc::ConfigError, "unknown metric '" + cfg.metric_id + "'", {{"metric_id", cfg.metric_id}});
}

}  // namespace tit::metric
