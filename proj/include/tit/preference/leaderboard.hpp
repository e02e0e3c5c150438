#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tit/core/error.hpp"
#include "tit/preference/ranking.hpp"
#include "tit/stats/rank_metrics.hpp"

namespace tit::pref {

struct LeaderboardEntry {
  double average_rank = 0.0;
  int first_place_count = 0;
  int ordinal = 0;

  friend bool operator==(const LeaderboardEntry&, const LeaderboardEntry&) = default;
};

struct Leaderboard {
  std::map<std::string, LeaderboardEntry> models;

  /// Model ids in ordinal order.
  std::vector<std::string> ordered() const {
    std::vector<std::string> ids;
    for (const auto& [id, e] : models) ids.push_back(id);
    std::sort(ids.begin(), ids.end(), [&](const auto& a, const auto& b) {
      return models.at(a).ordinal < models.at(b).ordinal;
    });
    return ids;
  }

  friend bool operator==(const Leaderboard&, const Leaderboard&) = default;
};

/// Ordinals 1..M by ascending average rank, then more first places, then
/// model id.
inline void assign_ordinals(Leaderboard& lb) {
  std::vector<std::string> ids;
  for (const auto& [id, e] : lb.models) ids.push_back(id);
  std::sort(ids.begin(), ids.end(), [&](const auto& a, const auto& b) {
    const auto& ea = lb.models.at(a);
    const auto& eb = lb.models.at(b);
    if (ea.average_rank != eb.average_rank) return ea.average_rank < eb.average_rank;
    if (ea.first_place_count != eb.first_place_count) return ea.first_place_count > eb.first_place_count;
    return a < b;
  });
  for (std::size_t i = 0; i < ids.size(); ++i) lb.models[ids[i]].ordinal = static_cast<int>(i) + 1;
}

/// Averages each model's fractional rank over prompts. A model counts a
/// first place whenever its image is in a prompt's top tie group.
inline Leaderboard build_leaderboard(std::span<const Ranking> rankings, const std::map<Digest, std::string>& model_of) {
  if (rankings.empty()) throw Error(Errc::InconsistentPromptCoverage, "no rankings to aggregate");
  std::map<std::string, double> rank_sum;
  std::map<std::string, int> firsts;
  std::set<std::string> model_set;
  bool first_prompt = true;
  for (const auto& r : rankings) {
    std::set<std::string> here;
    for (const auto& [hash, rank] : r.fractional_rank) {
      auto it = model_of.find(hash);
      if (it == model_of.end())
        throw Error(Errc::UnmappedImage, "image has no model mapping", {{"prompt_id", r.prompt_id}, {"image", hash}});
      if (!here.insert(it->second).second)
        throw Error(Errc::InconsistentPromptCoverage, "model ranked twice in one prompt",
                    {{"prompt_id", r.prompt_id}, {"model_id", it->second}});
      rank_sum[it->second] += rank;
    }
    if (!r.groups.empty())
      for (const auto& hash : r.groups.front()) ++firsts[model_of.at(hash)];
    if (first_prompt) {
      model_set = here;
      first_prompt = false;
    } else if (here != model_set) {
      throw Error(Errc::InconsistentPromptCoverage, "prompt does not rank the same model set as the others",
                  {{"prompt_id", r.prompt_id}});
    }
  }
  Leaderboard lb;
  const double prompts = static_cast<double>(rankings.size());
  for (const auto& m : model_set) {
    lb.models[m].average_rank = rank_sum[m] / prompts;
    lb.models[m].first_place_count = firsts[m];
  }
  assign_ordinals(lb);
  return lb;
}

/// Spearman correlation between the ordinal columns of two leaderboards.
inline double leaderboard_srcc(const Leaderboard& metric, const Leaderboard& human) {
  std::vector<double> x, y;
  for (const auto& [id, e] : human.models) {
    auto it = metric.models.find(id);
    if (it == metric.models.end())
      throw Error(Errc::ModelSetMismatch, "model '" + id + "' missing from metric leaderboard", {{"model_id", id}});
    x.push_back(static_cast<double>(it->second.ordinal));
    y.push_back(static_cast<double>(e.ordinal));
  }
  if (metric.models.size() != human.models.size())
    throw Error(Errc::ModelSetMismatch, "leaderboards rank different model sets",
                {{"metric", metric.models.size()}, {"human", human.models.size()}});
  return stats::spearman(x, y);
}

inline void to_json(nlohmann::json& j, const Leaderboard& lb) {
  auto models = nlohmann::json::object();
  for (const auto& [id, e] : lb.models)
    models[id] = {{"average_rank", e.average_rank}, {"first_place_count", e.first_place_count}, {"ordinal", e.ordinal}};
  j = {{"schema_version", kSchemaVersion},
       {"models", models},
       {"ranking_method", "copeland"},
       {"first_place_convention", "top tie-group membership"}};
}

/// Accepts full entries, or a bare {model: ordinal} object; the latter is how
/// externally published leaderboards are imported.
inline void from_json(const nlohmann::json& j, Leaderboard& lb) {
  lb.models.clear();
  const auto& models = j.contains("models") ? j.at("models") : j;
  for (const auto& [id, v] : models.items()) {
    if (id == "schema_version") continue;
    LeaderboardEntry e;
    if (v.is_number()) {
      e.ordinal = v.get<int>();
      e.average_rank = v.get<double>();
    } else {
      e.average_rank = v.at("average_rank").get<double>();
      e.first_place_count = v.value("first_place_count", 0);
      e.ordinal = v.value("ordinal", 0);
    }
    lb.models[id] = e;
  }
  bool need_ordinals = false;
  for (const auto& [id, e] : lb.models) need_ordinals |= e.ordinal == 0;
  if (need_ordinals) assign_ordinals(lb);
}

}  // namespace tit::pref
