#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tit/core/error.hpp"
#include "tit/preference/aggregate.hpp"
#include "tit/stats/rank_metrics.hpp"

namespace tit::pref {

/// Per-prompt ranking with ties. Groups are ordered best first; hashes
/// within a group are sorted.
struct Ranking {
  std::string prompt_id;
  std::vector<std::vector<Digest>> groups;
  std::map<Digest, double> fractional_rank;
  /// Tournament scores (wins + half ties) when built from pairwise outcomes.
  std::map<Digest, double> copeland_score;

  std::size_t size() const { return fractional_rank.size(); }
  friend bool operator==(const Ranking&, const Ranking&) = default;
};

/// Groups items sharing a key value, best (highest key) first, and assigns
/// fractional ranks.
inline Ranking ranking_from_keys(std::string prompt_id, const std::map<Digest, double>& key) {
  std::vector<std::pair<double, Digest>> items;
  for (const auto& [h, k] : key) items.emplace_back(k, h);
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  Ranking r;
  r.prompt_id = std::move(prompt_id);
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i + 1;
    while (j < items.size() && items[j].first == items[i].first) ++j;
    std::vector<Digest> group;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      group.push_back(items[k].second);
      r.fractional_rank[items[k].second] = rank;
    }
    r.groups.push_back(std::move(group));
    i = j;
  }
  return r;
}

/// Copeland ranking of a complete round-robin: 1 point per win, 0.5 per tie.
/// `images` lists the expected participants; when empty they are taken from
/// the outcomes.
inline Ranking rank_from_pairwise(const std::string& prompt_id, std::span<const PairOutcome> outcomes,
                                  std::span<const Digest> images = {}) {
  std::set<Digest> players(images.begin(), images.end());
  if (players.empty())
    for (const auto& o : outcomes) players.insert({o.tally.image_a_hash, o.tally.image_b_hash});

  std::map<Digest, double> score;
  for (const auto& p : players) score[p] = 0.0;
  std::set<std::pair<Digest, Digest>> seen;
  for (const auto& o : outcomes) {
    const auto& a = o.tally.image_a_hash;
    const auto& b = o.tally.image_b_hash;
    if (!players.count(a) || !players.count(b))
      throw Error(Errc::KeyMismatch, "outcome references an image outside the prompt's image set",
                  {{"prompt_id", prompt_id}, {"image_a_hash", a}, {"image_b_hash", b}});
    if (!seen.insert(std::minmax(a, b)).second)
      throw Error(Errc::IncompleteTournament, "pair has more than one outcome",
                  {{"prompt_id", prompt_id}, {"image_a_hash", a}, {"image_b_hash", b}});
    switch (o.verdict) {
      case Verdict::AWins: score[a] += 1.0; break;
      case Verdict::BWins: score[b] += 1.0; break;
      case Verdict::Tie: score[a] += 0.5, score[b] += 0.5; break;
      case Verdict::Escalated:
        throw Error(Errc::MissingArbitration, "escalated pair has not been arbitrated",
                    {{"prompt_id", prompt_id}, {"image_a_hash", a}, {"image_b_hash", b}});
    }
  }

  nlohmann::json missing = nlohmann::json::array();
  for (auto i = players.begin(); i != players.end(); ++i)
    for (auto j = std::next(i); j != players.end(); ++j)
      if (!seen.count({*i, *j})) missing.push_back({*i, *j});
  if (!missing.empty())
    throw Error(Errc::IncompleteTournament,
                "prompt '" + prompt_id + "' is missing " + std::to_string(missing.size()) + " pair outcome(s)",
                {{"prompt_id", prompt_id}, {"missing_pairs", missing}});

  auto r = ranking_from_keys(prompt_id, score);
  r.copeland_score = std::move(score);
  return r;
}

/// Ranking by metric score (higher is better), ties share a group.
inline Ranking rank_from_scores(const std::string& prompt_id, const std::map<Digest, double>& scores) {
  return ranking_from_keys(prompt_id, scores);
}

/// Groups outcomes by prompt and ranks each prompt.
inline std::vector<Ranking> rank_all(std::span<const PairOutcome> outcomes) {
  std::map<std::string, std::vector<PairOutcome>> by_prompt;
  for (const auto& o : outcomes) by_prompt[o.tally.prompt_id].push_back(o);
  std::vector<Ranking> out;
  for (const auto& [pid, os] : by_prompt) out.push_back(rank_from_pairwise(pid, os));
  return out;
}

inline void to_json(nlohmann::json& j, const Ranking& r) {
  j = {{"schema_version", kSchemaVersion},
       {"prompt_id", r.prompt_id},
       {"groups", r.groups},
       {"fractional_rank", r.fractional_rank},
       {"method", r.copeland_score.empty() ? "score" : "copeland"}};
  if (!r.copeland_score.empty()) j["copeland_score"] = r.copeland_score;
}

inline void from_json(const nlohmann::json& j, Ranking& r) {
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.groups = j.at("groups").get<std::vector<std::vector<Digest>>>();
  r.fractional_rank.clear();
  std::size_t pos = 0;
  for (const auto& g : r.groups) {
    if (g.empty()) throw Error(Errc::ParseError, "empty tie group", {{"prompt_id", r.prompt_id}});
    const double rank = static_cast<double>(pos) + 0.5 * static_cast<double>(g.size() + 1);
    for (const auto& h : g) {
      if (!r.fractional_rank.emplace(h, rank).second)
        throw Error(Errc::ParseError, "image appears in two tie groups", {{"prompt_id", r.prompt_id}, {"image", h}});
    }
    pos += g.size();
  }
  r.copeland_score = j.value("copeland_score", std::map<Digest, double>{});
}

}  // namespace tit::pref
