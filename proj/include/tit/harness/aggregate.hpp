#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "tit/core/error.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/preference/aggregate.hpp"
#include "tit/preference/leaderboard.hpp"
#include "tit/preference/ranking.hpp"
#include "tit/stats/rank_metrics.hpp"

namespace tit::harness {

using ArbitrationKey = std::tuple<std::string, Digest, Digest>;  // prompt, image a, image b

/// arbitrations.jsonl: {"prompt_id", "image_a_hash", "image_b_hash",
/// "verdicts": ["A"|"B"|"Tie" x3]}, A/B oriented as in the tally.
inline std::map<ArbitrationKey, pref::ExpertVerdicts> load_arbitrations(const fs::path& path) {
  std::map<ArbitrationKey, pref::ExpertVerdicts> out;
  for (const auto& j : read_jsonl(path)) {
    ArbitrationKey k{j.at("prompt_id").get<std::string>(), j.at("image_a_hash").get<std::string>(),
                     j.at("image_b_hash").get<std::string>()};
    out[k] = pref::parse_expert_verdicts(j.at("verdicts"));
  }
  return out;
}

struct AggregateResult {
  std::vector<pref::PairOutcome> outcomes;
  std::vector<pref::VoteTally> unresolved;  // escalated with no arbitration record
  std::vector<pref::Ranking> rankings;      // empty unless every pair is final
  bool forced = false;
};

inline AggregateResult aggregate_tallies(const std::vector<pref::VoteTally>& tallies,
                                         const std::map<ArbitrationKey, pref::ExpertVerdicts>& arbitrations,
                                         bool force_tie_unresolved) {
  AggregateResult r;
  for (const auto& t : tallies) {
    std::optional<pref::ExpertVerdicts> experts;
    if (auto it = arbitrations.find({t.prompt_id, t.image_a_hash, t.image_b_hash}); it != arbitrations.end())
      experts = it->second;
    auto o = pref::aggregate_pair(t, experts);
    if (o.verdict == pref::Verdict::Escalated) {
      if (!force_tie_unresolved) {
        r.unresolved.push_back(t);
        r.outcomes.push_back(o);
        continue;
      }
      o = pref::finalize(o, true);
      r.forced = true;
    }
    r.outcomes.push_back(o);
  }
  if (r.unresolved.empty()) r.rankings = pref::rank_all(r.outcomes);
  return r;
}

/// Human preference pairs (for pairwise accuracy) from final outcomes.
inline std::vector<stats::HumanPair> human_pairs(const std::vector<pref::PairOutcome>& outcomes) {
  std::vector<stats::HumanPair> out;
  for (const auto& o : outcomes) {
    const auto final_o = pref::finalize(o);
    stats::HumanOutcome h = stats::HumanOutcome::Tie;
    if (final_o.verdict == pref::Verdict::AWins) h = stats::HumanOutcome::A;
    if (final_o.verdict == pref::Verdict::BWins) h = stats::HumanOutcome::B;
    out.push_back({o.tally.prompt_id, o.tally.image_a_hash, o.tally.image_b_hash, h});
  }
  return out;
}

/// Per-prompt rankings of a metric's scores (higher score ranks first).
inline std::vector<pref::Ranking> rankings_from_scores(const std::vector<ScoreRecord>& scores) {
  std::map<std::string, std::map<Digest, double>> by_prompt;
  for (const auto& s : scores) by_prompt[s.prompt_id][s.image_hash] = s.value;
  std::vector<pref::Ranking> out;
  for (const auto& [pid, m] : by_prompt) out.push_back(pref::rank_from_scores(pid, m));
  return out;
}

}  // namespace tit::harness
