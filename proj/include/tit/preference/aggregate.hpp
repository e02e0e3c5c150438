#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tit/core/error.hpp"
#include "tit/core/hash.hpp"
#include "tit/core/types.hpp"

namespace tit::pref {

inline constexpr int kDefaultPanelSize = 15;
inline constexpr int kExpertPanelSize = 3;

struct VoteTally {
  std::string prompt_id;
  Digest image_a_hash;
  Digest image_b_hash;
  int v_a = 0;
  int v_b = 0;
  int v_t = 0;
  int panel_size = kDefaultPanelSize;

  int votes() const { return v_a + v_b + v_t; }
  friend bool operator==(const VoteTally&, const VoteTally&) = default;
};

enum class Verdict { AWins, BWins, Tie, Escalated };
enum class Rule { StrongConsensus, SignificantAdvantage, Arbitration };
/// An expert's (or annotator's) choice between the two images.
enum class Choice { A, B, Tie };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::AWins: return "AWins";
    case Verdict::BWins: return "BWins";
    case Verdict::Tie: return "Tie";
    case Verdict::Escalated: return "Escalated";
  }
  return "";
}

inline std::string_view to_string(Rule r) {
  switch (r) {
    case Rule::StrongConsensus: return "StrongConsensus";
    case Rule::SignificantAdvantage: return "SignificantAdvantage";
    case Rule::Arbitration: return "Arbitration";
  }
  return "";
}

inline std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::A: return "A";
    case Choice::B: return "B";
    case Choice::Tie: return "Tie";
  }
  return "";
}

inline Verdict parse_verdict(std::string_view s) {
  if (s == "AWins") return Verdict::AWins;
  if (s == "BWins") return Verdict::BWins;
  if (s == "Tie") return Verdict::Tie;
  if (s == "Escalated") return Verdict::Escalated;
  throw Error(Errc::ParseError, "invalid verdict '" + std::string(s) + "'");
}

inline Rule parse_rule(std::string_view s) {
  if (s == "StrongConsensus") return Rule::StrongConsensus;
  if (s == "SignificantAdvantage") return Rule::SignificantAdvantage;
  if (s == "Arbitration") return Rule::Arbitration;
  throw Error(Errc::ParseError, "invalid rule '" + std::string(s) + "'");
}

inline Choice parse_choice(std::string_view s) {
  if (s == "A") return Choice::A;
  if (s == "B") return Choice::B;
  if (s == "Tie") return Choice::Tie;
  throw Error(Errc::ParseError, "invalid choice '" + std::string(s) + "'");
}

using ExpertVerdicts = std::array<Choice, kExpertPanelSize>;

struct PairOutcome {
  VoteTally tally;
  Verdict verdict = Verdict::Escalated;
  Rule rule_fired = Rule::Arbitration;
  std::optional<ExpertVerdicts> expert_verdicts;
  /// Set when an escalation was resolved to Tie without arbitration
  /// (exploratory runs only).
  bool forced = false;

  friend bool operator==(const PairOutcome&, const PairOutcome&) = default;
};

/// Decision thresholds for a panel. For 15 annotators: consensus 10,
/// preference quorum 8, ratio 3/4.
struct Thresholds {
  int consensus = 10;
  int quorum = 8;

  static Thresholds for_panel(int panel_size) {
    if (panel_size < 1) throw Error(Errc::InvalidTally, "panel size must be positive", {{"panel_size", panel_size}});
    Thresholds t;
    t.consensus = (2 * panel_size + 2) / 3;  // ceil(2p/3)
    t.quorum = static_cast<int>(std::lround(8.0 * panel_size / 15.0));
    return t;
  }
};

inline void check_tally(const VoteTally& t) {
  if (t.v_a < 0 || t.v_b < 0 || t.v_t < 0 || t.panel_size < 1 || t.votes() != t.panel_size)
    throw Error(Errc::InvalidTally, "tally counts must be non-negative and sum to the panel size",
                {{"v_a", t.v_a}, {"v_b", t.v_b}, {"v_t", t.v_t}, {"panel_size", t.panel_size}});
  if (t.image_a_hash == t.image_b_hash && !t.image_a_hash.empty())
    throw Error(Errc::InvalidTally, "tally compares an image with itself", {{"image", t.image_a_hash}});
}

/// Majority of the three expert verdicts; Tie when all three differ.
inline Verdict expert_majority(const ExpertVerdicts& experts) {
  std::array<int, 3> counts{};
  for (auto c : experts) ++counts[static_cast<int>(c)];
  if (counts[0] >= 2) return Verdict::AWins;
  if (counts[1] >= 2) return Verdict::BWins;
  if (counts[2] >= 2) return Verdict::Tie;
  return Verdict::Tie;
}

/// Applies the three hierarchical rules in order. Without expert input an
/// unresolved tally comes back as Escalated.
inline PairOutcome aggregate_pair(const VoteTally& t, std::optional<ExpertVerdicts> experts = std::nullopt) {
  check_tally(t);
  const auto th = Thresholds::for_panel(t.panel_size);
  PairOutcome out{t, Verdict::Escalated, Rule::Arbitration, std::nullopt};

  // Rule 1: strong consensus.
  if (t.v_a >= th.consensus || t.v_b >= th.consensus || t.v_t >= th.consensus) {
    out.rule_fired = Rule::StrongConsensus;
    out.verdict = t.v_a >= th.consensus ? Verdict::AWins : t.v_b >= th.consensus ? Verdict::BWins : Verdict::Tie;
    return out;
  }
  // Rule 2: significant advantage among preference votes (ratio >= 3/4).
  const int pref = t.v_a + t.v_b;
  if (pref >= th.quorum && pref > 0) {
    if (4 * t.v_a >= 3 * pref) {
      out.rule_fired = Rule::SignificantAdvantage;
      out.verdict = Verdict::AWins;
      return out;
    }
    if (4 * t.v_b >= 3 * pref) {
      out.rule_fired = Rule::SignificantAdvantage;
      out.verdict = Verdict::BWins;
      return out;
    }
  }
  // Rule 3: arbitration.
  if (experts) {
    out.expert_verdicts = experts;
    out.verdict = expert_majority(*experts);
  }
  return out;
}

/// Returns a final outcome. An Escalated outcome is an error unless
/// `force_tie_unresolved` is set, in which case it becomes a forced Tie.
inline PairOutcome finalize(PairOutcome o, bool force_tie_unresolved = false) {
  if (o.verdict != Verdict::Escalated) return o;
  if (!force_tie_unresolved)
    throw Error(Errc::MissingArbitration, "escalated pair has no expert arbitration",
                {{"prompt_id", o.tally.prompt_id},
                 {"image_a_hash", o.tally.image_a_hash},
                 {"image_b_hash", o.tally.image_b_hash},
                 {"votes", {o.tally.v_a, o.tally.v_b, o.tally.v_t}}});
  o.verdict = Verdict::Tie;
  o.forced = true;
  return o;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const VoteTally& t) {
  j = {{"schema_version", kSchemaVersion},
       {"prompt_id", t.prompt_id},
       {"image_a_hash", t.image_a_hash},
       {"image_b_hash", t.image_b_hash},
       {"v_a", t.v_a},
       {"v_b", t.v_b},
       {"v_t", t.v_t},
       {"panel_size", t.panel_size}};
}

inline void from_json(const nlohmann::json& j, VoteTally& t) {
  t.prompt_id = j.at("prompt_id").get<std::string>();
  t.image_a_hash = j.at("image_a_hash").get<std::string>();
  t.image_b_hash = j.at("image_b_hash").get<std::string>();
  t.v_a = j.at("v_a").get<int>();
  t.v_b = j.at("v_b").get<int>();
  t.v_t = j.at("v_t").get<int>();
  t.panel_size = j.value("panel_size", kDefaultPanelSize);
  check_tally(t);
}

inline void to_json(nlohmann::json& j, const PairOutcome& o) {
  j = {{"schema_version", kSchemaVersion},
       {"tally", o.tally},
       {"verdict", std::string(to_string(o.verdict))},
       {"rule_fired", std::string(to_string(o.rule_fired))}};
  if (o.expert_verdicts) {
    auto& arr = j["expert_verdicts"] = nlohmann::json::array();
    for (auto c : *o.expert_verdicts) arr.push_back(std::string(to_string(c)));
  }
  if (o.forced) j["forced"] = true;
}

inline ExpertVerdicts parse_expert_verdicts(const nlohmann::json& arr) {
  if (!arr.is_array() || arr.size() != kExpertPanelSize)
    throw Error(Errc::WrongPanelSize, "arbitration needs exactly 3 expert verdicts",
                {{"received", arr.is_array() ? arr.size() : 0}});
  ExpertVerdicts v{};
  for (std::size_t i = 0; i < kExpertPanelSize; ++i) v[i] = parse_choice(arr[i].get<std::string>());
  return v;
}

inline void from_json(const nlohmann::json& j, PairOutcome& o) {
  o.tally = j.at("tally").get<VoteTally>();
  o.verdict = parse_verdict(j.at("verdict").get<std::string>());
  o.rule_fired = parse_rule(j.at("rule_fired").get<std::string>());
  o.expert_verdicts.reset();
  if (j.contains("expert_verdicts")) o.expert_verdicts = parse_expert_verdicts(j.at("expert_verdicts"));
  o.forced = j.value("forced", false);
}

}  // namespace tit::pref
