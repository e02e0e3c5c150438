#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "expect_errc.hpp"
#include "oracles.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/preference/aggregate.hpp"
#include "tit/preference/leaderboard.hpp"
#include "tit/preference/ranking.hpp"

using namespace tit;
using namespace tit::pref;

namespace {

VoteTally tally(int a, int b, int t, int panel = 15) { return {"p", "imgA", "imgB", a, b, t, panel}; }

PairOutcome decided(const std::string& a, const std::string& b, Verdict v, const std::string& prompt = "p") {
  PairOutcome o;
  o.tally = {prompt, a, b, 15, 0, 0, 15};
  o.verdict = v;
  o.rule_fired = Rule::StrongConsensus;
  return o;
}

const auto& oracle_rules = oracle::rules15;

std::vector<std::string> items(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back("img" + std::string(i < 10 ? "0" : "") + std::to_string(i));
  return v;
}

}  // namespace

// ---- aggregate_pair

TEST(AggregatePair, StrongConsensus) {
  const auto o = aggregate_pair(tally(10, 3, 2));
  EXPECT_EQ(o.verdict, Verdict::AWins);
  EXPECT_EQ(o.rule_fired, Rule::StrongConsensus);
  EXPECT_EQ(aggregate_pair(tally(2, 10, 3)).verdict, Verdict::BWins);
  EXPECT_EQ(aggregate_pair(tally(2, 3, 10)).verdict, Verdict::Tie);
}

TEST(AggregatePair, SplitEscalates) {
  const auto o = aggregate_pair(tally(7, 6, 2));
  EXPECT_EQ(o.verdict, Verdict::Escalated);
  EXPECT_EQ(o.rule_fired, Rule::Arbitration);
  EXPECT_FALSE(o.expert_verdicts);
  EXPECT_ERRC(finalize(o), Errc::MissingArbitration);
  const auto forced = finalize(o, true);
  EXPECT_EQ(forced.verdict, Verdict::Tie);
  EXPECT_TRUE(forced.forced);
}

TEST(AggregatePair, DividedExpertsGiveTie) {
  const auto o = aggregate_pair(tally(5, 5, 5), ExpertVerdicts{Choice::A, Choice::B, Choice::Tie});
  EXPECT_EQ(o.verdict, Verdict::Tie);
  EXPECT_EQ(o.rule_fired, Rule::Arbitration);
  ASSERT_TRUE(o.expert_verdicts);
}

TEST(AggregatePair, ExpertMajority) {
  EXPECT_EQ(aggregate_pair(tally(5, 5, 5), ExpertVerdicts{Choice::A, Choice::A, Choice::B}).verdict, Verdict::AWins);
  EXPECT_EQ(aggregate_pair(tally(5, 5, 5), ExpertVerdicts{Choice::B, Choice::Tie, Choice::B}).verdict, Verdict::BWins);
  EXPECT_EQ(aggregate_pair(tally(5, 5, 5), ExpertVerdicts{Choice::Tie, Choice::Tie, Choice::A}).verdict, Verdict::Tie);
}

TEST(AggregatePair, ExpertsIgnoredWhenRulesDecide) {
  const auto o = aggregate_pair(tally(10, 3, 2), ExpertVerdicts{Choice::B, Choice::B, Choice::B});
  EXPECT_EQ(o.verdict, Verdict::AWins);
  EXPECT_FALSE(o.expert_verdicts);
}

TEST(AggregatePair, SignificantAdvantage) {
  const auto o = aggregate_pair(tally(7, 1, 7));
  EXPECT_EQ(o.verdict, Verdict::AWins);
  EXPECT_EQ(o.rule_fired, Rule::SignificantAdvantage);
  // exactly 75%: 6 of 8
  EXPECT_EQ(aggregate_pair(tally(6, 2, 7)).verdict, Verdict::AWins);
  // just below: 5 of 8
  EXPECT_EQ(aggregate_pair(tally(5, 3, 7)).verdict, Verdict::Escalated);
  // quorum not met: 7 of 7 preference votes but v_pref < 8
  EXPECT_EQ(aggregate_pair(tally(7, 0, 8)).verdict, Verdict::Escalated);
  EXPECT_EQ(aggregate_pair(tally(1, 9, 5)).verdict, Verdict::BWins);
}

TEST(AggregatePair, InvalidTallies) {
  EXPECT_ERRC(aggregate_pair(tally(10, 3, 3)), Errc::InvalidTally);
  EXPECT_ERRC(aggregate_pair(tally(-1, 8, 8)), Errc::InvalidTally);
  EXPECT_ERRC(aggregate_pair({"p", "x", "x", 15, 0, 0, 15}), Errc::InvalidTally);
}

TEST(AggregatePair, ExhaustiveOverAllTallies) {
  int count = 0;
  for (int a = 0; a <= 15; ++a)
    for (int b = 0; a + b <= 15; ++b) {
      const int t = 15 - a - b;
      ++count;
      const auto o = aggregate_pair(tally(a, b, t));
      const auto [v, rule] = oracle_rules(a, b, t);
      EXPECT_EQ(o.verdict, v) << a << "-" << b << "-" << t;
      EXPECT_EQ(o.rule_fired, rule) << a << "-" << b << "-" << t;
      EXPECT_EQ(aggregate_pair(tally(a, b, t)), o);  // deterministic
      // rule precedence: consensus always reported as such
      if (a >= 10 || b >= 10 || t >= 10) EXPECT_EQ(o.rule_fired, Rule::StrongConsensus);
      // A/B symmetry
      const auto s = aggregate_pair({"p", "imgB", "imgA", b, a, t, 15});
      const Verdict mirrored =
          o.verdict == Verdict::AWins ? Verdict::BWins : o.verdict == Verdict::BWins ? Verdict::AWins : o.verdict;
      EXPECT_EQ(s.verdict, mirrored);
      EXPECT_EQ(s.rule_fired, o.rule_fired);
    }
  EXPECT_EQ(count, 136);
}

TEST(AggregatePair, ScaledThresholds) {
  EXPECT_EQ(Thresholds::for_panel(15).consensus, 10);
  EXPECT_EQ(Thresholds::for_panel(15).quorum, 8);
  EXPECT_EQ(Thresholds::for_panel(3).consensus, 2);
  EXPECT_EQ(Thresholds::for_panel(9).consensus, 6);
  EXPECT_EQ(Thresholds::for_panel(9).quorum, 5);
  EXPECT_EQ(Thresholds::for_panel(30).consensus, 20);
  EXPECT_EQ(Thresholds::for_panel(30).quorum, 16);
  EXPECT_EQ(aggregate_pair(tally(2, 1, 0, 3)).verdict, Verdict::AWins);
}

TEST(AggregatePair, JsonRoundTrip) {
  const auto o = aggregate_pair(tally(5, 5, 5), ExpertVerdicts{Choice::A, Choice::B, Choice::Tie});
  EXPECT_EQ(nlohmann::json::parse(nlohmann::json(o).dump()).get<PairOutcome>(), o);
  const auto t = tally(4, 4, 7);
  EXPECT_EQ(nlohmann::json(t).get<VoteTally>(), t);
  EXPECT_ERRC(parse_expert_verdicts(nlohmann::json::array({"A", "B"})), Errc::WrongPanelSize);
  EXPECT_ERRC(parse_expert_verdicts(nlohmann::json::array({"A", "B", "X"})), Errc::ParseError);
}

// ---- rank_from_pairwise

TEST(RankFromPairwise, Transitive) {
  const std::vector<PairOutcome> os{decided("A", "B", Verdict::AWins), decided("A", "C", Verdict::AWins),
                                    decided("B", "C", Verdict::AWins)};
  const auto r = rank_from_pairwise("p", os);
  EXPECT_EQ(r.groups, (std::vector<std::vector<Digest>>{{"A"}, {"B"}, {"C"}}));
  EXPECT_EQ(r.fractional_rank, (std::map<Digest, double>{{"A", 1}, {"B", 2}, {"C", 3}}));
}

TEST(RankFromPairwise, AllTies) {
  const std::vector<PairOutcome> os{decided("A", "B", Verdict::Tie), decided("A", "C", Verdict::Tie),
                                    decided("B", "C", Verdict::Tie)};
  const auto r = rank_from_pairwise("p", os);
  EXPECT_EQ(r.groups, (std::vector<std::vector<Digest>>{{"A", "B", "C"}}));
  for (const auto& [h, rank] : r.fractional_rank) EXPECT_EQ(rank, 2.0);
}

TEST(RankFromPairwise, CycleIsOneGroup) {
  const std::vector<PairOutcome> os{decided("A", "B", Verdict::AWins), decided("B", "C", Verdict::AWins),
                                    decided("A", "C", Verdict::BWins)};
  const auto r = rank_from_pairwise("p", os);
  EXPECT_EQ(r.groups.size(), 1u);
  for (const auto& [h, s] : r.copeland_score) EXPECT_EQ(s, 1.0);
  for (const auto& [h, rank] : r.fractional_rank) EXPECT_EQ(rank, 2.0);
}

TEST(RankFromPairwise, MissingPairsListed) {
  const std::vector<PairOutcome> os{decided("A", "B", Verdict::AWins)};
  const std::vector<Digest> all{"A", "B", "C"};
  try {
    rank_from_pairwise("p", os, all);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IncompleteTournament);
    EXPECT_EQ(e.context().at("missing_pairs").size(), 2u);
  }
}

TEST(RankFromPairwise, RejectsEscalatedAndDuplicates) {
  std::vector<PairOutcome> os{decided("A", "B", Verdict::Escalated)};
  EXPECT_ERRC(rank_from_pairwise("p", os), Errc::MissingArbitration);
  os = {decided("A", "B", Verdict::AWins), decided("B", "A", Verdict::AWins)};
  EXPECT_ERRC(rank_from_pairwise("p", os), Errc::IncompleteTournament);
}

TEST(RankFromPairwise, StrictOrderRoundTripAndPermutationInvariance) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    auto order = items(13);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<PairOutcome> os;
    for (std::size_t i = 0; i < order.size(); ++i)
      for (std::size_t j = i + 1; j < order.size(); ++j)
        os.push_back(rng() % 2 ? decided(order[i], order[j], Verdict::AWins)
                               : decided(order[j], order[i], Verdict::BWins));
    const auto r = rank_from_pairwise("p", os);
    ASSERT_EQ(r.groups.size(), 13u);
    for (std::size_t i = 0; i < 13; ++i) {
      EXPECT_EQ(r.groups[i], std::vector<Digest>{order[i]});
      EXPECT_EQ(r.fractional_rank.at(order[i]), static_cast<double>(i + 1));
    }
    std::shuffle(os.begin(), os.end(), rng);
    EXPECT_EQ(rank_from_pairwise("p", os), r);
  }
}

TEST(Ranking, JsonRoundTrip) {
  const std::vector<PairOutcome> os{decided("A", "B", Verdict::Tie), decided("A", "C", Verdict::AWins),
                                    decided("B", "C", Verdict::AWins)};
  const auto r = rank_from_pairwise("p", os);
  const auto back = nlohmann::json::parse(nlohmann::json(r).dump()).get<Ranking>();
  EXPECT_EQ(back, r);
  EXPECT_EQ(nlohmann::json(r).at("method"), "copeland");
}

TEST(Ranking, FromScoresGroupsEqualValues) {
  const auto r = rank_from_scores("p", {{"a", 0.5}, {"b", 0.9}, {"c", 0.5}, {"d", 0.1}});
  EXPECT_EQ(r.groups, (std::vector<std::vector<Digest>>{{"b"}, {"a", "c"}, {"d"}}));
  EXPECT_EQ(r.fractional_rank.at("a"), 2.5);
}

// ---- leaderboard

TEST(Leaderboard, SinglePrompt) {
  const auto r = rank_from_pairwise("p", std::vector<PairOutcome>{decided("A", "B", Verdict::AWins)});
  const std::vector<Ranking> rs{r};
  const auto lb = build_leaderboard(rs, {{"A", "model1"}, {"B", "model2"}});
  EXPECT_EQ(lb.models.at("model1"), (LeaderboardEntry{1.0, 1, 1}));
  EXPECT_EQ(lb.models.at("model2"), (LeaderboardEntry{2.0, 0, 2}));
}

TEST(Leaderboard, AveragesOverPrompts) {
  const std::vector<Ranking> rs{ranking_from_keys("p1", {{"a1", 3}, {"b1", 2}, {"c1", 1}}),
                                ranking_from_keys("p2", {{"a2", 1}, {"b2", 3}, {"c2", 2}})};
  const std::map<Digest, std::string> m{{"a1", "model1"}, {"b1", "model2"}, {"c1", "model3"},
                                        {"a2", "model1"}, {"b2", "model2"}, {"c2", "model3"}};
  const auto lb = build_leaderboard(rs, m);
  EXPECT_EQ(lb.models.at("model1").average_rank, 2.0);
  EXPECT_EQ(lb.models.at("model2").average_rank, 1.5);
  EXPECT_EQ(lb.models.at("model2").ordinal, 1);
  EXPECT_EQ(lb.models.at("model1").ordinal, 2);
}

TEST(Leaderboard, FullTiesBrokenByModelId) {
  const std::vector<Ranking> rs{ranking_from_keys("p1", {{"x", 0}, {"y", 0}, {"z", 0}})};
  const auto lb = build_leaderboard(rs, {{"x", "m-c"}, {"y", "m-a"}, {"z", "m-b"}});
  EXPECT_EQ(lb.ordered(), (std::vector<std::string>{"m-a", "m-b", "m-c"}));
  for (const auto& [id, e] : lb.models) {
    EXPECT_EQ(e.average_rank, 2.0);
    EXPECT_EQ(e.first_place_count, 1);
  }
}

TEST(Leaderboard, FirstPlacesBreakAverageTies) {
  // m1: ranks 1 and 3 (avg 2, one first), m2: 2 and 2 (avg 2, none)
  const std::vector<Ranking> rs{ranking_from_keys("p1", {{"a", 3}, {"b", 2}, {"c", 1}}),
                                ranking_from_keys("p2", {{"d", 1}, {"e", 2}, {"f", 3}})};
  const auto lb = build_leaderboard(
      rs, {{"a", "m2x"}, {"b", "m1x"}, {"c", "m3"}, {"d", "m2x"}, {"e", "m1x"}, {"f", "m3"}});
  // m2x: 1 and 3, m1x: 2 and 2
  EXPECT_EQ(lb.models.at("m2x").average_rank, lb.models.at("m1x").average_rank);
  EXPECT_EQ(lb.models.at("m2x").ordinal, 1);
}

TEST(Leaderboard, Errors) {
  const std::vector<Ranking> rs{ranking_from_keys("p1", {{"a", 1}, {"b", 2}})};
  EXPECT_ERRC(build_leaderboard(rs, {{"a", "m1"}}), Errc::UnmappedImage);
  EXPECT_ERRC(build_leaderboard(rs, {{"a", "m1"}, {"b", "m1"}}), Errc::InconsistentPromptCoverage);
  const std::vector<Ranking> uneven{ranking_from_keys("p1", {{"a", 1}, {"b", 2}}),
                                    ranking_from_keys("p2", {{"c", 1}})};
  EXPECT_ERRC(build_leaderboard(uneven, {{"a", "m1"}, {"b", "m2"}, {"c", "m1"}}), Errc::InconsistentPromptCoverage);
  EXPECT_ERRC(build_leaderboard(std::vector<Ranking>{}, {}), Errc::InconsistentPromptCoverage);
}

TEST(Leaderboard, RankSumsAndBounds) {
  std::mt19937_64 rng(21);
  std::vector<Ranking> rs;
  std::map<Digest, std::string> m;
  const int M = 13;
  for (int p = 0; p < 20; ++p) {
    std::map<Digest, double> keys;
    for (int k = 0; k < M; ++k) {
      const auto h = "p" + std::to_string(p) + "-" + std::to_string(k);
      keys[h] = static_cast<double>(rng() % 5);
      m[h] = "model" + std::to_string(k);
    }
    rs.push_back(ranking_from_keys("p" + std::to_string(p), keys));
    double sum = 0;
    for (const auto& [h, r] : rs.back().fractional_rank) sum += r;
    EXPECT_DOUBLE_EQ(sum, M * (M + 1) / 2.0);
  }
  const auto lb = build_leaderboard(rs, m);
  for (const auto& [id, e] : lb.models) {
    EXPECT_GE(e.average_rank, 1.0);
    EXPECT_LE(e.average_rank, static_cast<double>(M));
  }
  // shuffled input order gives the same leaderboard
  auto shuffled = rs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_EQ(build_leaderboard(shuffled, m), lb);
}

TEST(Leaderboard, JsonRoundTripAndBareImport) {
  const std::vector<Ranking> rs{ranking_from_keys("p1", {{"a", 3}, {"b", 2}, {"c", 1}})};
  const auto lb = build_leaderboard(rs, {{"a", "m1"}, {"b", "m2"}, {"c", "m3"}});
  EXPECT_EQ(nlohmann::json::parse(nlohmann::json(lb).dump()).get<Leaderboard>(), lb);
  const auto bare = nlohmann::json{{"m1", 1}, {"m2", 2}, {"m3", 3}}.get<Leaderboard>();
  EXPECT_EQ(bare.models.at("m2").ordinal, 2);
}

TEST(LeaderboardSrcc, PublishedColumns) {
  const fs::path dir = fs::path(TIT_TEST_DATA) / "leaderboards";
  const auto expected = read_json(dir / "expected.json");
  const auto human = read_json(dir / "human.json").get<Leaderboard>();
  for (const auto& col : expected.at("columns")) {
    const auto name = col.get<std::string>();
    const auto lb = read_json(dir / (name + ".json")).get<Leaderboard>();
    EXPECT_NEAR(leaderboard_srcc(lb, human), expected.at("srcc_vs_human").at(name).get<double>(), 0.001) << name;
  }
}

TEST(LeaderboardSrcc, ModelSetMismatch) {
  const auto a = nlohmann::json{{"m1", 1}, {"m2", 2}}.get<Leaderboard>();
  const auto b = nlohmann::json{{"m1", 1}, {"m3", 2}}.get<Leaderboard>();
  const auto c = nlohmann::json{{"m1", 1}, {"m2", 2}, {"m3", 3}}.get<Leaderboard>();
  EXPECT_ERRC(leaderboard_srcc(a, b), Errc::ModelSetMismatch);
  EXPECT_ERRC(leaderboard_srcc(c, a), Errc::ModelSetMismatch);
}
