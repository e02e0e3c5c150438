#include <fstream>
#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "expect_errc.hpp"
#include "fixtures.hpp"
#include "tit/annotation/campaign.hpp"
#include "tit/annotation/server.hpp"

using namespace tit;
using namespace tit::annotation;
using tit::testing::TempDir;

namespace {

std::vector<std::string> roster(int n) {
  std::vector<std::string> r;
  for (int i = 0; i < n; ++i) r.push_back("ann" + std::string(i < 10 ? "0" : "") + std::to_string(i));
  return r;
}

struct KeyParts {
  std::string prompt;
  Digest a, b;
};
KeyParts split_key(const std::string& key) {
  const auto second = key.rfind(':');
  const auto first = key.rfind(':', second - 1);
  return {key.substr(0, first), key.substr(first + 1, second - first - 1), key.substr(second + 1)};
}

/// Submits one judgment meaning `c` in A/B terms.
SubmitResult vote(Campaign& c, const std::string& key, const std::string& who, Choice choice) {
  const auto left = *c.presented_left(key, who);
  const bool left_is_a = left == split_key(key).a;
  SideChoice side = SideChoice::Tie;
  if (choice == Choice::A) side = left_is_a ? SideChoice::Left : SideChoice::Right;
  if (choice == Choice::B) side = left_is_a ? SideChoice::Right : SideChoice::Left;
  return c.submit_judgment({c.id(), who, key, side, left, "2026-01-01T00:00:00Z"});
}

/// Fills a pair with v_a A votes, v_b B votes, the rest ties.
SubmitResult fill(Campaign& c, const std::string& key, int v_a, int v_b) {
  SubmitResult r;
  int i = 0;
  for (const auto& who : c.assigned(key)) {
    const Choice ch = i < v_a ? Choice::A : i < v_a + v_b ? Choice::B : Choice::Tie;
    r = vote(c, key, who, ch);
    ++i;
  }
  return r;
}

struct CampaignFixture : ::testing::Test {
  void SetUp() override { bench = tit::testing::make_benchmark(dir / "bench", 2); }
  std::unique_ptr<Campaign> make(std::uint64_t seed = 7, int panel = 15, int roster_size = 20) {
    return Campaign::create(schedule_campaign("c1", bench, roster(roster_size), panel, seed),
                            dir / ("log-" + std::to_string(seed) + "-" + std::to_string(n_++) + ".jsonl"));
  }
  TempDir dir;
  BenchmarkSet bench;
  int n_ = 0;
};

}  // namespace

TEST_F(CampaignFixture, ScheduleCoversEveryPairWithFullPanel) {
  auto c = make();
  const auto keys = c->pair_keys();
  ASSERT_EQ(keys.size(), 6u);  // 2 prompts x C(3, 2)
  for (const auto& key : keys) {
    auto who = c->assigned(key);
    ASSERT_EQ(who.size(), 15u);
    std::sort(who.begin(), who.end());
    EXPECT_EQ(std::unique(who.begin(), who.end()), who.end());
    int left_a = 0;
    const auto parts = split_key(key);
    EXPECT_LT(parts.a, parts.b);
    for (const auto& w : who) left_a += *c->presented_left(key, w) == parts.a;
    EXPECT_TRUE(left_a == 7 || left_a == 8) << left_a;
  }
  const auto pr = c->progress();
  EXPECT_EQ(pr.total_pairs, 6u);
  EXPECT_EQ(pr.total_assignments, 90u);
  EXPECT_EQ(pr.completed_assignments, 0u);
}

TEST_F(CampaignFixture, WorkloadSpreadAcrossRoster) {
  auto c = make();
  std::size_t lo = 1000, hi = 0;
  for (const auto& who : roster(20)) {
    const auto [done, total] = c->annotator_progress(who);
    EXPECT_EQ(done, 0u);
    lo = std::min(lo, total);
    hi = std::max(hi, total);
  }
  EXPECT_LE(hi - lo, 1u);
}

TEST_F(CampaignFixture, ScheduleIsSeedDeterministic) {
  auto a = make(11), b = make(11), other = make(12);
  bool differs = false;
  for (const auto& key : a->pair_keys()) {
    EXPECT_EQ(a->assigned(key), b->assigned(key));
    for (const auto& w : a->assigned(key)) EXPECT_EQ(a->presented_left(key, w), b->presented_left(key, w));
    differs |= a->assigned(key) != other->assigned(key);
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a->next_pair("ann03")->pair_key, b->next_pair("ann03")->pair_key);
}

TEST_F(CampaignFixture, ScheduleErrors) {
  EXPECT_ERRC(schedule_campaign("c", bench, roster(14), 15, 1), Errc::RosterTooSmall);
  EXPECT_ERRC(schedule_campaign("c", bench, {"x", "x", "y"}, 3, 1), Errc::RosterTooSmall);
  EXPECT_ERRC(schedule_campaign("c", bench, roster(3), 0, 1), Errc::WrongPanelSize);
  TempDir one;
  const auto single = tit::testing::make_benchmark(one / "b", 1, {"only-model"});
  EXPECT_ERRC(schedule_campaign("c", single, roster(3), 3, 1), Errc::EmptyBenchmark);
}

TEST_F(CampaignFixture, NextPairIsStableAndExhausts) {
  auto c = make();
  const auto who = std::string("ann05");
  const auto total = c->annotator_progress(who).second;
  std::set<std::string> seen;
  while (auto task = c->next_pair(who)) {
    EXPECT_EQ(c->next_pair(who)->pair_key, task->pair_key);
    EXPECT_FALSE(task->prompt_text.empty());
    EXPECT_TRUE(seen.insert(task->pair_key).second);
    c->submit_judgment({c->id(), who, task->pair_key, SideChoice::Left, task->left, {}});
  }
  EXPECT_EQ(seen.size(), total);
  EXPECT_EQ(c->annotator_progress(who).first, total);
  EXPECT_ERRC(c->next_pair("stranger"), Errc::UnknownAnnotator);
}

TEST_F(CampaignFixture, SubmitErrors) {
  auto c = make();
  const auto key = c->pair_keys().front();
  const auto who = c->assigned(key).front();
  const auto left = *c->presented_left(key, who);
  const auto parts = split_key(key);
  const auto wrong_left = left == parts.a ? parts.b : parts.a;

  EXPECT_ERRC(c->submit_judgment({c->id(), "stranger", key, SideChoice::Left, left, {}}), Errc::UnknownAnnotator);
  EXPECT_ERRC(c->submit_judgment({c->id(), who, key, SideChoice::Left, wrong_left, {}}), Errc::UnassignedPair);
  EXPECT_ERRC(c->submit_judgment({c->id(), who, "p1:nope:nope", SideChoice::Left, left, {}}), Errc::UnassignedPair);
  EXPECT_ERRC(c->submit_judgment({"other", who, key, SideChoice::Left, left, {}}), Errc::CampaignNotFound);

  std::string outsider;
  for (const auto& r : roster(20)) {
    const auto as = c->assigned(key);
    if (std::find(as.begin(), as.end(), r) == as.end()) outsider = r;
  }
  ASSERT_FALSE(outsider.empty());
  EXPECT_ERRC(c->submit_judgment({c->id(), outsider, key, SideChoice::Left, left, {}}), Errc::UnassignedPair);

  c->submit_judgment({c->id(), who, key, SideChoice::Left, left, {}});
  EXPECT_ERRC(c->submit_judgment({c->id(), who, key, SideChoice::Right, left, {}}), Errc::DuplicateJudgment);
  EXPECT_EQ(c->progress().completed_assignments, 1u);
}

TEST_F(CampaignFixture, SidesTranslateToImages) {
  auto c = make();
  const auto key = c->pair_keys().front();
  const auto parts = split_key(key);
  int expect_a = 0;
  for (const auto& who : c->assigned(key)) {
    const auto left = *c->presented_left(key, who);
    const auto r = c->submit_judgment({c->id(), who, key, SideChoice::Left, left, {}});
    expect_a += left == parts.a;
    EXPECT_EQ(r.tally.v_a, expect_a);
  }
  const auto t = c->tallies().front();
  EXPECT_EQ(t.v_a + t.v_b, 15);
  EXPECT_EQ(t.v_t, 0);
}

TEST_F(CampaignFixture, ConsensusFinalizes) {
  auto c = make();
  const auto key = c->pair_keys().front();
  auto r = fill(*c, key, 15, 0);
  EXPECT_EQ(r.status, PairStatus::finalized);
  ASSERT_TRUE(r.outcome);
  EXPECT_EQ(r.outcome->verdict, pref::Verdict::AWins);
  EXPECT_EQ(r.outcome->rule_fired, pref::Rule::StrongConsensus);
  EXPECT_EQ(c->pair_status(key), "finalized");
  EXPECT_ERRC(c->submit_arbitration(key, {"A", "A", "A"}), Errc::NotEscalated);
}

TEST_F(CampaignFixture, EscalationAndArbitration) {
  auto c = make();
  const auto key = c->pair_keys()[1];
  EXPECT_ERRC(c->submit_arbitration(key, {"A", "B", "Tie"}), Errc::NotEscalated);
  const auto r = fill(*c, key, 7, 7);
  EXPECT_EQ(r.status, PairStatus::escalated);
  EXPECT_EQ(c->escalations().size(), 1u);
  EXPECT_ERRC(c->submit_arbitration(key, {"A", "B"}), Errc::WrongPanelSize);
  const auto o = c->submit_arbitration(key, {"B", "B", "A"});
  EXPECT_EQ(o.verdict, pref::Verdict::BWins);
  EXPECT_EQ(o.rule_fired, pref::Rule::Arbitration);
  EXPECT_TRUE(c->escalations().empty());
  EXPECT_ERRC(c->submit_arbitration(key, {"B", "B", "A"}), Errc::NotEscalated);
}

TEST_F(CampaignFixture, RankingsNeedEveryPairFinal) {
  auto c = make();
  EXPECT_ERRC(c->rankings(), Errc::IncompleteTournament);
  // for every prompt: model-alpha > model-beta > model-gamma
  const auto model = c->model_of_image();
  for (const auto& key : c->pair_keys()) {
    const auto parts = split_key(key);
    const bool a_better = model.at(parts.a) < model.at(parts.b);
    fill(*c, key, a_better ? 15 : 0, a_better ? 0 : 15);
  }
  const auto lb = c->leaderboard();
  EXPECT_EQ(lb.models.at("model-alpha").ordinal, 1);
  EXPECT_EQ(lb.models.at("model-beta").ordinal, 2);
  EXPECT_EQ(lb.models.at("model-gamma").ordinal, 3);
  EXPECT_EQ(lb.models.at("model-alpha").first_place_count, 2);
  EXPECT_DOUBLE_EQ(lb.models.at("model-gamma").average_rank, 3.0);
}

// ---- event log

TEST_F(CampaignFixture, CreateRefusesExistingLogAndOpenNeedsOne) {
  const auto spec = schedule_campaign("c1", bench, roster(15), 15, 1);
  Campaign::create(spec, dir / "x.jsonl");
  EXPECT_ERRC(Campaign::create(spec, dir / "x.jsonl"), Errc::IoError);
  EXPECT_ERRC(Campaign::open(dir / "missing.jsonl"), Errc::CampaignNotFound);
}

namespace {

/// Random judgments (and arbitrations of anything escalated) for a campaign.
void random_activity(Campaign& c, std::mt19937_64& rng, int judgments) {
  const auto keys = c.pair_keys();
  for (int n = 0; n < judgments; ++n) {
    const auto& key = keys[rng() % keys.size()];
    for (const auto& who : c.assigned(key)) {
      if (c.presented_left(key, who) && c.pair_status(key) == "open") {
        try {
          vote(c, key, who, static_cast<Choice>(rng() % 3));
          break;
        } catch (const Error& e) {
          if (e.code() != Errc::DuplicateJudgment) throw;
        }
      }
    }
  }
  for (const auto& t : c.escalations())
    if (rng() % 2) c.submit_arbitration(pair_key(t.prompt_id, t.image_a_hash, t.image_b_hash), {"A", "Tie", "B"});
}

}  // namespace

TEST_F(CampaignFixture, ReplayReproducesStateAcrossSeeds) {
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    const auto log = dir / ("replay-" + std::to_string(seed) + ".jsonl");
    std::string digest;
    {
      auto c = Campaign::create(schedule_campaign("c" + std::to_string(seed), bench, roster(15 + seed % 5), 15, seed), log);
      std::mt19937_64 rng(seed);
      random_activity(*c, rng, 40 + static_cast<int>(seed % 3) * 20);
      digest = c->state_digest();
    }
    auto reopened = Campaign::open(log);
    EXPECT_EQ(reopened->state_digest(), digest) << "seed " << seed;

    // torn tail: a partial record after a crash is dropped
    const auto size = fs::file_size(log);
    {
      std::ofstream f(log, std::ios::app | std::ios::binary);
      f << R"({"type":"judgment","annotator_id":"ann0)";
    }
    auto recovered = Campaign::open(log);
    EXPECT_EQ(recovered->state_digest(), digest) << "seed " << seed;
    EXPECT_EQ(fs::file_size(log), size);
  }
}

TEST_F(CampaignFixture, ReplayContinuesAppending) {
  const auto log = dir / "cont.jsonl";
  const auto spec = schedule_campaign("c1", bench, roster(15), 15, 3);
  const auto key = Campaign::create(spec, log)->pair_keys().front();
  {
    auto c = Campaign::open(log);
    fill(*c, key, 0, 15);
  }
  auto c = Campaign::open(log);
  EXPECT_EQ(c->pair_status(key), "finalized");
  EXPECT_EQ(c->tallies().front().v_b, 15);
  EXPECT_ERRC(vote(*c, key, c->assigned(key).front(), Choice::A), Errc::DuplicateJudgment);
}

TEST_F(CampaignFixture, CorruptMiddleRecordIsAnError) {
  const auto log = dir / "bad.jsonl";
  {
    auto c = Campaign::create(schedule_campaign("c1", bench, roster(15), 15, 3), log);
    const auto key = c->pair_keys().front();
    vote(*c, key, c->assigned(key)[0], Choice::A);
  }
  auto text = read_file_bytes(log);
  text.insert(text.find('\n') + 1, "{not json\n");
  write_file_atomic(log, text);
  EXPECT_ERRC(Campaign::open(log), Errc::ParseError);
}

// ---- HTTP API

namespace {

struct ServiceFixture : ::testing::Test {
  void SetUp() override {
    bench = tit::testing::make_benchmark(dir / "bench", 2);
    auto c = Campaign::create(schedule_campaign("camp", bench, roster(15), 15, 5), dir / "camp.jsonl");
    campaign = c.get();
    service = std::make_unique<AnnotationService>(dir / "bench" / "images");
    service->add_campaign(std::move(c));
    port = service->bind_any();
    thread = std::thread([this] { service->serve(); });
    service->wait_until_ready();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  void TearDown() override {
    service->stop();
    thread.join();
  }
  nlohmann::json get(const std::string& path, int expect = 200) {
    auto res = client->Get(path);
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, expect) << res->body;
    return nlohmann::json::parse(res->body);
  }
  nlohmann::json post(const std::string& path, const nlohmann::json& body, int expect = 200) {
    auto res = client->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, expect) << res->body;
    return nlohmann::json::parse(res->body);
  }

  TempDir dir;
  BenchmarkSet bench;
  Campaign* campaign = nullptr;
  std::unique_ptr<AnnotationService> service;
  int port = 0;
  std::thread thread;
  std::unique_ptr<httplib::Client> client;
};

}  // namespace

TEST_F(ServiceFixture, ProgressStartsAtZero) {
  const auto j = get("/api/campaigns/camp/progress");
  EXPECT_EQ(j.at("progress").at("completed"), 0);
  EXPECT_EQ(j.at("progress").at("total"), 90);
  EXPECT_EQ(j.at("progress").at("total_pairs"), 6);
  EXPECT_EQ(j.at("schema_version"), kSchemaVersion);
  const auto a = get("/api/campaigns/camp/progress?annotator=ann00");
  EXPECT_EQ(a.at("annotator").at("done"), 0);
}

TEST_F(ServiceFixture, UnknownCampaignIsProblemDetail) {
  const auto j = get("/api/campaigns/nope/progress", 404);
  EXPECT_EQ(j.at("code"), "CampaignNotFound");
  EXPECT_TRUE(j.contains("message"));
  EXPECT_EQ(j.at("context").at("campaign_id"), "nope");
  post("/api/judgments", {{"campaign_id", "nope"}, {"annotator_id", "ann00"}, {"pair_key", "x"},
                          {"choice", "Left"}, {"presented_left", "x"}},
       404);
}

TEST_F(ServiceFixture, TaskHidesModelIdentity) {
  const auto j = get("/api/campaigns/camp/next?annotator=ann01");
  ASSERT_EQ(j.at("status"), "task");
  const auto dump = j.dump();
  for (const auto& m : tit::testing::fixture_models()) EXPECT_EQ(dump.find(m), std::string::npos);
  EXPECT_EQ(dump.find("model_id"), std::string::npos);
  const auto& task = j.at("task");
  EXPECT_EQ(task.at("presented_left"), task.at("left").at("content_hash"));
  EXPECT_FALSE(task.at("prompt_text").get<std::string>().empty());
  EXPECT_EQ(j.at("progress").at("done"), 0);
}

TEST_F(ServiceFixture, JudgmentRoundTrip) {
  const auto task = get("/api/campaigns/camp/next?annotator=ann02").at("task");
  const nlohmann::json body{{"campaign_id", "camp"},
                            {"annotator_id", "ann02"},
                            {"pair_key", task.at("pair_key")},
                            {"choice", "Right"},
                            {"presented_left", task.at("presented_left")}};
  const auto r = post("/api/judgments", body);
  EXPECT_EQ(r.at("status"), "open");
  EXPECT_EQ(r.at("tally").at("v_a").get<int>() + r.at("tally").at("v_b").get<int>(), 1);
  const auto dup = post("/api/judgments", body, 409);
  EXPECT_EQ(dup.at("code"), "DuplicateJudgment");
  EXPECT_EQ(get("/api/campaigns/camp/progress").at("progress").at("completed"), 1);
  EXPECT_NE(get("/api/campaigns/camp/next?annotator=ann02").at("task").at("pair_key"), task.at("pair_key"));
}

TEST_F(ServiceFixture, AnnotatorFromHeader) {
  auto res = client->Get("/api/campaigns/camp/next", {{"X-Annotator-Id", "ann03"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(get("/api/campaigns/camp/next?annotator=intruder", 403).at("code"), "UnknownAnnotator");
  EXPECT_EQ(get("/api/campaigns/camp/next", 403).at("code"), "UnknownAnnotator");
}

TEST_F(ServiceFixture, MalformedAndInvalidRequests) {
  auto res = client->Post("/api/judgments", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  const auto task = get("/api/campaigns/camp/next?annotator=ann04").at("task");
  post("/api/judgments",
       {{"campaign_id", "camp"}, {"annotator_id", "ann04"}, {"pair_key", task.at("pair_key")},
        {"choice", "Sideways"}, {"presented_left", task.at("presented_left")}},
       400);
}

TEST_F(ServiceFixture, ArbitrationAndLeaderboard) {
  const auto keys = campaign->pair_keys();
  EXPECT_EQ(get("/api/campaigns/camp/leaderboard", 409).at("code"), "IncompleteTournament");
  post("/api/arbitrations", {{"campaign_id", "camp"}, {"pair_key", keys[0]}, {"verdicts", {"A", "A", "B"}}}, 409);
  for (std::size_t i = 0; i < keys.size(); ++i) fill(*campaign, keys[i], i == 0 ? 6 : 15, i == 0 ? 6 : 0);
  const auto esc = get("/api/campaigns/camp/escalations").at("escalations");
  ASSERT_EQ(esc.size(), 1u);
  EXPECT_EQ(esc[0].at("pair_key"), keys[0]);
  post("/api/arbitrations", {{"campaign_id", "camp"}, {"pair_key", keys[0]}, {"verdicts", {"A", "B"}}}, 422);
  const auto o = post("/api/arbitrations", {{"campaign_id", "camp"}, {"pair_key", keys[0]}, {"verdicts", {"Tie", "A", "B"}}});
  EXPECT_EQ(o.at("outcome").at("verdict"), "Tie");
  const auto lb = get("/api/campaigns/camp/leaderboard").at("leaderboard");
  EXPECT_EQ(lb.at("models").size(), 3u);
}

TEST_F(ServiceFixture, MediaRoute) {
  const auto& im = bench.images.front();
  auto res = client->Get("/media/" + im.content_hash);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(content_hash(res->body), im.content_hash);
  res = client->Get("/media/" + std::string(64, '0'));
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}
