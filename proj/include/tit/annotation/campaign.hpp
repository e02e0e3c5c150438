#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "tit/core/benchmark.hpp"
#include "tit/core/error.hpp"
#include "tit/core/hash.hpp"
#include "tit/gateway/cache.hpp"
#include "tit/preference/aggregate.hpp"
#include "tit/preference/leaderboard.hpp"
#include "tit/preference/ranking.hpp"

namespace tit::annotation {

using json = nlohmann::json;
using pref::Choice;

enum class PairStatus { open, escalated, finalized };

inline std::string_view to_string(PairStatus s) {
  switch (s) {
    case PairStatus::open: return "open";
    case PairStatus::escalated: return "escalated";
    case PairStatus::finalized: return "finalized";
  }
  return "";
}

/// What the annotator clicked; resolved to A/B through the presented-left image.
enum class SideChoice { Left, Right, Tie };

inline SideChoice parse_side(std::string_view s) {
  if (s == "Left") return SideChoice::Left;
  if (s == "Right") return SideChoice::Right;
  if (s == "Tie") return SideChoice::Tie;
  throw Error(Errc::ParseError, "choice must be Left, Right or Tie, got '" + std::string(s) + "'");
}

inline std::string_view to_string(SideChoice s) {
  switch (s) {
    case SideChoice::Left: return "Left";
    case SideChoice::Right: return "Right";
    case SideChoice::Tie: return "Tie";
  }
  return "";
}

/// "<prompt_id>:<hash a>:<hash b>" with hash a < hash b.
inline std::string pair_key(const std::string& prompt_id, const Digest& a, const Digest& b) {
  return prompt_id + ":" + std::min(a, b) + ":" + std::max(a, b);
}

struct CampaignImage {
  Digest content_hash;
  std::string model_id;  // server side only; never sent to annotators
};

struct CampaignPrompt {
  std::string prompt_id;
  std::string text;
  std::vector<CampaignImage> images;  // sorted by hash
};

/// Immutable parameters of a campaign; first record of its event log.
struct CampaignSpec {
  std::string campaign_id;
  int panel_size = pref::kDefaultPanelSize;
  std::uint64_t seed = 0;
  std::vector<std::string> roster;  // sorted, unique
  std::vector<CampaignPrompt> prompts;
};

struct JudgmentEvent {
  std::string campaign_id;
  std::string annotator_id;
  std::string pair_key;
  SideChoice choice = SideChoice::Tie;
  Digest presented_left;
  std::string timestamp;
};

struct Task {
  std::string pair_key;
  std::string prompt_id;
  std::string prompt_text;
  Digest left;
  Digest right;
};

struct Progress {
  std::size_t total_pairs = 0;
  std::size_t open = 0;
  std::size_t escalated = 0;
  std::size_t finalized = 0;
  std::size_t total_assignments = 0;
  std::size_t completed_assignments = 0;
};

struct SubmitResult {
  pref::VoteTally tally;
  PairStatus status = PairStatus::open;
  std::optional<pref::PairOutcome> outcome;
};

// ---------------------------------------------------------------------------
// Deterministic randomness. std::shuffle and the standard distributions are
// implementation-defined, so replay across toolchains uses raw mt19937_64
// output only.

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  const auto h = composite_hash({std::to_string(seed), label});
  return std::stoull(h.substr(0, 16), nullptr, 16);
}

template <class T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace detail

/// Builds a campaign spec from a benchmark: every unordered image pair of
/// every prompt, judged by `panel_size` annotators.
inline CampaignSpec schedule_campaign(std::string campaign_id, const BenchmarkSet& benchmark,
                                      std::vector<std::string> roster, int panel_size, std::uint64_t seed) {
  std::sort(roster.begin(), roster.end());
  roster.erase(std::unique(roster.begin(), roster.end()), roster.end());
  if (panel_size < 1) throw Error(Errc::WrongPanelSize, "panel size must be positive", {{"panel_size", panel_size}});
  if (static_cast<int>(roster.size()) < panel_size)
    throw Error(Errc::RosterTooSmall,
                "roster has " + std::to_string(roster.size()) + " annotators, panel needs " + std::to_string(panel_size),
                {{"roster", roster.size()}, {"panel_size", panel_size}});
  CampaignSpec spec{std::move(campaign_id), panel_size, seed, std::move(roster), {}};
  for (const auto& p : benchmark.prompts) {
    CampaignPrompt cp{p.id, p.text, {}};
    for (const auto* im : benchmark.images_for(p.id)) cp.images.push_back({im->content_hash, im->model_id});
    std::sort(cp.images.begin(), cp.images.end(),
              [](const auto& a, const auto& b) { return a.content_hash < b.content_hash; });
    if (cp.images.size() < 2)
      throw Error(Errc::EmptyBenchmark, "prompt '" + p.id + "' has fewer than 2 images", {{"prompt_id", p.id}});
    spec.prompts.push_back(std::move(cp));
  }
  if (spec.prompts.empty()) throw Error(Errc::EmptyBenchmark, "benchmark has no prompts");
  return spec;
}

inline void to_json(json& j, const CampaignSpec& s) {
  json prompts = json::array();
  for (const auto& p : s.prompts) {
    json images = json::array();
    for (const auto& im : p.images) images.push_back({{"content_hash", im.content_hash}, {"model_id", im.model_id}});
    prompts.push_back({{"prompt_id", p.prompt_id}, {"text", p.text}, {"images", images}});
  }
  j = {{"campaign_id", s.campaign_id}, {"panel_size", s.panel_size}, {"seed", s.seed},
       {"roster", s.roster},           {"prompts", prompts}};
}

inline void from_json(const json& j, CampaignSpec& s) {
  s.campaign_id = j.at("campaign_id").get<std::string>();
  s.panel_size = j.at("panel_size").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.roster = j.at("roster").get<std::vector<std::string>>();
  s.prompts.clear();
  for (const auto& p : j.at("prompts")) {
    CampaignPrompt cp{p.at("prompt_id").get<std::string>(), p.at("text").get<std::string>(), {}};
    for (const auto& im : p.at("images"))
      cp.images.push_back({im.at("content_hash").get<std::string>(), im.at("model_id").get<std::string>()});
    s.prompts.push_back(std::move(cp));
  }
}

/// Live state of one annotation campaign. The event log is the source of
/// truth: state is a pure fold over its records, and every mutation is
/// appended (and flushed) before it is applied. Reads take a shared lock;
/// writes are serialized.
class Campaign {
 public:
  /// Starts a new campaign and writes its log header. Fails if the log exists.
  static std::unique_ptr<Campaign> create(const CampaignSpec& spec, const fs::path& log_path) {
    if (fs::exists(log_path) && fs::file_size(log_path) > 0)
      throw Error(Errc::IoError, "campaign log already exists: " + log_path.string(), {{"path", log_path.string()}});
    if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
    auto c = std::unique_ptr<Campaign>(new Campaign(spec, log_path));
    c->append({{"type", "campaign"}, {"schema_version", kSchemaVersion}, {"spec", spec}});
    return c;
  }

  /// Rebuilds state from an existing log. A torn final record (crash during
  /// a write) is truncated away; corruption anywhere else is an error.
  static std::unique_ptr<Campaign> open(const fs::path& log_path) {
    if (!fs::exists(log_path))
      throw Error(Errc::CampaignNotFound, "no campaign log at " + log_path.string(), {{"path", log_path.string()}});
    const auto data = read_file_bytes(log_path);
    std::vector<json> records;
    std::size_t pos = 0, good_end = 0;
    while (pos < data.size()) {
      const auto nl = data.find('\n', pos);
      const bool last = nl == std::string::npos;
      const auto line = data.substr(pos, last ? std::string::npos : nl - pos);
      json rec;
      bool ok = !last;
      if (ok) {
        try {
          rec = json::parse(line);
        } catch (const json::exception&) {
          ok = false;
        }
      }
      if (!ok) {
        const bool is_tail = last || data.find_first_not_of(" \r\n", nl + 1) == std::string::npos;
        if (!is_tail)
          throw Error(Errc::ParseError, "corrupt record in campaign log at byte " + std::to_string(pos),
                      {{"path", log_path.string()}, {"offset", pos}});
        break;
      }
      records.push_back(std::move(rec));
      pos = nl + 1;
      good_end = pos;
    }
    if (good_end < data.size()) fs::resize_file(log_path, good_end);
    if (records.empty() || records.front().value("type", "") != "campaign")
      throw Error(Errc::ParseError, "campaign log has no header record", {{"path", log_path.string()}});

    auto c = std::unique_ptr<Campaign>(new Campaign(records.front().at("spec").get<CampaignSpec>(), log_path));
    for (std::size_t i = 1; i < records.size(); ++i) c->apply(records[i]);
    c->seq_ = records.size();
    return c;
  }

  const CampaignSpec& spec() const { return spec_; }
  const std::string& id() const { return spec_.campaign_id; }

  /// The annotator's next unanswered assignment, or nullopt when exhausted.
  /// Stable under repeated calls until answered.
  std::optional<Task> next_pair(const std::string& annotator) const {
    std::shared_lock lock(mu_);
    const auto it = order_.find(annotator);
    if (it == order_.end()) throw unknown_annotator(annotator);
    for (const auto& [pair_index, slot] : it->second) {
      const auto& p = pairs_[pair_index];
      if (p.votes.count(annotator)) continue;
      const bool left_is_a = p.left_is_a[slot];
      return Task{p.key, p.prompt_id, prompt_text(p.prompt_id), left_is_a ? p.a : p.b, left_is_a ? p.b : p.a};
    }
    return std::nullopt;
  }

  SubmitResult submit_judgment(JudgmentEvent ev) {
    std::unique_lock lock(mu_);
    if (ev.timestamp.empty()) ev.timestamp = gateway::utc_timestamp();
    json rec{{"type", "judgment"},
             {"annotator_id", ev.annotator_id},
             {"pair_key", ev.pair_key},
             {"choice", std::string(to_string(ev.choice))},
             {"presented_left", ev.presented_left},
             {"timestamp", ev.timestamp}};
    if (!ev.campaign_id.empty() && ev.campaign_id != spec_.campaign_id)
      throw Error(Errc::CampaignNotFound, "judgment addressed to campaign '" + ev.campaign_id + "'",
                  {{"campaign_id", ev.campaign_id}});
    validate_judgment(rec);
    rec["seq"] = seq_;
    append(rec);
    apply_judgment(rec);
    const auto& p = pairs_[index_.at(ev.pair_key)];
    return {p.tally, p.status, p.outcome};
  }

  pref::PairOutcome submit_arbitration(const std::string& key, const json& verdicts) {
    std::unique_lock lock(mu_);
    json rec{{"type", "arbitration"}, {"pair_key", key}, {"verdicts", verdicts}, {"timestamp", gateway::utc_timestamp()}};
    validate_arbitration(rec);
    rec["seq"] = seq_;
    append(rec);
    apply_arbitration(rec);
    return *pairs_[index_.at(key)].outcome;
  }

  Progress progress() const {
    std::shared_lock lock(mu_);
    Progress pr;
    pr.total_pairs = pairs_.size();
    for (const auto& p : pairs_) {
      switch (p.status) {
        case PairStatus::open: ++pr.open; break;
        case PairStatus::escalated: ++pr.escalated; break;
        case PairStatus::finalized: ++pr.finalized; break;
      }
      pr.total_assignments += p.assigned.size();
      pr.completed_assignments += p.votes.size();
    }
    return pr;
  }

  /// (done, total) assignments for one annotator.
  std::pair<std::size_t, std::size_t> annotator_progress(const std::string& annotator) const {
    std::shared_lock lock(mu_);
    const auto it = order_.find(annotator);
    if (it == order_.end()) throw unknown_annotator(annotator);
    std::size_t done = 0;
    for (const auto& [pair_index, slot] : it->second) done += pairs_[pair_index].votes.count(annotator);
    return {done, it->second.size()};
  }

  std::vector<pref::VoteTally> escalations() const {
    std::shared_lock lock(mu_);
    std::vector<pref::VoteTally> out;
    for (const auto& p : pairs_)
      if (p.status == PairStatus::escalated) out.push_back(p.tally);
    return out;
  }

  std::vector<pref::VoteTally> tallies() const {
    std::shared_lock lock(mu_);
    std::vector<pref::VoteTally> out;
    for (const auto& p : pairs_) out.push_back(p.tally);
    return out;
  }

  /// Outcomes of pairs that have one (finalized or escalated).
  std::vector<pref::PairOutcome> outcomes() const {
    std::shared_lock lock(mu_);
    std::vector<pref::PairOutcome> out;
    for (const auto& p : pairs_)
      if (p.outcome) out.push_back(*p.outcome);
    return out;
  }

  std::string pair_status(const std::string& key) const {
    std::shared_lock lock(mu_);
    return std::string(to_string(pair_at(key).status));
  }

  /// Hash of tallies, statuses, outcomes and per-annotator votes, in schedule
  /// order. Timestamps are excluded.
  std::string state_digest() const {
    std::shared_lock lock(mu_);
    json state = json::array();
    for (const auto& p : pairs_) {
      json votes = json::object();
      for (const auto& [who, c] : p.votes) votes[who] = std::string(pref::to_string(c));
      json entry{{"key", p.key}, {"tally", p.tally}, {"status", std::string(to_string(p.status))}, {"votes", votes}};
      if (p.outcome) entry["outcome"] = *p.outcome;
      state.push_back(std::move(entry));
    }
    return content_hash(json{{"campaign_id", spec_.campaign_id}, {"pairs", state}}.dump());
  }

  std::map<Digest, std::string> model_of_image() const {
    std::map<Digest, std::string> m;
    for (const auto& p : spec_.prompts)
      for (const auto& im : p.images) m[im.content_hash] = im.model_id;
    return m;
  }

  /// Per-prompt rankings; requires every pair to be finalized.
  std::vector<pref::Ranking> rankings() const {
    std::shared_lock lock(mu_);
    std::vector<pref::Ranking> out;
    std::map<std::string, std::vector<pref::PairOutcome>> by_prompt;
    nlohmann::json pending = nlohmann::json::array();
    for (const auto& p : pairs_) {
      if (p.status != PairStatus::finalized) pending.push_back(p.key);
      else by_prompt[p.prompt_id].push_back(*p.outcome);
    }
    if (!pending.empty())
      throw Error(Errc::IncompleteTournament, std::to_string(pending.size()) + " pair(s) are not finalized",
                  {{"pending", pending.size()}});
    for (const auto& cp : spec_.prompts) {
      std::vector<Digest> hashes;
      for (const auto& im : cp.images) hashes.push_back(im.content_hash);
      out.push_back(pref::rank_from_pairwise(cp.prompt_id, by_prompt[cp.prompt_id], hashes));
    }
    return out;
  }

  pref::Leaderboard leaderboard() const { return pref::build_leaderboard(rankings(), model_of_image()); }

  /// Presented-left image of an assignment, for clients and tests.
  std::optional<Digest> presented_left(const std::string& key, const std::string& annotator) const {
    std::shared_lock lock(mu_);
    const auto& p = pair_at(key);
    for (std::size_t s = 0; s < p.assigned.size(); ++s)
      if (p.assigned[s] == annotator) return p.left_is_a[s] ? p.a : p.b;
    return std::nullopt;
  }

  std::vector<std::string> pair_keys() const {
    std::vector<std::string> out;
    for (const auto& p : pairs_) out.push_back(p.key);
    return out;
  }

  /// Annotators assigned to a pair, in slot order.
  std::vector<std::string> assigned(const std::string& key) const { return pair_at(key).assigned; }

 private:
  struct PairState {
    std::string key;
    std::string prompt_id;
    Digest a, b;
    std::vector<std::string> assigned;
    std::vector<bool> left_is_a;  // per slot
    std::map<std::string, Choice> votes;
    pref::VoteTally tally;
    PairStatus status = PairStatus::open;
    std::optional<pref::PairOutcome> outcome;
  };

  Campaign(CampaignSpec spec, fs::path log_path) : spec_(std::move(spec)), log_path_(std::move(log_path)) {
    build_schedule();
  }

  void build_schedule() {
    const auto& roster = spec_.roster;
    const auto panel = static_cast<std::size_t>(spec_.panel_size);
    if (roster.size() < panel)
      throw Error(Errc::RosterTooSmall, "roster smaller than panel", {{"roster", roster.size()}, {"panel_size", panel}});
    std::mt19937_64 rng(detail::derive_seed(spec_.seed, "schedule"));
    const std::size_t offset = roster.size() == panel ? 0 : rng() % roster.size();
    for (const auto& cp : spec_.prompts) {
      for (std::size_t i = 0; i < cp.images.size(); ++i) {
        for (std::size_t j = i + 1; j < cp.images.size(); ++j) {
          PairState p;
          p.prompt_id = cp.prompt_id;
          p.a = cp.images[i].content_hash;
          p.b = cp.images[j].content_hash;
          p.key = pair_key(p.prompt_id, p.a, p.b);
          const std::size_t g = pairs_.size();
          for (std::size_t s = 0; s < panel; ++s) p.assigned.push_back(roster[(offset + g * panel + s) % roster.size()]);
          // Alternate sides over slots from a random start, then shuffle which
          // annotator gets which slot: every pair splits its panel as evenly
          // as possible between the two presentations.
          const std::size_t flip = rng() & 1U;
          for (std::size_t s = 0; s < panel; ++s) p.left_is_a.push_back((s + flip) % 2 == 0);
          detail::seeded_shuffle(p.assigned, rng);
          p.tally = {p.prompt_id, p.a, p.b, 0, 0, 0, spec_.panel_size};
          index_[p.key] = g;
          pairs_.push_back(std::move(p));
        }
      }
    }
    for (std::size_t g = 0; g < pairs_.size(); ++g)
      for (std::size_t s = 0; s < pairs_[g].assigned.size(); ++s) order_[pairs_[g].assigned[s]].emplace_back(g, s);
    for (const auto& who : roster) {
      auto& list = order_[who];
      std::mt19937_64 r(detail::derive_seed(spec_.seed, "order:" + who));
      detail::seeded_shuffle(list, r);
    }
  }

  const std::string& prompt_text(const std::string& prompt_id) const {
    for (const auto& p : spec_.prompts)
      if (p.prompt_id == prompt_id) return p.text;
    throw Error(Errc::KeyMismatch, "unknown prompt", {{"prompt_id", prompt_id}});
  }

  const PairState& pair_at(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw Error(Errc::UnassignedPair, "unknown pair '" + key + "'", {{"pair_key", key}});
    return pairs_[it->second];
  }

  Error unknown_annotator(const std::string& who) const {
    return Error(Errc::UnknownAnnotator, "annotator '" + who + "' is not on the roster",
                 {{"annotator_id", who}, {"campaign_id", spec_.campaign_id}});
  }

  void append(const json& rec) {
    const auto line = rec.dump() + "\n";
    std::FILE* f = std::fopen(log_path_.c_str(), "ab");
    if (f == nullptr) throw Error(Errc::IoError, "cannot open campaign log " + log_path_.string());
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0;
    ::fsync(::fileno(f));
    std::fclose(f);
    if (!ok) throw Error(Errc::IoError, "write to campaign log failed", {{"path", log_path_.string()}});
    ++seq_;
  }

  void apply(const json& rec) {
    const auto type = rec.value("type", "");
    if (type == "judgment") {
      validate_judgment(rec);
      apply_judgment(rec);
    } else if (type == "arbitration") {
      validate_arbitration(rec);
      apply_arbitration(rec);
    } else {
      throw Error(Errc::ParseError, "unknown campaign log record type '" + type + "'");
    }
  }

  void validate_judgment(const json& rec) const {
    const auto who = rec.at("annotator_id").get<std::string>();
    if (!order_.count(who)) throw unknown_annotator(who);
    const auto key = rec.at("pair_key").get<std::string>();
    const auto& p = pair_at(key);
    const auto slot = std::find(p.assigned.begin(), p.assigned.end(), who);
    if (slot == p.assigned.end())
      throw Error(Errc::UnassignedPair, "pair is not assigned to annotator '" + who + "'",
                  {{"pair_key", key}, {"annotator_id", who}});
    if (p.votes.count(who))
      throw Error(Errc::DuplicateJudgment, "annotator '" + who + "' already judged this pair",
                  {{"pair_key", key}, {"annotator_id", who}});
    const bool left_is_a = p.left_is_a[static_cast<std::size_t>(slot - p.assigned.begin())];
    const auto left = rec.at("presented_left").get<std::string>();
    if (left != (left_is_a ? p.a : p.b))
      throw Error(Errc::UnassignedPair, "presented_left does not match the assignment",
                  {{"pair_key", key}, {"annotator_id", who}, {"presented_left", left}});
    (void)parse_side(rec.at("choice").get<std::string>());
  }

  void apply_judgment(const json& rec) {
    auto& p = pairs_[index_.at(rec.at("pair_key").get<std::string>())];
    const auto side = parse_side(rec.at("choice").get<std::string>());
    const bool left_is_a = rec.at("presented_left").get<std::string>() == p.a;
    Choice c = Choice::Tie;
    if (side == SideChoice::Left) c = left_is_a ? Choice::A : Choice::B;
    if (side == SideChoice::Right) c = left_is_a ? Choice::B : Choice::A;
    p.votes[rec.at("annotator_id").get<std::string>()] = c;
    ++(c == Choice::A ? p.tally.v_a : c == Choice::B ? p.tally.v_b : p.tally.v_t);
    if (p.tally.votes() == p.tally.panel_size) {
      p.outcome = pref::aggregate_pair(p.tally);
      p.status = p.outcome->verdict == pref::Verdict::Escalated ? PairStatus::escalated : PairStatus::finalized;
    }
  }

  void validate_arbitration(const json& rec) const {
    const auto key = rec.at("pair_key").get<std::string>();
    const auto& p = pair_at(key);
    if (p.status != PairStatus::escalated)
      throw Error(Errc::NotEscalated, "pair is " + std::string(to_string(p.status)) + ", not escalated",
                  {{"pair_key", key}, {"status", std::string(to_string(p.status))}});
    (void)pref::parse_expert_verdicts(rec.at("verdicts"));
  }

  void apply_arbitration(const json& rec) {
    auto& p = pairs_[index_.at(rec.at("pair_key").get<std::string>())];
    p.outcome = pref::aggregate_pair(p.tally, pref::parse_expert_verdicts(rec.at("verdicts")));
    p.status = PairStatus::finalized;
  }

  CampaignSpec spec_;
  fs::path log_path_;
  mutable std::shared_mutex mu_;
  std::vector<PairState> pairs_;
  std::map<std::string, std::size_t> index_;
  // annotator -> (pair index, slot) in presentation order
  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> order_;
  std::size_t seq_ = 0;
};

}  // namespace tit::annotation
