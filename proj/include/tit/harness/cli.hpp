#pragma once

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "tit/annotation/campaign.hpp"
#include "tit/annotation/server.hpp"
#include "tit/core/benchmark.hpp"
#include "tit/core/error.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/core/text.hpp"
#include "tit/harness/aggregate.hpp"
#include "tit/harness/config.hpp"
#include "tit/harness/evaluate.hpp"
#include "tit/harness/prompt_forge.hpp"
#include "tit/harness/score.hpp"
#include "tit/preference/leaderboard.hpp"
#include "tit/stats/rank_metrics.hpp"

namespace tit::harness {

namespace cli_detail {

inline std::atomic<annotation::AnnotationService*> g_service{nullptr};

inline void on_signal(int) {
  if (auto* s = g_service.load()) s->stop();
}

inline void print_error(std::ostream& err, const Error& e) { err << json{{"error", e.to_json()}}.dump() << "\n"; }

inline std::map<Digest, std::string> model_map(const fs::path& benchmark) {
  return load_benchmark(benchmark).model_of_image();
}

}  // namespace cli_detail

/// Entry point of the titscore binary; returns the process exit code.
/// 0: success, 1: hard error, 2: usage error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"titscore: long-prompt text-to-image alignment harness"};
  app.require_subcommand(1);

  // ---- validate
  std::string v_benchmark;
  auto* validate = app.add_subcommand("validate", "Check a benchmark set: prompt admission, payloads, hashes");
  validate->add_option("--benchmark", v_benchmark, "Benchmark directory")->required();

  // ---- score
  std::string s_benchmark, s_profiles, s_cache, s_out;
  std::vector<std::string> s_metrics;
  std::optional<int> s_concurrency;
  std::optional<std::uint64_t> s_seed;
  int s_retry_length = 0;
  auto* score = app.add_subcommand("score", "Score every image of a benchmark under one or more metrics");
  score->add_option("--benchmark", s_benchmark, "Benchmark directory")->required();
  score->add_option("--profiles", s_profiles, "Model profiles file (TOML or JSON)")->required();
  score->add_option("--metric", s_metrics, "Metric id: tit, tit-llm, self-eval, lmm-direct (repeatable)")->required();
  score->add_option("--concurrency", s_concurrency, "Maximum in-flight requests");
  score->add_option("--cache-dir", s_cache, "Persistent cache directory");
  score->add_option("--out", s_out, "Output directory");
  score->add_option("--seed", s_seed, "Run seed");
  score->add_option("--retry-length", s_retry_length, "Extra caption requests when length is off target")
      ->check(CLI::Range(0, 2));

  // ---- evaluate
  std::vector<std::string> e_scores;
  std::string e_pairs, e_rankings, e_out, e_tie = "none";
  std::vector<double> e_alphas;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare metric scores with human preferences");
  evaluate_cmd->add_option("--scores,scores", e_scores, "Score files (scores.<metric>.jsonl)")->required();
  evaluate_cmd->add_option("--pairs", e_pairs, "Human preference pairs (JSONL)")->required();
  evaluate_cmd->add_option("--rankings", e_rankings, "Human per-prompt rankings (JSONL)")->required();
  evaluate_cmd->add_option("--out", e_out, "Directory for report.json");
  evaluate_cmd->add_option("--alpha", e_alphas, "Additional one-tailed significance level (repeatable)");
  evaluate_cmd->add_option("--tie-credit", e_tie, "Credit for predicted ties: none or half")
      ->check(CLI::IsMember({"none", "half"}));

  // ---- aggregate
  std::string a_tallies, a_arbs, a_out = "out";
  bool a_force = false;
  auto* aggregate = app.add_subcommand("aggregate", "Turn vote tallies into pair outcomes and per-prompt rankings");
  aggregate->add_option("--tallies", a_tallies, "Vote tallies (JSONL)")->required();
  aggregate->add_option("--arbitrations", a_arbs, "Expert verdicts for escalated pairs (JSONL)");
  aggregate->add_option("--out", a_out, "Output directory");
  aggregate->add_flag("--force-tie-unresolved", a_force, "Record unarbitrated escalations as ties");

  // ---- leaderboard
  std::string l_rankings, l_tallies, l_arbs, l_scores, l_leaderboard, l_benchmark, l_human, l_out;
  bool l_force = false;
  auto* leaderboard = app.add_subcommand("leaderboard", "Average per-prompt ranks into a model leaderboard");
  auto* l_src = leaderboard->add_option_group("source");
  l_src->add_option("--rankings", l_rankings, "Per-prompt rankings (JSONL)");
  l_src->add_option("--tallies", l_tallies, "Vote tallies (JSONL)");
  l_src->add_option("--scores", l_scores, "One metric's score file; ranks images by score");
  l_src->add_option("--leaderboard", l_leaderboard, "An existing leaderboard (JSON)");
  l_src->require_option(1);
  leaderboard->add_option("--arbitrations", l_arbs, "Expert verdicts, with --tallies");
  leaderboard->add_flag("--force-tie-unresolved", l_force, "With --tallies, record unarbitrated escalations as ties");
  leaderboard->add_option("--benchmark", l_benchmark, "Benchmark directory (image to model mapping)");
  leaderboard->add_option("--human-leaderboard", l_human, "Human leaderboard (JSON) for the SRCC row");
  leaderboard->add_option("--out", l_out, "Directory for leaderboard.json");

  // ---- significance
  std::int64_t g_n = 0;
  std::optional<double> g_z;
  std::vector<double> g_alphas;
  auto* significance = app.add_subcommand("significance", "Binomial-normal threshold for pairwise accuracy");
  significance->add_option("--n", g_n, "Number of pairs")->required();
  significance->add_option("--z", g_z, "One-tailed z value");
  significance->add_option("--alpha", g_alphas, "One-tailed significance level (repeatable)");

  // ---- serve
  std::string r_benchmark, r_campaign, r_log_dir = "campaigns", r_host = "127.0.0.1", r_ui;
  std::vector<std::string> r_roster;
  int r_port = 8080, r_panel = pref::kDefaultPanelSize;
  std::optional<std::uint64_t> r_seed;
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  serve->add_option("--benchmark", r_benchmark, "Benchmark directory (media and new campaigns)")->required();
  serve->add_option("--campaign", r_campaign, "Campaign id")->required();
  serve->add_option("--log-dir", r_log_dir, "Directory holding <campaign>.events.jsonl");
  serve->add_option("--roster", r_roster, "Annotator ids, for creating a campaign")->delimiter(',');
  serve->add_option("--panel", r_panel, "Votes per pair, for creating a campaign");
  serve->add_option("--seed", r_seed, "Schedule seed, for creating a campaign");
  serve->add_option("--host", r_host, "Bind address");
  serve->add_option("--port", r_port, "Port (0 picks a free one)");
  serve->add_option("--ui-dir", r_ui, "Static UI assets to serve at /");

  // ---- prompt-forge
  std::string f_theme, f_idea, f_check;
  auto* forge = app.add_subcommand("prompt-forge", "Emit the prompt-expansion template, or check a returned prompt");
  forge->add_option("--theme", f_theme, "Primary theme category")->required();
  forge->add_option("--idea", f_idea, "Core idea to expand");
  forge->add_option("--check", f_check, "File holding a returned prompt to validate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? 0 : 2;
  }

  try {
    if (*validate) {
      const auto b = load_benchmark(v_benchmark);
      const auto issues = validate_benchmark(b);
      json report{{"prompts", b.prompts.size()}, {"images", b.images.size()}, {"issues", json::array()}};
      for (const auto& i : issues)
        report["issues"].push_back({{"code", to_string(i.code)}, {"message", i.message}, {"context", i.context}});
      report["ok"] = issues.empty();
      out << report.dump(2) << "\n";
      return issues.empty() ? 0 : 1;
    }

    if (*score) {
      RunConfig cfg;
      cfg.benchmark = s_benchmark;
      cfg.profiles = s_profiles;
      cfg.metrics = s_metrics;
      cfg.retry_length = s_retry_length;
      RunOverrides o;
      o.concurrency = s_concurrency;
      if (!s_cache.empty()) o.cache_dir = s_cache;
      if (!s_out.empty()) o.out = s_out;
      o.seed = s_seed;
      gateway::RunDefaults file;
      try {
        file = gateway::load_profiles(cfg.profiles).run;
      } catch (const Error&) {
        // reported by run_score, which still writes the manifest
      }
      apply_precedence(cfg, o, file);
      const auto r = run_score(cfg);
      if (!r.ok) {
        err << json{{"error", r.manifest.value("error", json::object())}}.dump() << "\n";
        return 1;
      }
      for (const auto& p : r.outputs) out << p.string() << "\n";
      out << (cfg.out / "manifest.json").string() << "\n";
      return 0;
    }

    if (*evaluate_cmd) {
      EvaluateInputs in;
      std::vector<fs::path> files(e_scores.begin(), e_scores.end());
      in.scores = load_score_files(files);
      in.pairs = read_jsonl_as<stats::HumanPair>(e_pairs);
      in.human_rankings = read_jsonl_as<pref::Ranking>(e_rankings);
      in.tie_credit = e_tie == "half" ? stats::TieCredit::half : stats::TieCredit::none;
      in.extra_alphas = e_alphas;
      const auto report = evaluate(in);
      if (!e_out.empty()) {
        fs::create_directories(e_out);
        write_json(fs::path(e_out) / "report.json", report);
      }
      out << render_report_table(report);
      for (const auto& w : report.at("warnings")) err << "warning: " << w.get<std::string>() << "\n";
      return 0;
    }

    if (*aggregate) {
      const auto tallies = read_jsonl_as<pref::VoteTally>(a_tallies);
      std::map<ArbitrationKey, pref::ExpertVerdicts> arbs;
      if (!a_arbs.empty()) arbs = load_arbitrations(a_arbs);
      const auto r = aggregate_tallies(tallies, arbs, a_force);
      const fs::path dir = a_out;
      fs::create_directories(dir);
      write_jsonl(dir / "outcomes.jsonl", r.outcomes);
      if (!r.unresolved.empty()) {
        write_jsonl(dir / "unresolved.jsonl", r.unresolved);
        throw Error(Errc::MissingArbitration,
                    std::to_string(r.unresolved.size()) + " escalated pair(s) lack expert verdicts; see unresolved.jsonl",
                    {{"unresolved", r.unresolved.size()}});
      }
      write_jsonl(dir / "pairs.jsonl", human_pairs(r.outcomes));
      write_jsonl(dir / "rankings.jsonl", r.rankings);
      out << json{{"pairs", r.outcomes.size()}, {"prompts", r.rankings.size()}, {"forced_ties", r.forced}}.dump() << "\n";
      return 0;
    }

    if (*leaderboard) {
      pref::Leaderboard lb;
      if (!l_leaderboard.empty()) {
        lb = read_json(l_leaderboard).get<pref::Leaderboard>();
      } else {
        if (l_benchmark.empty())
          throw Error(Errc::ConfigError, "--benchmark is required to map images to models");
        std::vector<pref::Ranking> rankings;
        if (!l_rankings.empty()) {
          rankings = read_jsonl_as<pref::Ranking>(l_rankings);
        } else if (!l_tallies.empty()) {
          std::map<ArbitrationKey, pref::ExpertVerdicts> arbs;
          if (!l_arbs.empty()) arbs = load_arbitrations(l_arbs);
          const auto r = aggregate_tallies(read_jsonl_as<pref::VoteTally>(l_tallies), arbs, l_force);
          if (!r.unresolved.empty())
            throw Error(Errc::IncompleteTournament, "escalated pairs lack expert verdicts",
                        {{"unresolved", r.unresolved.size()}});
          rankings = r.rankings;
        } else {
          const auto scores = read_jsonl_as<ScoreRecord>(l_scores);
          rankings = rankings_from_scores(scores);
        }
        lb = pref::build_leaderboard(rankings, cli_detail::model_map(l_benchmark));
      }
      json doc = lb;
      if (!l_human.empty()) {
        const auto human = read_json(l_human).get<pref::Leaderboard>();
        doc["srcc_vs_human"] = pref::leaderboard_srcc(lb, human);
      }
      if (!l_out.empty()) {
        fs::create_directories(l_out);
        write_json(fs::path(l_out) / "leaderboard.json", doc);
      }
      for (const auto& id : lb.ordered()) {
        const auto& e = lb.models.at(id);
        char line[160];
        std::snprintf(line, sizeof line, "%3d  %-28s avg_rank %.3f  first %d\n", e.ordinal, id.c_str(), e.average_rank,
                      e.first_place_count);
        out << line;
      }
      if (doc.contains("srcc_vs_human")) {
        char line[64];
        std::snprintf(line, sizeof line, "SRCC vs human: %.3f\n", doc["srcc_vs_human"].get<double>());
        out << line;
      }
      return 0;
    }

    if (*significance) {
      std::vector<SignificanceLevel> levels;
      if (g_z) levels.push_back({0.0, *g_z});
      for (double a : g_alphas) levels.push_back({a, z_for_alpha(a)});
      if (levels.empty()) levels = default_levels();
      json rows = json::array();
      for (const auto& lvl : levels) {
        auto j = stats::to_json(stats::significance_threshold(g_n, lvl.z));
        if (lvl.alpha > 0) j["alpha"] = lvl.alpha;
        rows.push_back(j);
      }
      out << rows.dump(2) << "\n";
      return 0;
    }

    if (*serve) {
      const fs::path log = fs::path(r_log_dir) / (r_campaign + ".events.jsonl");
      std::unique_ptr<annotation::Campaign> campaign;
      if (fs::exists(log)) {
        campaign = annotation::Campaign::open(log);
      } else {
        if (r_roster.empty())
          throw Error(Errc::CampaignNotFound, "campaign '" + r_campaign + "' has no log and no --roster to create it",
                      {{"campaign_id", r_campaign}, {"log", log.string()}});
        const auto b = load_benchmark(r_benchmark);
        fs::create_directories(r_log_dir);
        campaign = annotation::Campaign::create(
            annotation::schedule_campaign(r_campaign, b, r_roster, r_panel, r_seed.value_or(0)), log);
      }
      annotation::AnnotationService service(fs::path(r_benchmark) / "images");
      service.add_campaign(std::move(campaign));
      if (!r_ui.empty() && !service.mount_ui(r_ui))
        throw Error(Errc::IoError, "cannot serve UI assets from " + r_ui, {{"path", r_ui}});
      int port = r_port;
      if (port == 0) port = service.bind_any(r_host);
      else service.bind(r_host, port);
      cli_detail::g_service = &service;
      std::signal(SIGINT, cli_detail::on_signal);
      std::signal(SIGTERM, cli_detail::on_signal);
      spdlog::info("annotation service for '{}' on http://{}:{}", r_campaign, r_host, port);
      out << json{{"host", r_host}, {"port", port}, {"campaign_id", r_campaign}}.dump() << std::endl;
      service.serve();
      cli_detail::g_service = nullptr;
      spdlog::info("annotation service stopped; event log is durable");
      return 0;
    }

    if (*forge) {
      if (!parse_theme(f_theme))
        throw Error(Errc::UnknownThemeCategory, "unknown theme category '" + f_theme + "'", {{"theme", f_theme}});
      if (f_check.empty()) {
        out << prompt_forge_template(f_theme, f_idea);
        return 0;
      }
      std::ifstream in(f_check, std::ios::binary);
      if (!in) throw Error(Errc::IoError, "cannot read " + f_check, {{"path", f_check}});
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      text = to_single_paragraph(text);
      const auto rec = inspect_prompt("candidate", text, {f_theme}, {});
      out << json{{"word_count", rec.word_count}, {"admitted", rec.admitted}, {"template_id", kPromptForgeTemplateId}}
                 .dump()
          << "\n";
      return rec.admitted ? 0 : 1;
    }
  } catch (const Error& e) {
    cli_detail::print_error(err, e);
    return 1;
  } catch (const std::exception& e) {
    cli_detail::print_error(err, Error(Errc::IoError, e.what()));
    return 1;
  }
  return 2;
}

}  // namespace tit::harness
